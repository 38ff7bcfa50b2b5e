//! Second implementations of the metrics, written without the library's
//! helpers, used as test oracles.

fn grams(tokens: &[String], n: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= tokens.len() {
        out.push(tokens[i..i + n].join("\u{1}"));
        i += 1;
    }
    out
}

fn occurrences(list: &[String], g: &str) -> usize {
    list.iter().filter(|x| x.as_str() == g).count()
}

pub fn bleu4(candidate: &[String], references: &[Vec<String>]) -> f64 {
    let mut product = 1.0;
    for n in 1..=4 {
        let cg = grams(candidate, n);
        if cg.is_empty() {
            return 0.0;
        }
        let mut seen: Vec<&String> = Vec::new();
        let mut clipped = 0usize;
        for g in &cg {
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            let mut best = 0;
            for r in references {
                let c = occurrences(&grams(r, n), g);
                if c > best {
                    best = c;
                }
            }
            clipped += occurrences(&cg, g).min(best);
        }
        if clipped == 0 {
            return 0.0;
        }
        product *= clipped as f64 / cg.len() as f64;
    }
    let c = candidate.len() as i64;
    let mut r = references[0].len() as i64;
    for x in references {
        let l = x.len() as i64;
        if (l - c).abs() < (r - c).abs() || ((l - c).abs() == (r - c).abs() && l < r) {
            r = l;
        }
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * product.powf(0.25)
}

/// `(mAP, [rank-1, rank-2, rank-3])`.
pub fn retrieval(ranks: &[usize]) -> (f64, [f64; 3]) {
    let mut ap = 0.0;
    let mut hits = [0usize; 3];
    for &k in ranks {
        ap += 1.0 / k as f64;
        for (j, h) in hits.iter_mut().enumerate() {
            if k <= j + 1 {
                *h += 1;
            }
        }
    }
    let n = ranks.len() as f64;
    (ap / n, hits.map(|h| h as f64 / n))
}
