use rand::seq::SliceRandom;

use super::manifest::Split;
use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.6, 0.1, 0.3);

/// Sizes from largest-remainder rounding of `n · ratio`. Ties on the
/// fractional part go to the earlier split.
pub fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> Result<[usize; 3]> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must be in [0,1] and sum to 1, got {r:?}")));
    }
    let quotas: Vec<f64> = r.iter().map(|&x| x * n as f64).collect();
    // Snap values that are integers up to rounding noise (3170 · 0.6 etc.).
    let mut sizes: Vec<usize> = quotas.iter().map(|&q| (q + 1e-9).floor() as usize).collect();
    let mut rest = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - sizes[a] as f64;
        let fb = quotas[b] - sizes[b] as f64;
        fb.partial_cmp(&fa).expect("finite").then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[i] += 1;
        rest -= 1;
    }
    Ok([sizes[0], sizes[1], sizes[2]])
}

/// Seeded shuffle, then train/val/test partition by ratio.
pub fn split_dataset(n_records: usize, ratios: (f64, f64, f64), seed: u64) -> Result<Vec<Split>> {
    if n_records < 3 {
        return Err(Error::Config(format!("need at least 3 records to split, got {n_records}")));
    }
    let [train, val, _] = split_sizes(n_records, ratios)?;
    let mut order: Vec<usize> = (0..n_records).collect();
    order.shuffle(&mut rng_for(seed, "split"));
    let mut out = vec![Split::Test; n_records];
    for (pos, &idx) in order.iter().enumerate() {
        out[idx] = if pos < train {
            Split::Train
        } else if pos < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}
