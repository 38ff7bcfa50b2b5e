use rand::Rng;
use viref::diffcore::{
    finite_difference_check, AffineStack, Dropout, Graph, LayerInput, LstmStack, NodeId, ParameterStore, Tensor,
};
use viref::seed::rng_for;
use viref::{Error, Result};

const TOL: f64 = 1e-5;

fn random_store(specs: &[(&str, &[usize])], seed: u64) -> ParameterStore<f64> {
    let mut rng = rng_for(seed, "diffcore-test");
    let mut s = ParameterStore::new();
    for (name, shape) in specs {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        s.insert(*name, Tensor::new(shape.to_vec(), data).unwrap(), true).unwrap();
    }
    s
}

/// Random linear readout so no output coordinate shares a gradient by symmetry.
fn readout(g: &mut Graph<'_, f64>, x: NodeId, seed: u64) -> Result<NodeId> {
    let mut rng = rng_for(seed, "readout");
    let r = (0..g.len_of(x)).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r = g.constant(r);
    let p = g.mul(x, r)?;
    Ok(g.sum(p))
}

fn check<F>(forward: F, store: &ParameterStore<f64>)
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    let r = finite_difference_check(forward, store, 1e-5).unwrap();
    assert!(
        r.max_rel_error < TOL,
        "max rel error {} at {}[{}]: analytic {} numeric {}",
        r.max_rel_error,
        r.worst_param,
        r.worst_index,
        r.analytic,
        r.numeric
    );
}

#[test]
fn sum_of_param_has_unit_gradient() {
    let s = random_store(&[("w", &[3, 2])], 1);
    let mut g = Graph::new(&s);
    let w = g.param("w").unwrap();
    let l = g.sum(w);
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get("w").unwrap().data(), &[1.0; 6]);
}

#[test]
fn constant_loss_has_zero_gradient() {
    let s = random_store(&[("w", &[4])], 2);
    let mut g = Graph::new(&s);
    let _ = g.param("w").unwrap();
    let c = g.constant(vec![3.0]);
    let grads = g.backward(c).unwrap();
    assert_eq!(grads.get("w").unwrap().data(), &[0.0; 4]);
}

#[test]
fn backward_needs_scalar() {
    let s = random_store(&[("w", &[4])], 3);
    let mut g = Graph::new(&s);
    let w = g.param("w").unwrap();
    assert!(matches!(g.backward(w), Err(Error::Contract(_))));
}

#[test]
fn elementwise_ops() {
    let s = random_store(&[("a", &[5]), ("b", &[5])], 4);
    check(
        |g| {
            let a = g.param("a")?;
            let b = g.param("b")?;
            let s1 = g.sigmoid(a);
            let t = g.tanh(b);
            let m = g.mul(s1, t)?;
            let r = g.relu(a);
            let sc = g.scale(r, 1.7);
            let sum = g.add(m, sc)?;
            let c = g.concat(&[sum, a]);
            let sl = g.slice(c, 2, 6)?;
            readout(g, sl, 1)
        },
        &s,
    );
}

#[test]
fn affine_and_stack() {
    let s = {
        let mut s = random_store(&[("x", &[4]), ("w", &[4, 3]), ("b", &[3])], 5);
        let stack = AffineStack::new("fc", 3, &[5, 4, 2]).unwrap();
        stack.init_params(&mut s, &mut rng_for(5, "init")).unwrap();
        s
    };
    check(
        |g| {
            let x = g.param("x")?;
            let w = g.param("w")?;
            let b = g.param("b")?;
            let y = g.affine(x, w, Some(b), "test")?;
            let stack = AffineStack::new("fc", 3, &[5, 4, 2]).unwrap();
            let out = stack.forward(g, y, &mut Dropout::eval())?;
            readout(g, out, 2)
        },
        &s,
    );
}

#[test]
fn softmax_and_cross_entropy() {
    let s = random_store(&[("l0", &[6]), ("l1", &[6]), ("l2", &[6])], 6);
    check(
        |g| {
            let l0 = g.param("l0")?;
            let sm = g.softmax(l0);
            readout(g, sm, 3)
        },
        &s,
    );
    check(
        |g| {
            let ls = [g.param("l0")?, g.param("l1")?, g.param("l2")?];
            g.cross_entropy(&ls, &[1, 4, 0], &[true, false, true])
        },
        &s,
    );
}

#[test]
fn masked_steps_get_no_gradient() {
    let s = random_store(&[("l0", &[6]), ("l1", &[6])], 7);
    let mut g = Graph::new(&s);
    let ls = [g.param("l0").unwrap(), g.param("l1").unwrap()];
    let loss = g.cross_entropy(&ls, &[2, 3], &[true, false]).unwrap();
    let grads = g.backward(loss).unwrap();
    assert!(grads.get("l1").unwrap().data().iter().all(|&v| v == 0.0));
    assert!(matches!(
        g.cross_entropy(&ls, &[2, 3], &[false, false]),
        Err(Error::DegenerateBatch(_))
    ));
}

#[test]
fn gather_rows() {
    let s = random_store(&[("table", &[5, 3])], 8);
    check(
        |g| {
            let t = g.param("table")?;
            let a = g.gather(t, 1, 3)?;
            let b = g.gather(t, 4, 3)?;
            let c = g.gather(t, 1, 3)?;
            let ab = g.mul(a, b)?;
            let s = g.add(ab, c)?;
            readout(g, s, 4)
        },
        &s,
    );
}

#[test]
fn segment_ops() {
    let s = random_store(&[("x", &[10]), ("w", &[10, 3]), ("a", &[5])], 9);
    check(
        |g| {
            let x = g.param("x")?;
            let a = g.param("a")?;
            let scaled = g.scale_segments(x, a)?;
            readout(g, scaled, 5)
        },
        &s,
    );
    check(
        |g| {
            let x = g.param("x")?;
            let w = g.param("w")?;
            let a = g.param("a")?;
            let p = g.segment_project(x, w, 5)?;
            let y = g.weighted_segment_sum(p, a)?;
            readout(g, y, 6)
        },
        &s,
    );
}

#[test]
fn projection_shortcut_equals_scaled_affine() {
    let s = random_store(&[("x", &[10]), ("w", &[10, 3]), ("a", &[5])], 10);
    let mut g = Graph::new(&s);
    let (x, w, a) = (g.param("x").unwrap(), g.param("w").unwrap(), g.param("a").unwrap());
    let p = g.segment_project(x, w, 5).unwrap();
    let short = g.weighted_segment_sum(p, a).unwrap();
    let scaled = g.scale_segments(x, a).unwrap();
    let direct = g.affine(scaled, w, None, "direct").unwrap();
    for (u, v) in g.value(short).iter().zip(g.value(direct)) {
        assert!((u - v).abs() < 1e-14);
    }
}

#[test]
fn lstm_stack_raw_and_projected() {
    let stack = LstmStack::new("enc", 2, 3, 4).unwrap();
    let mut s = random_store(&[("x0", &[3]), ("x1", &[3]), ("p", &[16]), ("s0", &[8]), ("s1", &[8])], 11);
    stack.init_params(&mut s, &mut rng_for(11, "init")).unwrap();
    check(
        |g| {
            let xs = [g.param("x0")?, g.param("x1")?];
            let init = [g.param("s0")?, g.param("s1")?];
            let (outs, fin) = stack.forward(g, &xs, &init, &mut Dropout::eval())?;
            let all = g.concat(&[outs[0], outs[1], fin[0], fin[1]]);
            readout(g, all, 7)
        },
        &s,
    );
    check(
        |g| {
            let p = g.param("p")?;
            let init = [g.param("s0")?, g.param("s1")?];
            let next = stack.step(g, LayerInput::Projected(p), &init, &mut Dropout::eval())?;
            let all = g.concat(&next);
            readout(g, all, 8)
        },
        &s,
    );
}

#[test]
fn fixed_dropout_mask_gradients() {
    let stack = LstmStack::new("dec", 3, 2, 3).unwrap();
    let mut s = random_store(&[("x", &[2]), ("s0", &[6]), ("s1", &[6]), ("s2", &[6])], 12);
    stack.init_params(&mut s, &mut rng_for(12, "init")).unwrap();
    check(
        |g| {
            let x = g.param("x")?;
            let init = [g.param("s0")?, g.param("s1")?, g.param("s2")?];
            // Same seed on every evaluation, so each perturbed pass sees the same masks.
            let mut d = Dropout::train(0.3, 99);
            let next = stack.step(g, LayerInput::Raw(x), &init, &mut d)?;
            let all = g.concat(&next);
            readout(g, all, 9)
        },
        &s,
    );
}

#[test]
fn eval_dropout_is_identity() {
    let s = random_store(&[("x", &[7])], 13);
    let mut g = Graph::new(&s);
    let x = g.param("x").unwrap();
    let y = Dropout::eval().apply(&mut g, x).unwrap();
    assert_eq!(x, y);
}

#[test]
fn train_dropout_scales_kept_units() {
    let s = random_store(&[("x", &[2000])], 14);
    let mut g = Graph::new(&s);
    let x = g.param("x").unwrap();
    let y = Dropout::train(0.2, 5).apply(&mut g, x).unwrap();
    let (xv, yv) = (g.value(x).to_vec(), g.value(y).to_vec());
    let mut dropped = 0;
    for (a, b) in xv.iter().zip(&yv) {
        if *b == 0.0 {
            dropped += 1;
        } else {
            assert!((b - a / 0.8).abs() < 1e-15);
        }
    }
    let frac = dropped as f64 / 2000.0;
    assert!((frac - 0.2).abs() < 0.04, "{frac}");
}
