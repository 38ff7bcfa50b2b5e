use super::graph::GradientMap;
use super::params::ParameterStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter, aligned with the store order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParameterStore<T>) -> Self {
        Self {
            first: params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect(),
            second: params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &Tensor<T> {
        &self.first[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor<T> {
        &self.second[i]
    }
}

/// One bias-corrected Adam update of every trainable parameter. Shapes are all
/// checked before anything is modified.
pub fn adam_step<T: Scalar>(
    params: &mut ParameterStore<T>,
    grads: &GradientMap<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.first.len() != params.len() {
        return Err(Error::Contract(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (p, (name, g)) in params.iter().zip(grads.iter()) {
        if p.name != name {
            return Err(Error::Contract(format!("adam: gradient {name:?} does not match parameter {:?}", p.name)));
        }
        if p.tensor.shape() != g.shape() {
            return Err(Error::shape(format!("adam update of {name}"), p.tensor.shape(), g.shape()));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);

    for (i, (_, g)) in grads.iter().enumerate() {
        let p = params.entry_mut(i);
        if !p.trainable {
            continue;
        }
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (((w, &gv), mv), vv) in p.tensor.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = b1 * *mv + (T::one() - b1) * gv;
            *vv = b2 * *vv + (T::one() - b2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::graph::Graph;

    fn scalar_store(v: f64) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.insert("w", Tensor::vector(vec![v]), true).unwrap();
        s
    }

    fn grads_for(store: &ParameterStore<f64>, g: f64) -> GradientMap<f64> {
        let mut m = GradientMap::zeros_like(store);
        m.get_mut("w").unwrap().data_mut()[0] = g;
        m
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut s = scalar_store(1.25);
        let before = s.clone();
        let mut st = AdamState::new(&s);
        let z = GradientMap::zeros_like(&s);
        for _ in 0..5 {
            adam_step(&mut s, &z, &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(s, before);
        assert_eq!(st.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02, 1e3] {
            let mut s = scalar_store(0.0);
            let mut st = AdamState::new(&s);
            let grads = grads_for(&s, g);
            adam_step(&mut s, &grads, &mut st, &AdamConfig::default()).unwrap();
            let w = s.get("w").unwrap().data()[0];
            assert!((w + 1e-4 * f64::signum(g)).abs() < 1e-9, "g={g} w={w}");
        }
    }

    #[test]
    fn shape_mismatch_rejected_without_update() {
        let mut s = scalar_store(0.5);
        let before = s.clone();
        let mut st = AdamState::new(&s);
        let mut other = ParameterStore::new();
        other.insert("w", Tensor::vector(vec![0.0, 0.0]), true).unwrap();
        let bad = GradientMap::zeros_like(&other);
        assert!(adam_step(&mut s, &bad, &mut st, &AdamConfig::default()).is_err());
        assert_eq!(s, before);
        assert_eq!(st.step_count(), 0);
    }

    /// Independent scalar recurrence used as the oracle for the quadratic run.
    fn reference_adam(w0: f64, a: f64, c: f64, steps: usize, cfg: &AdamConfig) -> Vec<f64> {
        let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
        let mut out = vec![w];
        for t in 1..=steps {
            let g = 2.0 * a * (w - c);
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t as i32));
            let vh = v / (1.0 - cfg.beta2.powi(t as i32));
            w -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            out.push(w);
        }
        out
    }

    #[test]
    fn quadratic_descends_and_matches_scalar_recurrence() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let (a, c) = (1.5, 0.7);
        let mut s = scalar_store(-2.0);
        let mut st = AdamState::new(&s);
        let mut values = Vec::new();
        for _ in 0..100 {
            // Gradient from the tape, not by hand.
            let grads = {
                let mut g = Graph::new(&s);
                let w = g.param("w").unwrap();
                let shift = g.constant(vec![-c]);
                let d = g.add(w, shift).unwrap();
                let sq = g.mul(d, d).unwrap();
                let l = g.scale(sq, a);
                let l = g.sum(l);
                values.push(g.scalar(l));
                g.backward(l).unwrap()
            };
            adam_step(&mut s, &grads, &mut st, &cfg).unwrap();
        }
        let reference = reference_adam(-2.0, a, c, 100, &cfg);
        assert!((s.get("w").unwrap().data()[0] - reference[100]).abs() < 1e-12);
        for w in values[5..].windows(2) {
            assert!(w[1] < w[0], "{values:?}");
        }
        assert!(values[99] < values[0]);
    }
}
