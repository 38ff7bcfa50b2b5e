use super::graph::{Graph, NodeId};
use super::params::ParameterStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
    /// Loss at the unperturbed point.
    pub loss: f64,
    /// `(analytic, numeric)` for every checked coordinate, in store order.
    pub pairs: Vec<(f64, f64)>,
}

impl GradCheckReport {
    pub fn max_abs_error(&self) -> f64 {
        self.pairs.iter().map(|(a, n)| (a - n).abs()).fold(0.0, f64::max)
    }

    /// Smallest nonzero change of the numeric derivative: one unit in the
    /// last place of the loss divided by the central-difference span.
    pub fn resolution(&self, epsilon: f64) -> f64 {
        f64::EPSILON * self.loss.abs().max(f64::MIN_POSITIVE) / (2.0 * epsilon)
    }

    /// Maximum relative error over coordinates whose gradient magnitude is at
    /// least `min_magnitude`.
    pub fn max_rel_error_above(&self, min_magnitude: f64) -> f64 {
        self.pairs
            .iter()
            .filter(|(a, n)| a.abs().max(n.abs()) >= min_magnitude)
            .map(|&(a, n)| relative_error(a, n))
            .fold(0.0, f64::max)
    }

    /// Coordinates whose relative error exceeds `tol`.
    pub fn count_above(&self, tol: f64) -> usize {
        self.pairs.iter().filter(|&&(a, n)| relative_error(a, n) > tol).count()
    }
}

/// `|a - b| / max(|a|, |b|, 1e-12)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn evaluate<F>(forward: &F, params: &ParameterStore<f64>, what: &str) -> Result<f64>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    let mut g = Graph::new(params);
    let loss = forward(&mut g)?;
    if g.len_of(loss) != 1 {
        return Err(Error::Contract(format!("gradient check needs a scalar, got {} elements", g.len_of(loss))));
    }
    let v = g.scalar(loss);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("forward value {v} at {what}; gradient check aborted")));
    }
    Ok(v)
}

/// Compares reverse-mode gradients of `forward` against central differences
/// on every coordinate of every trainable parameter, in 64-bit.
pub fn finite_difference_check<F>(forward: F, params: &ParameterStore<f64>, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    let (base, analytic) = {
        let mut g = Graph::new(params);
        let loss = forward(&mut g)?;
        let v = g.value(loss).first().copied().unwrap_or(f64::NAN);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("forward value {v} at base point; gradient check aborted")));
        }
        (v, g.backward(loss)?)
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
        loss: base,
        pairs: Vec::new(),
    };
    for pi in 0..params.len() {
        let entry = params.entry(pi);
        if !entry.trainable {
            continue;
        }
        let grad = analytic
            .get(&entry.name)
            .expect("gradient map covers every parameter")
            .data()
            .to_vec();
        for (k, &a) in grad.iter().enumerate() {
            let orig = entry.tensor.data()[k];
            work.entry_mut(pi).tensor.data_mut()[k] = orig + epsilon;
            let plus = evaluate(&forward, &work, &format!("{}[{k}] + eps", entry.name))?;
            work.entry_mut(pi).tensor.data_mut()[k] = orig - epsilon;
            let minus = evaluate(&forward, &work, &format!("{}[{k}] - eps", entry.name))?;
            work.entry_mut(pi).tensor.data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            report.pairs.push((a, numeric));
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = entry.name.clone();
                report.worst_index = k;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
