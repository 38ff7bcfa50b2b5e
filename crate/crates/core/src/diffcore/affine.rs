use rand::Rng;

use super::dropout::Dropout;
use super::graph::{Graph, NodeId};
use super::params::{uniform_tensor, ParameterStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Three fully connected layers with rectifiers between them and a linear
/// output. Used for the attention, word-estimation and clip-processing heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineStack {
    prefix: String,
    input_dim: usize,
    widths: [usize; 3],
}

impl AffineStack {
    pub fn new(prefix: impl Into<String>, input_dim: usize, widths: &[usize]) -> Result<Self> {
        let widths: [usize; 3] = widths.try_into().map_err(|_| {
            Error::Config(format!("affine stack needs exactly 3 widths, got {}", widths.len()))
        })?;
        if input_dim == 0 || widths.contains(&0) {
            return Err(Error::Config(format!(
                "affine stack dims must be positive: input {input_dim}, widths {widths:?}"
            )));
        }
        Ok(Self {
            prefix: prefix.into(),
            input_dim,
            widths,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.widths[2]
    }

    pub fn widths(&self) -> [usize; 3] {
        self.widths
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.fc{layer}.weight", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.fc{layer}.bias", self.prefix)
    }

    fn dims(&self) -> [(usize, usize); 3] {
        let w = self.widths;
        [(self.input_dim, w[0]), (w[0], w[1]), (w[1], w[2])]
    }

    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParameterStore<T>, rng: &mut R) -> Result<()> {
        for (k, (fan_in, out)) in self.dims().into_iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            store.insert(self.weight_name(k), uniform_tensor(&[fan_in, out], bound, rng), true)?;
            store.insert(self.bias_name(k), uniform_tensor(&[out], bound, rng), true)?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, input: NodeId, dropout: &mut Dropout) -> Result<NodeId> {
        if g.len_of(input) != self.input_dim {
            return Err(Error::shape(format!("{} input", self.prefix), &[self.input_dim], &[g.len_of(input)]));
        }
        let mut x = input;
        for k in 0..3 {
            let w = g.param(&self.weight_name(k))?;
            let b = g.param(&self.bias_name(k))?;
            x = g.affine(x, w, Some(b), &format!("{}.fc{k}", self.prefix))?;
            if k < 2 {
                x = g.relu(x);
                x = dropout.apply(g, x)?;
            }
        }
        Ok(x)
    }
}

/// Value-level forward pass through a three-layer stack.
pub fn affine_stack_forward<T: Scalar>(
    input: &[T],
    stack: &AffineStack,
    params: &ParameterStore<T>,
    dropout: &mut Dropout,
) -> Result<Vec<T>> {
    let mut g = Graph::new(params);
    let x = g.constant(input.to_vec());
    let y = stack.forward(&mut g, x, dropout)?;
    Ok(g.value(y).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::tensor::Tensor;
    use crate::seed::rng_for;

    fn store_with(stack: &AffineStack, fill: impl Fn(usize, usize, usize) -> f64) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        for (k, (i, o)) in stack.dims().into_iter().enumerate() {
            let w = (0..i * o).map(|idx| fill(k, idx / o, idx % o)).collect();
            s.insert(stack.weight_name(k), Tensor::new(vec![i, o], w).unwrap(), true).unwrap();
            s.insert(stack.bias_name(k), Tensor::zeros(&[o]), true).unwrap();
        }
        s
    }

    #[test]
    fn width_list_must_have_three_entries() {
        assert!(matches!(AffineStack::new("fan", 4, &[4, 5]), Err(Error::Config(_))));
        assert!(matches!(AffineStack::new("fan", 4, &[4, 4, 4, 5]), Err(Error::Config(_))));
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let st = AffineStack::new("fan", 4, &[6, 6, 5]).unwrap();
        let p = store_with(&st, |_, _, _| 0.0);
        let y = affine_stack_forward(&[1.0, -2.0, 3.0, 0.5], &st, &p, &mut Dropout::eval()).unwrap();
        assert_eq!(y, vec![0.0; 5]);
    }

    #[test]
    fn identity_weights_pass_non_negative_input() {
        let st = AffineStack::new("wen", 4, &[4, 4, 4]).unwrap();
        let p = store_with(&st, |_, r, c| if r == c { 1.0 } else { 0.0 });
        let x = [0.0, 1.5, 2.25, 7.0];
        let y = affine_stack_forward(&x, &st, &p, &mut Dropout::eval()).unwrap();
        assert_eq!(y, x.to_vec());
    }

    #[test]
    fn rejects_wrong_input_dim() {
        let st = AffineStack::new("fan", 4, &[4, 4, 5]).unwrap();
        let mut p = ParameterStore::<f32>::new();
        st.init_params(&mut p, &mut rng_for(1, "t")).unwrap();
        let err = affine_stack_forward(&[1.0, 2.0], &st, &p, &mut Dropout::eval()).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }
}
