use rand::Rng;

use super::dropout::Dropout;
use super::graph::{Graph, NodeId};
use super::params::{uniform_tensor, ParameterStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Geometry and parameter naming of a multi-layer LSTM.
///
/// Gate order inside the `4H` blocks is input, forget, candidate, output.
/// Weights are stored `[fan_in, 4H]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmStack {
    prefix: String,
    num_layers: usize,
    input_dim: usize,
    hidden_dim: usize,
}

/// Per-layer `(hidden, cell)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

/// Input to the first layer at one time step.
#[derive(Debug, Clone, Copy)]
pub enum LayerInput {
    /// Raw `input_dim` vector; multiplied by the layer-0 input weights.
    Raw(NodeId),
    /// Already projected `4H` contribution of the input.
    Projected(NodeId),
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(num_layers: usize, hidden_dim: usize) -> Self {
        Self {
            layers: vec![(vec![T::zero(); hidden_dim], vec![T::zero(); hidden_dim]); num_layers],
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn top_hidden(&self) -> &[T] {
        &self.layers.last().expect("non-empty state").0
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(h, c)| h.iter().chain(c).all(|v| v.is_finite()))
    }

    /// Places each `[h; c]` layer on the graph as a constant.
    pub fn to_nodes(&self, g: &mut Graph<'_, T>) -> Vec<NodeId> {
        self.layers
            .iter()
            .map(|(h, c)| {
                let mut v = h.clone();
                v.extend_from_slice(c);
                g.constant(v)
            })
            .collect()
    }

    pub fn from_nodes(g: &Graph<'_, T>, nodes: &[NodeId]) -> Self {
        Self {
            layers: nodes
                .iter()
                .map(|&n| {
                    let v = g.value(n);
                    let h = v.len() / 2;
                    (v[..h].to_vec(), v[h..].to_vec())
                })
                .collect(),
        }
    }
}

impl LstmStack {
    pub fn new(prefix: impl Into<String>, num_layers: usize, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        if num_layers == 0 || input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config(format!(
                "lstm dims must be positive: layers {num_layers}, input {input_dim}, hidden {hidden_dim}"
            )));
        }
        Ok(Self {
            prefix: prefix.into(),
            num_layers,
            input_dim,
            hidden_dim,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn layer_name(&self, layer: usize) -> String {
        format!("{}.layer{layer}", self.prefix)
    }

    pub fn w_ih_name(&self, layer: usize) -> String {
        format!("{}.layer{layer}.w_ih", self.prefix)
    }

    pub fn w_hh_name(&self, layer: usize) -> String {
        format!("{}.layer{layer}.w_hh", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.layer{layer}.bias", self.prefix)
    }

    fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        }
    }

    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParameterStore<T>, rng: &mut R) -> Result<()> {
        let h = self.hidden_dim;
        for l in 0..self.num_layers {
            let fan_in = self.layer_input_dim(l);
            store.insert(
                self.w_ih_name(l),
                uniform_tensor(&[fan_in, 4 * h], 1.0 / (fan_in as f64).sqrt(), rng),
                true,
            )?;
            let bound = 1.0 / (h as f64).sqrt();
            store.insert(self.w_hh_name(l), uniform_tensor(&[h, 4 * h], bound, rng), true)?;
            store.insert(self.bias_name(l), uniform_tensor(&[4 * h], bound, rng), true)?;
        }
        Ok(())
    }

    /// Checks that the store holds this stack's weights with consistent shapes.
    pub fn validate<T: Scalar>(&self, store: &ParameterStore<T>) -> Result<()> {
        let h = self.hidden_dim;
        for l in 0..self.num_layers {
            let checks = [
                (self.w_ih_name(l), vec![self.layer_input_dim(l), 4 * h]),
                (self.w_hh_name(l), vec![h, 4 * h]),
                (self.bias_name(l), vec![4 * h]),
            ];
            for (name, shape) in checks {
                let t = store.require(&name)?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::shape(name, &shape, t.shape()));
                }
            }
        }
        Ok(())
    }

    fn check_state<T: Scalar>(&self, g: &Graph<'_, T>, state: &[NodeId]) -> Result<()> {
        if state.len() != self.num_layers {
            return Err(Error::shape(
                format!("{} state layers", self.prefix),
                &[self.num_layers],
                &[state.len()],
            ));
        }
        for (l, &s) in state.iter().enumerate() {
            if g.len_of(s) != 2 * self.hidden_dim {
                return Err(Error::shape(
                    format!("{} state", self.layer_name(l)),
                    &[2 * self.hidden_dim],
                    &[g.len_of(s)],
                ));
            }
        }
        Ok(())
    }

    /// Hidden half of a `[h; c]` state node.
    pub fn hidden<T: Scalar>(&self, g: &mut Graph<'_, T>, state: NodeId) -> Result<NodeId> {
        g.slice(state, 0, self.hidden_dim)
    }

    /// Advances every layer by one time step. Dropout is applied to each
    /// layer's output except the top one. Returns the new per-layer states.
    pub fn step<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        input: LayerInput,
        state: &[NodeId],
        dropout: &mut Dropout,
    ) -> Result<Vec<NodeId>> {
        self.check_state(g, state)?;
        let mut next = Vec::with_capacity(self.num_layers);
        let mut below: Option<NodeId> = None;
        for l in 0..self.num_layers {
            let w_hh = g.param(&self.w_hh_name(l))?;
            let b = g.param(&self.bias_name(l))?;
            let ctx = self.layer_name(l);
            let s = match (l, below, input) {
                (0, _, LayerInput::Raw(x)) => {
                    if g.len_of(x) != self.input_dim {
                        return Err(Error::shape(format!("{ctx} input"), &[self.input_dim], &[g.len_of(x)]));
                    }
                    let w_ih = g.param(&self.w_ih_name(0))?;
                    g.lstm_cell(x, state[0], Some(w_ih), w_hh, b, &ctx)?
                }
                (0, _, LayerInput::Projected(x)) => g.lstm_cell(x, state[0], None, w_hh, b, &ctx)?,
                (_, Some(x), _) => {
                    let w_ih = g.param(&self.w_ih_name(l))?;
                    g.lstm_cell(x, state[l], Some(w_ih), w_hh, b, &ctx)?
                }
                (_, None, _) => unreachable!("layer above 0 always has an input"),
            };
            next.push(s);
            if l + 1 < self.num_layers {
                let h = self.hidden(g, s)?;
                below = Some(dropout.apply(g, h)?);
            }
        }
        Ok(next)
    }

    /// Runs the stack over a sequence. Returns the top-layer hidden output at
    /// every step and the final per-layer states.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        inputs: &[NodeId],
        init_state: &[NodeId],
        dropout: &mut Dropout,
    ) -> Result<(Vec<NodeId>, Vec<NodeId>)> {
        let mut state = init_state.to_vec();
        self.check_state(g, &state)?;
        let mut outputs = Vec::with_capacity(inputs.len());
        for &x in inputs {
            state = self.step(g, LayerInput::Raw(x), &state, dropout)?;
            let top = *state.last().expect("at least one layer");
            outputs.push(self.hidden(g, top)?);
        }
        Ok((outputs, state))
    }
}

/// Value-level multi-layer LSTM over a sequence.
pub fn lstm_forward<T: Scalar>(
    inputs: &[Vec<T>],
    init_state: &LstmState<T>,
    stack: &LstmStack,
    params: &ParameterStore<T>,
    dropout: &mut Dropout,
) -> Result<(Vec<Vec<T>>, LstmState<T>)> {
    if init_state.num_layers() != stack.num_layers {
        return Err(Error::shape(
            format!("{} initial state layers", stack.prefix),
            &[stack.num_layers],
            &[init_state.num_layers()],
        ));
    }
    let mut g = Graph::new(params);
    let xs: Vec<NodeId> = inputs.iter().map(|x| g.constant(x.clone())).collect();
    let s0 = init_state.to_nodes(&mut g);
    let (outs, fin) = stack.forward(&mut g, &xs, &s0, dropout)?;
    let outputs = outs.iter().map(|&o| g.value(o).to_vec()).collect();
    Ok((outputs, LstmState::from_nodes(&g, &fin)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::tensor::Tensor;
    use crate::seed::rng_for;

    fn zero_store(stack: &LstmStack) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        stack.init_params(&mut s, &mut rng_for(0, "z")).unwrap();
        for p in s.iter_mut() {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        s
    }

    #[test]
    fn zero_parameters_are_a_fixed_point() {
        let st = LstmStack::new("enc", 3, 4, 5).unwrap();
        let p = zero_store(&st);
        let inputs = vec![vec![1.0, -2.0, 3.0, 4.0], vec![9.0, 9.0, -9.0, 0.5]];
        let (out, fin) = lstm_forward(&inputs, &LstmState::zeros(3, 5), &st, &p, &mut Dropout::eval()).unwrap();
        assert!(out.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(fin, LstmState::zeros(3, 5));
    }

    #[test]
    fn single_unit_single_step_by_hand() {
        // One layer, one input, one hidden unit. Gates are i, f, g, o.
        let st = LstmStack::new("enc", 1, 1, 1).unwrap();
        let mut p = ParameterStore::new();
        p.insert(st.w_ih_name(0), Tensor::new(vec![1, 4], vec![0.5, -0.25, 1.0, 0.75]).unwrap(), true).unwrap();
        p.insert(st.w_hh_name(0), Tensor::new(vec![1, 4], vec![0.1, 0.2, -0.3, 0.4]).unwrap(), true).unwrap();
        p.insert(st.bias_name(0), Tensor::new(vec![4], vec![0.05, 1.0, 0.0, -0.5]).unwrap(), true).unwrap();
        let x = 2.0;
        let (h0, c0) = (0.5, -1.0);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * x + 0.1 * h0 + 0.05);
        let f = sig(-0.25 * x + 0.2 * h0 + 1.0);
        let gg = (1.0 * x - 0.3 * h0).tanh();
        let o = sig(0.75 * x + 0.4 * h0 - 0.5);
        let c1 = f * c0 + i * gg;
        let h1 = o * c1.tanh();

        let init = LstmState {
            layers: vec![(vec![h0], vec![c0])],
        };
        let (out, fin) = lstm_forward(&[vec![x]], &init, &st, &p, &mut Dropout::eval()).unwrap();
        assert!((out[0][0] - h1).abs() < 1e-15);
        assert!((fin.layers[0].1[0] - c1).abs() < 1e-15);
    }

    #[test]
    fn mismatched_input_names_the_layer() {
        let st = LstmStack::new("decoder", 2, 4, 3).unwrap();
        let p = zero_store(&st);
        let err = lstm_forward(&[vec![1.0; 5]], &LstmState::zeros(2, 3), &st, &p, &mut Dropout::eval()).unwrap_err();
        match err {
            Error::ShapeMismatch { context, .. } => assert!(context.contains("decoder.layer0"), "{context}"),
            e => panic!("unexpected {e}"),
        }
        let err = lstm_forward(&[vec![1.0; 4]], &LstmState::zeros(1, 3), &st, &p, &mut Dropout::eval()).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn final_state_equals_state_after_last_step() {
        let st = LstmStack::new("enc", 2, 3, 4).unwrap();
        let mut p = ParameterStore::<f64>::new();
        st.init_params(&mut p, &mut rng_for(3, "lstm")).unwrap();
        let xs = vec![vec![0.1, 0.2, 0.3], vec![-0.5, 0.0, 1.0], vec![2.0, -1.0, 0.0]];
        let (out, fin) = lstm_forward(&xs, &LstmState::zeros(2, 4), &st, &p, &mut Dropout::eval()).unwrap();
        assert_eq!(out.last().unwrap(), &fin.layers[1].0);
        // Running the prefix then the last step from the intermediate state agrees.
        let (_, mid) = lstm_forward(&xs[..2], &LstmState::zeros(2, 4), &st, &p, &mut Dropout::eval()).unwrap();
        let (_, fin2) = lstm_forward(&xs[2..], &mid, &st, &p, &mut Dropout::eval()).unwrap();
        assert_eq!(fin, fin2);
    }
}
