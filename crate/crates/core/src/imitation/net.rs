use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::control_class::{decode_control, ControlClass, NUM_CLASSES};
use super::ImitationError;
use crate::world::{Control, LanderState};

pub const INPUT_DIM: usize = 6;
pub const HIDDEN_LAYERS: [usize; 3] = [32, 64, 64];
pub const POLICY_VERSION: u32 = 1;

/// Output activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// 25-way softmax over grid controls, trained with cross-entropy.
    Softmax,
    /// Two linear outputs regressed directly onto the control.
    Linear,
}

impl Head {
    pub fn output_dim(&self) -> usize {
        match self {
            Head::Softmax => NUM_CLASSES,
            Head::Linear => 2,
        }
    }
}

/// Fixed affine map applied to the state before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNormalization {
    pub offset: [f64; INPUT_DIM],
    pub scale: [f64; INPUT_DIM],
}

impl Default for InputNormalization {
    fn default() -> Self {
        Self { offset: [20.0, 12.5, 0.0, 0.0, 0.0, 0.0], scale: [20.0, 12.5, 0.5, 2.0, 2.0, 1.0] }
    }
}

impl InputNormalization {
    pub fn apply(&self, s: &LanderState) -> [f64; INPUT_DIM] {
        let x = s.to_array();
        std::array::from_fn(|i| (x[i] - self.offset[i]) / self.scale[i])
    }
}

/// Fully connected layer; `weights` is `fan_out x fan_in`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn he_init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
        let weights = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
        Self { fan_in, fan_out, weights, bias: vec![0.0; fan_out] }
    }

    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.fan_out {
            let row = &self.weights[o * self.fan_in..(o + 1) * self.fan_in];
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            out.push(z + self.bias[o]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub seed: u64,
    pub samples: usize,
    pub final_loss: f64,
    pub accuracy: Option<f64>,
}

/// Behavior-cloning policy network: 6 -> 32 -> 64 -> 64 -> head, ReLU hidden.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub layers: Vec<Dense>,
    pub head: Head,
    pub normalization: InputNormalization,
    pub meta: TrainingMeta,
}

/// Per-parameter gradients with the same layout as [`PolicyNet::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(net: &PolicyNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Flattened in the same order as [`PolicyNet::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

/// Supervision for one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(ControlClass),
    Control(Control),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: LanderState,
    pub target: Target,
}

struct Activations {
    /// Layer inputs: normalized state, then post-ReLU hidden activations.
    inputs: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl PolicyNet {
    pub fn new(head: Head, normalization: InputNormalization, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![INPUT_DIM];
        dims.extend(HIDDEN_LAYERS);
        dims.push(head.output_dim());
        let layers = dims.windows(2).map(|w| Dense::he_init(w[0], w[1], &mut rng)).collect();
        Self { layers, head, normalization, meta: TrainingMeta { seed, ..Default::default() } }
    }

    pub fn classifier(seed: u64) -> Self {
        Self::new(Head::Softmax, InputNormalization::default(), seed)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Mutable views of all parameters, layer by layer, weights before biases.
    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    fn forward(&self, state: &LanderState) -> Activations {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = self.normalization.apply(state).to_vec();
        let last = self.layers.len() - 1;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&current, &mut out);
            if i < last {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            inputs.push(std::mem::replace(&mut current, out.clone()));
        }
        Activations { inputs, output: current }
    }

    /// Raw network outputs (logits for the softmax head).
    pub fn outputs(&self, state: &LanderState) -> Vec<f64> {
        self.forward(state).output
    }

    /// Class probabilities; only meaningful for the softmax head.
    pub fn probabilities(&self, state: &LanderState) -> Vec<f64> {
        softmax(&self.outputs(state))
    }

    /// The imitation policy: most probable grid control (ties to the lower
    /// class index), or the clamped regression output.
    pub fn act(&self, state: &LanderState) -> Control {
        let out = self.outputs(state);
        match self.head {
            Head::Softmax => decode_control(argmax_class(&out)),
            Head::Linear => Control::new(out[0], out[1]).clamped(),
        }
    }

    pub fn to_json(&self) -> Result<String, ImitationError> {
        let file = PolicyFile {
            version: POLICY_VERSION,
            head: self.head,
            shapes: self.layers.iter().map(|l| [l.fan_in, l.fan_out]).collect(),
            layers: self.layers.clone(),
            normalization: self.normalization.clone(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ImitationError> {
        let file: PolicyFile = serde_json::from_str(text)?;
        if file.version != POLICY_VERSION {
            return Err(ImitationError::Version { expected: POLICY_VERSION, found: file.version });
        }
        let mut expected = vec![INPUT_DIM];
        expected.extend(HIDDEN_LAYERS);
        expected.push(file.head.output_dim());
        let ok_shapes = file.layers.len() == expected.len() - 1
            && file.layers.iter().zip(expected.windows(2)).zip(&file.shapes).all(|((l, w), s)| {
                l.fan_in == w[0]
                    && l.fan_out == w[1]
                    && *s == [w[0], w[1]]
                    && l.weights.len() == w[0] * w[1]
                    && l.bias.len() == w[1]
            });
        if !ok_shapes {
            return Err(ImitationError::Malformed("layer shapes do not match 6-32-64-64-head".into()));
        }
        Ok(Self { layers: file.layers, head: file.head, normalization: file.normalization, meta: file.meta })
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    version: u32,
    head: Head,
    shapes: Vec<[usize; 2]>,
    layers: Vec<Dense>,
    normalization: InputNormalization,
    meta: TrainingMeta,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; the first wins ties.
pub fn argmax_class(values: &[f64]) -> ControlClass {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    ControlClass::new(best).expect("softmax head has 25 outputs")
}

/// Mean loss over `batch` and its exact gradient: categorical cross-entropy
/// for class targets, squared error for control targets.
///
/// # Panics
/// If the batch is empty or a target does not match the network head.
pub fn loss_and_grad(net: &PolicyNet, batch: &[Sample]) -> (f64, Gradients) {
    assert!(!batch.is_empty(), "loss_and_grad needs a non-empty batch");
    let mut grads = Gradients::zeros_like(net);
    let inv_n = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let last = net.layers.len() - 1;
    for sample in batch {
        let acts = net.forward(&sample.state);
        let (sample_loss, mut delta) = output_loss(&acts.output, &sample.target, net.head);
        loss += sample_loss * inv_n;
        for d in delta.iter_mut() {
            *d *= inv_n;
        }
        for l in (0..=last).rev() {
            let layer = &net.layers[l];
            let input = &acts.inputs[l];
            let gw = &mut grads.weights[l];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                grads.bias[l][o] += d;
                let row = &mut gw[o * layer.fan_in..(o + 1) * layer.fan_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if l == 0 {
                break;
            }
            // Back through W, then through the ReLU that produced `input`.
            let mut prev = vec![0.0; layer.fan_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    (loss, grads)
}

fn output_loss(output: &[f64], target: &Target, head: Head) -> (f64, Vec<f64>) {
    match (head, target) {
        (Head::Softmax, Target::Class(c)) => {
            let p = softmax(output);
            let k = c.index();
            let loss = -p[k].max(f64::MIN_POSITIVE).ln();
            let mut d = p;
            d[k] -= 1.0;
            (loss, d)
        }
        (Head::Linear, Target::Control(u)) => {
            let e = [output[0] - u.main, output[1] - u.side];
            (e[0] * e[0] + e[1] * e[1], vec![2.0 * e[0], 2.0 * e[1]])
        }
        _ => panic!("target kind does not match the {head:?} head"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_shapes_are_fixed() {
        let net = PolicyNet::classifier(0);
        let shapes: Vec<_> = net.layers.iter().map(|l| (l.fan_in, l.fan_out)).collect();
        assert_eq!(shapes, vec![(6, 32), (32, 64), (64, 64), (64, 25)]);
        assert_eq!(net.parameter_count(), 224 + 2112 + 4160 + 1625);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let net = PolicyNet::classifier(3);
        let p = net.probabilities(&LanderState::new(12.0, 8.0, 0.2, 1.0, -0.5, 0.1));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn argmax_ignores_logit_offset() {
        let logits = [0.3, 1.2, -0.4, 1.2, 0.0];
        let shifted: Vec<f64> = logits.iter().map(|v| v + 17.0).collect();
        let mut padded = vec![-1e9; 25];
        padded[..5].copy_from_slice(&logits);
        let mut padded_shift = vec![-1e9; 25];
        padded_shift[..5].copy_from_slice(&shifted);
        assert_eq!(argmax_class(&padded), argmax_class(&padded_shift));
        assert_eq!(argmax_class(&padded).index(), 1);
    }

    #[test]
    fn uniform_logits_give_log_25() {
        let mut net = PolicyNet::classifier(1);
        for p in net.layers.last_mut().unwrap().weights.iter_mut() {
            *p = 0.0;
        }
        let batch = [Sample { state: LanderState::at_rest(3.0, 4.0), target: Target::Class(ControlClass::new(7).unwrap()) }];
        let (loss, _) = loss_and_grad(&net, &batch);
        assert!((loss - 25f64.ln()).abs() < 1e-12);
        assert!((loss - 3.2189).abs() < 1e-4);
    }

    #[test]
    fn zero_network_loss_is_order_invariant() {
        let mut net = PolicyNet::classifier(2);
        for p in net.parameters_mut() {
            *p = 0.0;
        }
        let mk = |x: f64, k: usize| Sample { state: LanderState::at_rest(x, 5.0), target: Target::Class(ControlClass::new(k).unwrap()) };
        let a = [mk(1.0, 3), mk(2.0, 9), mk(3.0, 24)];
        let b = [a[2], a[0], a[1]];
        assert_eq!(loss_and_grad(&net, &a).0, loss_and_grad(&net, &b).0);
    }

    #[test]
    fn json_round_trip() {
        let net = PolicyNet::classifier(5);
        let back = PolicyNet::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
    }
}
