use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{argmax_class, loss_and_grad, Head, InputNormalization, PolicyNet, Sample, Target};
use super::ImitationError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub learning_rate: f64,
    /// RMSProp decay of the squared-gradient average.
    pub decay: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self { learning_rate: 1e-3, decay: 0.9, epsilon: 1e-7, batch_size: 32, epochs: 500, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over the last epoch's batches.
    pub final_loss: f64,
    /// Top-1 training accuracy (softmax head only).
    pub accuracy: Option<f64>,
    pub epochs: usize,
    pub samples: usize,
}

/// RMSProp state, one accumulator per parameter.
struct RmsProp {
    mean_square: Vec<f64>,
    lr: f64,
    decay: f64,
    eps: f64,
}

impl RmsProp {
    fn new(n: usize, hyper: &TrainHyper) -> Self {
        Self { mean_square: vec![0.0; n], lr: hyper.learning_rate, decay: hyper.decay, eps: hyper.epsilon }
    }

    fn apply(&mut self, net: &mut PolicyNet, grad: &[f64]) {
        for ((p, g), ms) in net.parameters_mut().zip(grad).zip(self.mean_square.iter_mut()) {
            *ms = self.decay * *ms + (1.0 - self.decay) * g * g;
            *p -= self.lr * g / (ms.sqrt() + self.eps);
        }
    }
}

/// Behavior cloning: minibatch cross-entropy over the 25 control classes.
pub fn train_bc(samples: &[Sample], hyper: &TrainHyper) -> Result<(PolicyNet, TrainReport), ImitationError> {
    train(samples, Head::Softmax, InputNormalization::default(), hyper)
}

/// Squared-error regression of the control itself (the alternative
/// objective); targets must be [`Target::Control`].
pub fn train_regression(samples: &[Sample], hyper: &TrainHyper) -> Result<(PolicyNet, TrainReport), ImitationError> {
    train(samples, Head::Linear, InputNormalization::default(), hyper)
}

pub fn train(
    samples: &[Sample],
    head: Head,
    normalization: InputNormalization,
    hyper: &TrainHyper,
) -> Result<(PolicyNet, TrainReport), ImitationError> {
    if samples.is_empty() {
        return Err(ImitationError::EmptyDataset);
    }
    if hyper.batch_size == 0 || !(hyper.learning_rate > 0.0) || !(0.0..1.0).contains(&hyper.decay) {
        return Err(ImitationError::InvalidHyper(format!("{hyper:?}")));
    }
    let matches = |s: &Sample| matches!((head, s.target), (Head::Softmax, Target::Class(_)) | (Head::Linear, Target::Control(_)));
    if let Some(i) = samples.iter().position(|s| !matches(s)) {
        return Err(ImitationError::TargetMismatch { index: i });
    }

    let mut net = PolicyNet::new(head, normalization, hyper.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5ee_d0fb_a7c4);
    let mut opt = RmsProp::new(net.parameter_count(), hyper);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch = Vec::with_capacity(hyper.batch_size);
    let mut final_loss = f64::NAN;
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(hyper.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i]));
            let (loss, grad) = loss_and_grad(&net, &batch);
            let grad = grad.flatten();
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ImitationError::Divergence { epoch, batch: b, loss });
            }
            opt.apply(&mut net, &grad);
            total += loss;
            batches += 1;
        }
        final_loss = total / batches as f64;
        log::debug!("epoch {epoch}: loss {final_loss:.5}");
    }

    let accuracy = (head == Head::Softmax).then(|| top1_accuracy(&net, samples));
    net.meta.epochs = hyper.epochs;
    net.meta.seed = hyper.seed;
    net.meta.samples = samples.len();
    net.meta.final_loss = final_loss;
    net.meta.accuracy = accuracy;
    let report = TrainReport { final_loss, accuracy, epochs: hyper.epochs, samples: samples.len() };
    Ok((net, report))
}

/// Fraction of class-labelled samples whose argmax matches the label.
pub fn top1_accuracy(net: &PolicyNet, samples: &[Sample]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in samples {
        if let Target::Class(c) = s.target {
            total += 1;
            if argmax_class(&net.outputs(&s.state)) == c {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imitation::{decode_control, ControlClass};
    use crate::world::{Control, LanderState};

    fn class(i: usize) -> Target {
        Target::Class(ControlClass::new(i).unwrap())
    }

    #[test]
    fn memorizes_a_single_pair() {
        let s = LanderState::new(8.0, 11.0, 0.1, 0.5, -0.2, 0.0);
        let samples = [Sample { state: s, target: class(19) }];
        let hyper = TrainHyper { epochs: 300, ..Default::default() };
        let (net, report) = train_bc(&samples, &hyper).unwrap();
        assert_eq!(report.accuracy, Some(1.0));
        assert_eq!(net.act(&s), decode_control(ControlClass::new(19).unwrap()));
    }

    #[test]
    fn separates_two_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut samples = Vec::new();
        for i in 0..64 {
            let (cx, label) = if i % 2 == 0 { (10.0, 3) } else { (30.0, 21) };
            let jitter = |rng: &mut ChaCha8Rng| rand::Rng::random_range(rng, -1.0..1.0);
            let s = LanderState::new(cx + jitter(&mut rng), 12.0 + jitter(&mut rng), 0.0, 0.0, 0.0, 0.0);
            samples.push(Sample { state: s, target: class(label) });
        }
        let hyper = TrainHyper { epochs: 200, ..Default::default() };
        let (_, report) = train_bc(&samples, &hyper).unwrap();
        assert_eq!(report.accuracy, Some(1.0));
    }

    #[test]
    fn training_is_deterministic() {
        let samples: Vec<Sample> = (0..20)
            .map(|i| Sample { state: LanderState::at_rest(i as f64, 5.0), target: class(i % 25) })
            .collect();
        let hyper = TrainHyper { epochs: 5, seed: 11, ..Default::default() };
        let (a, _) = train_bc(&samples, &hyper).unwrap();
        let (b, _) = train_bc(&samples, &hyper).unwrap();
        assert!(a.parameters().zip(b.parameters()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(train_bc(&[], &TrainHyper::default()), Err(ImitationError::EmptyDataset)));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let samples: Vec<Sample> = (0..8)
            .map(|i| Sample { state: LanderState::at_rest(i as f64 * 4.0, 5.0), target: Target::Control(Control::new(1.0, -1.0)) })
            .collect();
        let hyper = TrainHyper { learning_rate: 1e200, epochs: 50, ..Default::default() };
        assert!(matches!(train_regression(&samples, &hyper), Err(ImitationError::Divergence { .. })));
    }

    #[test]
    fn mismatched_targets_are_rejected() {
        let samples = [Sample { state: LanderState::default(), target: Target::Control(Control::ZERO) }];
        assert!(matches!(train_bc(&samples, &TrainHyper::default()), Err(ImitationError::TargetMismatch { index: 0 })));
    }

    #[test]
    fn regression_fits_a_constant() {
        let samples: Vec<Sample> = (0..16)
            .map(|i| Sample { state: LanderState::at_rest(i as f64, 8.0), target: Target::Control(Control::new(0.5, -0.25)) })
            .collect();
        let hyper = TrainHyper { epochs: 1000, ..Default::default() };
        let (net, report) = train_regression(&samples, &hyper).unwrap();
        assert!(report.final_loss < 1e-2, "{}", report.final_loss);
        let u = net.act(&LanderState::at_rest(3.0, 8.0));
        assert!((u.main - 0.5).abs() < 0.05 && (u.side + 0.25).abs() < 0.05);
    }
}
