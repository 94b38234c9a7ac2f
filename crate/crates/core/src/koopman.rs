//! Koopman-operator model of the lander learned by extended DMD.
//!
//! States and controls are lifted through a fixed 25-term basis and a linear
//! one-step operator is fit by regularized least squares. The state is read
//! back from components 1..=6 of the propagated feature vector, which makes the
//! model affine in the control and cheap to differentiate.

use nalgebra::{DMatrix, SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{self, Control, Environment, LanderState, PhysicsParams};

pub const BASIS_DIM: usize = 25;
pub const MODEL_VERSION: u32 = 1;

/// Feature indices holding the six state components.
pub const STATE_INDEX_MAP: [usize; 6] = [1, 2, 3, 4, 5, 6];

pub type Features = SVector<f64, BASIS_DIM>;
pub type Operator = SMatrix<f64, BASIS_DIM, BASIS_DIM>;
pub type StateJacobian = SMatrix<f64, 6, 6>;
pub type ControlJacobian = SMatrix<f64, 6, 2>;

#[derive(Debug, Error)]
pub enum KoopmanError {
    #[error("transition dataset is empty")]
    EmptyDataset,
    #[error("transition {index} contains non-finite values")]
    NonFinite { index: usize },
    #[error("transitions disagree on dt: {expected} vs {found}")]
    MixedTimestep { expected: f64, found: f64 },
    #[error("ridge must be finite and non-negative, got {0}")]
    InvalidRidge(f64),
    #[error("least-squares solve failed: {0}")]
    Solve(&'static str),
    #[error("model file version {found} is not supported (expected {expected})")]
    Version { expected: u32, found: u32 },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// The lifting basis:
/// `[1, x1..x6, u1, u2, u1*x1..u1*x6, u2*x1..u2*x6, u1 cos x3, u1 sin x3, u2 cos x3, u2 sin x3]`.
pub fn basis(state: &LanderState, control: &Control) -> Features {
    let x = state.to_array();
    let (u1, u2) = (control.main, control.side);
    let (s, c) = state.heading.sin_cos();
    let mut phi = Features::zeros();
    phi[0] = 1.0;
    for i in 0..6 {
        phi[1 + i] = x[i];
        phi[9 + i] = u1 * x[i];
        phi[15 + i] = u2 * x[i];
    }
    phi[7] = u1;
    phi[8] = u2;
    phi[21] = u1 * c;
    phi[22] = u1 * s;
    phi[23] = u2 * c;
    phi[24] = u2 * s;
    phi
}

/// Analytic derivatives of [`basis`] with respect to the state and control.
pub fn basis_jacobians(
    state: &LanderState,
    control: &Control,
) -> (SMatrix<f64, BASIS_DIM, 6>, SMatrix<f64, BASIS_DIM, 2>) {
    let x = state.to_array();
    let (u1, u2) = (control.main, control.side);
    let (s, c) = state.heading.sin_cos();
    let mut jx = SMatrix::<f64, BASIS_DIM, 6>::zeros();
    let mut ju = SMatrix::<f64, BASIS_DIM, 2>::zeros();
    for i in 0..6 {
        jx[(1 + i, i)] = 1.0;
        jx[(9 + i, i)] = u1;
        jx[(15 + i, i)] = u2;
        ju[(9 + i, 0)] = x[i];
        ju[(15 + i, 1)] = x[i];
    }
    jx[(21, 2)] = -u1 * s;
    jx[(22, 2)] = u1 * c;
    jx[(23, 2)] = -u2 * s;
    jx[(24, 2)] = u2 * c;
    ju[(7, 0)] = 1.0;
    ju[(8, 1)] = 1.0;
    ju[(21, 0)] = c;
    ju[(22, 0)] = s;
    ju[(23, 1)] = c;
    ju[(24, 1)] = s;
    (jx, ju)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: LanderState,
    pub control: Control,
    pub next: LanderState,
    /// Source trajectory and step index, when known.
    pub trajectory: Option<u64>,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub dt: f64,
    pub transitions: Vec<Transition>,
}

impl TransitionDataset {
    pub fn new(dt: f64) -> Self {
        Self { dt, transitions: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn validate(&self) -> Result<(), KoopmanError> {
        if self.transitions.is_empty() {
            return Err(KoopmanError::EmptyDataset);
        }
        for (index, tr) in self.transitions.iter().enumerate() {
            if !(tr.state.is_finite() && tr.next.is_finite() && tr.control.is_finite()) {
                return Err(KoopmanError::NonFinite { index });
            }
        }
        Ok(())
    }

    /// Split off the trailing `fraction` of transitions.
    pub fn split_tail(&self, fraction: f64) -> (TransitionDataset, TransitionDataset) {
        let n_tail = ((self.len() as f64) * fraction).round() as usize;
        let cut = self.len() - n_tail.min(self.len());
        let head = TransitionDataset { dt: self.dt, transitions: self.transitions[..cut].to_vec() };
        let tail = TransitionDataset { dt: self.dt, transitions: self.transitions[cut..].to_vec() };
        (head, tail)
    }

    pub fn extend(&mut self, other: TransitionDataset) -> Result<(), KoopmanError> {
        if !other.is_empty() && !self.is_empty() && other.dt != self.dt {
            return Err(KoopmanError::MixedTimestep { expected: self.dt, found: other.dt });
        }
        if self.is_empty() {
            self.dt = other.dt;
        }
        self.transitions.extend(other.transitions);
        Ok(())
    }
}

/// Result of a lifted least-squares fit.
#[derive(Debug, Clone)]
pub struct LiftedFit {
    pub operator: Operator,
    /// Frobenius norm of the training residual `Z' - K Z` (ridge term excluded).
    pub residual: f64,
    /// Set when the unregularized problem was rank deficient and the
    /// minimum-norm pseudo-inverse solution was used.
    pub rank_deficient: bool,
}

/// Minimize `sum ||z'_i - K z_i||^2 + ridge ||K||_F^2` over `K`.
///
/// Solved as an augmented least-squares problem through the SVD, so a
/// rank-deficient system with `ridge == 0` falls back to the pseudo-inverse.
pub fn fit_lifted(inputs: &[Features], outputs: &[Features], ridge: f64) -> Result<LiftedFit, KoopmanError> {
    if inputs.is_empty() {
        return Err(KoopmanError::EmptyDataset);
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(KoopmanError::InvalidRidge(ridge));
    }
    assert_eq!(inputs.len(), outputs.len(), "lifted inputs and outputs must pair up");
    let n = inputs.len();
    let extra = if ridge > 0.0 { BASIS_DIM } else { 0 };
    let rows = n + extra;
    let mut z = DMatrix::<f64>::zeros(rows, BASIS_DIM);
    let mut y = DMatrix::<f64>::zeros(rows, BASIS_DIM);
    for (i, (zi, yi)) in inputs.iter().zip(outputs).enumerate() {
        z.row_mut(i).copy_from(&zi.transpose());
        y.row_mut(i).copy_from(&yi.transpose());
    }
    if ridge > 0.0 {
        let s = ridge.sqrt();
        for j in 0..BASIS_DIM {
            z[(n + j, j)] = s;
        }
    }

    let svd = z.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = sigma_max * (rows.max(BASIS_DIM) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let kt = svd.solve(&y, tol).map_err(KoopmanError::Solve)?;

    let mut operator = Operator::zeros();
    for r in 0..BASIS_DIM {
        for c in 0..BASIS_DIM {
            operator[(r, c)] = kt[(c, r)];
        }
    }
    let resid = y.rows(0, n) - z.rows(0, n) * &kt;
    Ok(LiftedFit { operator, residual: resid.norm(), rank_deficient: rank < BASIS_DIM })
}

/// Learned one-step operator over the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub operator: Operator,
    pub state_index_map: [usize; 6],
    /// Timestep of the training data (s).
    pub dt: f64,
    pub fit_residual: f64,
    pub rank_deficient: bool,
    pub ridge: f64,
    pub samples: usize,
}

impl KoopmanModel {
    /// A model that leaves every state unchanged.
    pub fn identity(dt: f64) -> Self {
        Self {
            operator: Operator::identity(),
            state_index_map: STATE_INDEX_MAP,
            dt,
            fit_residual: 0.0,
            rank_deficient: false,
            ridge: 0.0,
            samples: 0,
        }
    }

    /// Components of a lifted vector holding the state.
    pub fn project(&self, z: &Features) -> LanderState {
        let m = &self.state_index_map;
        LanderState::new(z[m[0]], z[m[1]], z[m[2]], z[m[3]], z[m[4]], z[m[5]])
    }

    pub fn predict_lifted(&self, z: &Features) -> Features {
        self.operator * z
    }

    pub fn predict_next(&self, state: &LanderState, control: &Control) -> LanderState {
        let phi = basis(state, control);
        let mut out = [0.0; 6];
        for (k, &row) in self.state_index_map.iter().enumerate() {
            out[k] = self.operator.row(row).dot(&phi.transpose());
        }
        LanderState::from_array(out)
    }

    /// Jacobians `(d x_next / d x, d x_next / d u)` of [`Self::predict_next`].
    pub fn linearize(&self, state: &LanderState, control: &Control) -> (StateJacobian, ControlJacobian) {
        let (jx, ju) = basis_jacobians(state, control);
        let ks = self.state_rows();
        (ks * jx, ks * ju)
    }

    fn state_rows(&self) -> SMatrix<f64, 6, BASIS_DIM> {
        let mut ks = SMatrix::<f64, 6, BASIS_DIM>::zeros();
        for (k, &row) in self.state_index_map.iter().enumerate() {
            ks.row_mut(k).copy_from(&self.operator.row(row));
        }
        ks
    }

    pub fn is_finite(&self) -> bool {
        self.operator.iter().all(|v| v.is_finite())
    }

    pub fn to_json(&self) -> Result<String, KoopmanError> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self, KoopmanError> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// Fit a model from state transitions. Successor features are evaluated with
/// the control held over the step.
pub fn fit(data: &TransitionDataset, ridge: f64) -> Result<KoopmanModel, KoopmanError> {
    data.validate()?;
    let inputs: Vec<Features> = data.transitions.iter().map(|t| basis(&t.state, &t.control)).collect();
    let outputs: Vec<Features> = data.transitions.iter().map(|t| basis(&t.next, &t.control)).collect();
    let lifted = fit_lifted(&inputs, &outputs, ridge)?;
    if lifted.rank_deficient {
        log::warn!("koopman fit: rank-deficient system, using pseudo-inverse solution");
    }
    Ok(KoopmanModel {
        operator: lifted.operator,
        state_index_map: STATE_INDEX_MAP,
        dt: data.dt,
        fit_residual: lifted.residual,
        rank_deficient: lifted.rank_deficient,
        ridge,
        samples: data.len(),
    })
}

/// One-step prediction error of a model on held-out transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionError {
    /// RMSE over all six components after dividing each by its spread in the data.
    pub normalized_rmse: f64,
    pub per_dimension_rmse: [f64; 6],
    pub scales: [f64; 6],
}

pub fn evaluate(model: &KoopmanModel, data: &TransitionDataset) -> Result<PredictionError, KoopmanError> {
    data.validate()?;
    let n = data.len() as f64;
    let mut mean = [0.0; 6];
    for t in &data.transitions {
        for (m, v) in mean.iter_mut().zip(t.next.to_array()) {
            *m += v / n;
        }
    }
    let mut var = [0.0; 6];
    let mut sq_err = [0.0; 6];
    for t in &data.transitions {
        let pred = model.predict_next(&t.state, &t.control).to_array();
        let next = t.next.to_array();
        for i in 0..6 {
            var[i] += (next[i] - mean[i]).powi(2) / n;
            sq_err[i] += (pred[i] - next[i]).powi(2) / n;
        }
    }
    let scales = var.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
    let per_dimension_rmse = sq_err.map(f64::sqrt);
    let normalized = (0..6).map(|i| sq_err[i] / (scales[i] * scales[i])).sum::<f64>() / 6.0;
    Ok(PredictionError { normalized_rmse: normalized.sqrt(), per_dimension_rmse, scales })
}

/// Sampling box for [`collect_random_transitions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingBox {
    pub heading: f64,
    pub speed: f64,
    pub omega: f64,
}

impl Default for SamplingBox {
    fn default() -> Self {
        Self { heading: 0.8, speed: 3.0, omega: 1.5 }
    }
}

/// Random single-step transitions of the simulator, free flight with main
/// throttle in `[0, 1]` (the range where the engine is active). Samples that
/// touch the ground or an obstacle are discarded.
pub fn collect_random_transitions(
    env: &Environment,
    params: &PhysicsParams,
    count: usize,
    sampling: &SamplingBox,
    seed: u64,
) -> TransitionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = TransitionDataset::new(params.dt);
    let b = env.bounds;
    let r = params.lander_radius;
    while out.len() < count {
        let t = rng.random::<f64>() * params.trial_timeout;
        let state = LanderState::new(
            rng.random_range(b.x_min + r..b.x_max - r),
            rng.random_range(env.ground_height + 2.0 * r..b.y_max - r),
            rng.random_range(-sampling.heading..sampling.heading),
            rng.random_range(-sampling.speed..sampling.speed),
            rng.random_range(-sampling.speed..sampling.speed),
            rng.random_range(-sampling.omega..sampling.omega),
        );
        let control = Control::new(rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0));
        let Ok(next) = world::step(&state, control, env, params, t) else { continue };
        let touches = |s: &LanderState, t: f64| env.nearest_obstacle(s.position(), r, t).signed_clearance <= 0.0;
        if touches(&state, t) || touches(&next, t + params.dt) {
            continue;
        }
        let step = out.len();
        out.transitions.push(Transition { state, control, next, trajectory: None, step });
    }
    out
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    dim: usize,
    /// Row-major operator entries.
    operator: Vec<f64>,
    state_index_map: [usize; 6],
    dt: f64,
    fit_residual: f64,
    rank_deficient: bool,
    ridge: f64,
    samples: usize,
}

impl From<&KoopmanModel> for ModelFile {
    fn from(m: &KoopmanModel) -> Self {
        let mut operator = Vec::with_capacity(BASIS_DIM * BASIS_DIM);
        for r in 0..BASIS_DIM {
            for c in 0..BASIS_DIM {
                operator.push(m.operator[(r, c)]);
            }
        }
        Self {
            version: MODEL_VERSION,
            dim: BASIS_DIM,
            operator,
            state_index_map: m.state_index_map,
            dt: m.dt,
            fit_residual: m.fit_residual,
            rank_deficient: m.rank_deficient,
            ridge: m.ridge,
            samples: m.samples,
        }
    }
}

impl TryFrom<ModelFile> for KoopmanModel {
    type Error = KoopmanError;

    fn try_from(f: ModelFile) -> Result<Self, Self::Error> {
        if f.version != MODEL_VERSION {
            return Err(KoopmanError::Version { expected: MODEL_VERSION, found: f.version });
        }
        if f.dim != BASIS_DIM || f.operator.len() != BASIS_DIM * BASIS_DIM {
            return Err(KoopmanError::Malformed(format!("expected a {BASIS_DIM}x{BASIS_DIM} operator")));
        }
        if f.state_index_map.iter().any(|&i| i >= BASIS_DIM) {
            return Err(KoopmanError::Malformed("state index out of range".into()));
        }
        let operator = Operator::from_row_slice(&f.operator);
        if !operator.iter().all(|v| v.is_finite()) {
            return Err(KoopmanError::Malformed("non-finite operator entry".into()));
        }
        Ok(KoopmanModel {
            operator,
            state_index_map: f.state_index_map,
            dt: f.dt,
            fit_residual: f.fit_residual,
            rank_deficient: f.rank_deficient,
            ridge: f.ridge,
            samples: f.samples,
        })
    }
}
