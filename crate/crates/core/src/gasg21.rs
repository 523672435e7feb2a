//! Single-subspace robust recovery by stochastic gradient descent on the
//! Grassmannian with the L2,1 loss.
//!
//! Each iteration draws one column, spherizes it, fits it by least squares,
//! forms the rank-one gradient and takes a geodesic step whose length comes
//! from the configured [`StepRule`].

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::grassmann::{
    geodesic_rotate, least_squares_weights, principal_angle, residual_gradient, spherize,
    ObservedVector, Subspace,
};
use crate::rng::{self, Rng};
use crate::stepsize::{diminishing, AdaptiveStepState, StepParams};
use crate::trace::{RunTrace, TraceRecord};

/// How the step length of each geodesic update is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Multi-level adaptive constant step.
    Adaptive,
    /// `C / (1 + j)`.
    Diminishing,
    /// Fixed `η` with the L2,1 magnitude `η‖w‖`.
    Constant,
    /// Fixed `η` with the ℓ2-loss magnitude `η‖r‖‖w‖`.
    Grouse,
}

impl std::str::FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(StepRule::Adaptive),
            "diminishing" => Ok(StepRule::Diminishing),
            "constant" => Ok(StepRule::Constant),
            "grouse" => Ok(StepRule::Grouse),
            other => Err(Error::InvalidParams(format!("unknown step rule `{other}`"))),
        }
    }
}

/// Order in which columns are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Uniformly at random with replacement.
    Uniform,
    /// A fresh random permutation of all columns for every pass.
    CyclicShuffled,
}

/// Step-size policy shared by [`StreamingRecovery`] and the K-subspaces
/// refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub rule: StepRule,
    pub params: StepParams,
    pub diminishing_scale: f64,
    pub constant_eta: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            rule: StepRule::Adaptive,
            params: StepParams::default(),
            diminishing_scale: 1.0,
            constant_eta: 0.1,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.diminishing_scale > 0.0) {
            return Err(Error::InvalidParams("diminishing scale must be > 0".into()));
        }
        if !(self.constant_eta >= 0.0) {
            return Err(Error::InvalidParams("constant step must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    pub rank: usize,
    pub step: StepConfig,
    pub max_iterations: u64,
    pub seed: u64,
    /// Ground truth; when present the principal angle is logged each iteration.
    pub truth: Option<Subspace>,
    /// Stop as soon as the logged angle drops to this value.
    pub angle_tolerance: Option<f64>,
    pub sampling: Sampling,
}

impl RecoveryConfig {
    pub fn new(rank: usize) -> Self {
        RecoveryConfig {
            rank,
            step: StepConfig::default(),
            max_iterations: 1000,
            seed: 0,
            truth: None,
            angle_tolerance: None,
            sampling: Sampling::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidParams("rank must be >= 1".into()));
        }
        self.step.validate()?;
        if let Some(t) = &self.truth {
            if t.rank() != self.rank {
                return Err(Error::ShapeMismatch(format!(
                    "truth has rank {} but rank {} was requested",
                    t.rank(),
                    self.rank
                )));
            }
        }
        if self.angle_tolerance.is_some() && self.truth.is_none() {
            return Err(Error::InvalidParams("an angle tolerance needs a ground-truth subspace".into()));
        }
        Ok(())
    }
}

/// What happened to one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Updated,
    /// Exactly fit already; no descent direction.
    Degenerate,
    /// Zero norm, too few observed rows or a singular restricted basis.
    Unusable,
}

/// Uniformly random orthonormal `n x d` basis (orthogonalized Gaussian).
pub fn init_subspace(n: usize, d: usize, rng: &mut Rng) -> Result<Subspace> {
    if d == 0 || d > n {
        return Err(Error::InvalidShape(format!("need 1 <= d <= n, got n={n}, d={d}")));
    }
    loop {
        match Subspace::orthonormalize(rng::gaussian_matrix(n, d, rng)) {
            Err(Error::RankDeficient(_)) => continue,
            other => return other,
        }
    }
}

/// One GASG21 update of `u` with column `x`.
///
/// On zero, underdetermined, rank-deficient or exactly fit columns `u` is
/// left untouched and the record is flagged as skipped.
pub fn process_vector(
    u: &mut Subspace,
    state: &mut AdaptiveStepState,
    x: &ObservedVector,
    step: &StepConfig,
    iteration: u64,
) -> Result<(TraceRecord, Outcome)> {
    let mut rec = TraceRecord {
        iteration,
        column_id: x.column_id(),
        eta: current_eta(state, step, iteration),
        mu: state.mu(),
        level: state.level(),
        residual_norm: f64::NAN,
        angle: None,
        skipped: true,
    };
    let xs = match spherize(x) {
        Ok(v) => v,
        Err(_) => return Ok((rec, Outcome::Unusable)),
    };
    let w = match least_squares_weights(u, &xs) {
        Ok(w) => w,
        Err(Error::Underdetermined { .. }) | Err(Error::RankDeficient(_)) => {
            log::debug!("column {} skipped: cannot fit", x.column_id());
            return Ok((rec, Outcome::Unusable));
        }
        Err(e) => return Err(e),
    };
    let g = residual_gradient(u, &xs, &w);
    rec.residual_norm = g.residual_norm;
    if g.is_degenerate() {
        return Ok((rec, Outcome::Degenerate));
    }
    if step.rule == StepRule::Adaptive {
        state.adapt(&g, &step.params)?;
    }
    let eta = current_eta(state, step, iteration);
    let angle = match step.rule {
        StepRule::Grouse => eta * g.residual_norm * g.sigma,
        _ => eta * g.sigma,
    };
    *u = geodesic_rotate(u, &g, angle)?;
    rec.eta = eta;
    rec.mu = state.mu();
    rec.level = state.level();
    rec.skipped = false;
    Ok((rec, Outcome::Updated))
}

fn current_eta(state: &AdaptiveStepState, step: &StepConfig, iteration: u64) -> f64 {
    match step.rule {
        StepRule::Adaptive => state.eta(),
        StepRule::Diminishing => diminishing(iteration, step.diminishing_scale),
        StepRule::Constant | StepRule::Grouse => step.constant_eta,
    }
}

/// Incremental GASG21 for callers that feed columns one at a time.
#[derive(Debug, Clone)]
pub struct StreamingRecovery {
    subspace: Subspace,
    state: AdaptiveStepState,
    step: StepConfig,
    iteration: u64,
}

impl StreamingRecovery {
    pub fn new(initial: Subspace, step: StepConfig) -> Result<Self> {
        step.validate()?;
        Ok(StreamingRecovery { state: AdaptiveStepState::new(&step.params), subspace: initial, step, iteration: 0 })
    }

    pub fn push(&mut self, x: &ObservedVector) -> Result<(TraceRecord, Outcome)> {
        if let Some(&bad) = x.indices().last().filter(|&&i| i >= self.subspace.ambient_dim()) {
            return Err(Error::IndexOutOfRange { index: bad, dim: self.subspace.ambient_dim() });
        }
        let out = process_vector(&mut self.subspace, &mut self.state, x, &self.step, self.iteration)?;
        self.iteration += 1;
        Ok(out)
    }

    pub fn subspace(&self) -> &Subspace {
        &self.subspace
    }

    pub fn state(&self) -> &AdaptiveStepState {
        &self.state
    }

    pub fn iterations(&self) -> u64 {
        self.iteration
    }

    pub fn into_subspace(self) -> Subspace {
        self.subspace
    }
}

pub(crate) fn check_columns(columns: &[ObservedVector], n: usize, rank: usize) -> Result<()> {
    for c in columns {
        if let Some(&bad) = c.indices().last().filter(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, dim: n });
        }
    }
    if !columns.iter().any(|c| c.len() >= rank && spherize(c).is_ok()) {
        return Err(Error::AllColumnsUnusable);
    }
    Ok(())
}

/// Draws column indices according to a [`Sampling`] policy.
pub(crate) struct ColumnSampler {
    mode: Sampling,
    order: Vec<usize>,
    pos: usize,
}

impl ColumnSampler {
    pub(crate) fn new(mode: Sampling, m: usize) -> Self {
        ColumnSampler { mode, order: (0..m).collect(), pos: m }
    }

    pub(crate) fn next(&mut self, rng: &mut Rng) -> usize {
        match self.mode {
            Sampling::Uniform => rng.random_range(0..self.order.len()),
            Sampling::CyclicShuffled => {
                if self.pos == self.order.len() {
                    self.order.shuffle(rng);
                    self.pos = 0;
                }
                self.pos += 1;
                self.order[self.pos - 1]
            }
        }
    }
}

/// Runs GASG21 from a random initial subspace drawn from `cfg.seed`.
pub fn run(columns: &[ObservedVector], ambient_dim: usize, cfg: &RecoveryConfig) -> Result<(Subspace, RunTrace)> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed);
    let u0 = init_subspace(ambient_dim, cfg.rank, &mut rng)?;
    run_from(u0, columns, cfg, &mut rng)
}

/// Runs GASG21 from `initial`, drawing columns from `rng`.
pub fn run_from(
    initial: Subspace,
    columns: &[ObservedVector],
    cfg: &RecoveryConfig,
    rng: &mut Rng,
) -> Result<(Subspace, RunTrace)> {
    cfg.validate()?;
    if initial.rank() != cfg.rank {
        return Err(Error::ShapeMismatch(format!(
            "initial subspace has rank {} but rank {} was requested",
            initial.rank(),
            cfg.rank
        )));
    }
    if let Some(t) = &cfg.truth {
        if t.ambient_dim() != initial.ambient_dim() {
            return Err(Error::ShapeMismatch("truth and data have different ambient dimensions".into()));
        }
    }
    let mut trace = RunTrace::new();
    if cfg.max_iterations == 0 {
        return Ok((initial, trace));
    }
    check_columns(columns, initial.ambient_dim(), cfg.rank)?;

    let mut engine = StreamingRecovery::new(initial, cfg.step)?;
    let mut sampler = ColumnSampler::new(cfg.sampling, columns.len());
    let mut unusable_run = 0usize;
    for _ in 0..cfg.max_iterations {
        let j = sampler.next(rng);
        let (mut rec, outcome) = engine.push(&columns[j])?;
        if outcome == Outcome::Unusable {
            unusable_run += 1;
            if unusable_run >= columns.len() {
                return Err(Error::AllColumnsUnusable);
            }
        } else {
            unusable_run = 0;
        }
        if let Some(t) = &cfg.truth {
            rec.angle = Some(principal_angle(t, engine.subspace())?);
        }
        trace.push(rec);
        if let (Some(tol), Some(a)) = (cfg.angle_tolerance, rec.angle) {
            if a <= tol {
                break;
            }
        }
    }
    Ok((engine.into_subspace(), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn column(id: usize, v: &[f64]) -> ObservedVector {
        ObservedVector::full(id, v)
    }

    #[test]
    fn init_subspace_shapes_and_determinism() {
        let mut r = rng::seeded(3);
        let u = init_subspace(6, 6, &mut r).unwrap();
        assert!(u.orthonormality_error() <= 1e-12);
        let a = init_subspace(50, 5, &mut rng::seeded(1)).unwrap();
        let b = init_subspace(50, 5, &mut rng::seeded(1)).unwrap();
        assert_eq!(a, b);
        let c = init_subspace(50, 5, &mut rng::seeded(2)).unwrap();
        assert!(a.orthonormality_error() <= 1e-12 && c.orthonormality_error() <= 1e-12);
        assert!(principal_angle(&a, &c).unwrap() > 0.1);
        assert!(init_subspace(3, 4, &mut r).is_err());
        assert!(init_subspace(3, 0, &mut r).is_err());
    }

    #[test]
    fn in_span_column_is_skipped() {
        let mut u = init_subspace(10, 2, &mut rng::seeded(9)).unwrap();
        let before = u.clone();
        let x = u.basis().column(0) * 3.0 + u.basis().column(1);
        let step = StepConfig::default();
        let mut st = AdaptiveStepState::new(&step.params);
        let (rec, out) = process_vector(&mut u, &mut st, &column(0, x.as_slice()), &step, 0).unwrap();
        assert_eq!(out, Outcome::Degenerate);
        assert!(rec.skipped);
        assert!(rec.residual_norm <= 1e-12);
        assert_eq!(u, before);
    }

    #[test]
    fn constant_step_rotates_onto_column_in_2d() {
        let alpha: f64 = 0.6;
        let mut u = Subspace::from_orthonormal(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let step = StepConfig { rule: StepRule::Constant, constant_eta: alpha / alpha.cos(), ..Default::default() };
        let mut st = AdaptiveStepState::new(&step.params);
        let x = column(0, &[2.0 * alpha.cos(), 2.0 * alpha.sin()]);
        let (rec, out) = process_vector(&mut u, &mut st, &x, &step, 0).unwrap();
        assert_eq!(out, Outcome::Updated);
        assert!(!rec.skipped);
        let target = Subspace::from_orthonormal(DMatrix::from_column_slice(2, 1, &[alpha.cos(), alpha.sin()])).unwrap();
        assert!(principal_angle(&u, &target).unwrap() <= 1e-10);
    }

    #[test]
    fn unusable_columns_are_skipped() {
        let mut u = init_subspace(5, 3, &mut rng::seeded(1)).unwrap();
        let step = StepConfig::default();
        let mut st = AdaptiveStepState::new(&step.params);
        let zero = column(0, &[0.0; 5]);
        assert_eq!(process_vector(&mut u, &mut st, &zero, &step, 0).unwrap().1, Outcome::Unusable);
        let few = ObservedVector::new(1, vec![0, 3], vec![1.0, 2.0]).unwrap();
        let (rec, out) = process_vector(&mut u, &mut st, &few, &step, 1).unwrap();
        assert_eq!(out, Outcome::Unusable);
        assert!(rec.skipped && rec.residual_norm.is_nan());
    }

    #[test]
    fn every_step_keeps_orthonormality() {
        let mut r = rng::seeded(4);
        let mut u = init_subspace(30, 4, &mut r).unwrap();
        let step = StepConfig::default();
        let mut st = AdaptiveStepState::new(&step.params);
        for it in 0..200 {
            let v = rng::gaussian_matrix(30, 1, &mut r);
            let (_, out) = process_vector(&mut u, &mut st, &column(it, v.as_slice()), &step, it as u64).unwrap();
            assert_eq!(out, Outcome::Updated);
            assert!(u.orthonormality_error() <= 1e-10);
        }
    }

    #[test]
    fn zero_iterations_returns_initial() {
        let mut cfg = RecoveryConfig::new(2);
        cfg.max_iterations = 0;
        cfg.seed = 5;
        let (u, trace) = run(&[column(0, &[1.0, 0.0, 0.0])], 3, &cfg).unwrap();
        assert!(trace.is_empty());
        assert_eq!(u, init_subspace(3, 2, &mut rng::seeded(5)).unwrap());
    }

    #[test]
    fn all_unusable_is_an_error() {
        let cfg = RecoveryConfig::new(3);
        let cols = vec![ObservedVector::new(0, vec![0, 1], vec![1.0, 1.0]).unwrap(), column(1, &[0.0; 4])];
        assert_eq!(run(&cols, 4, &cfg).unwrap_err(), Error::AllColumnsUnusable);
        assert_eq!(run(&[], 4, &cfg).unwrap_err(), Error::AllColumnsUnusable);
    }

    #[test]
    fn out_of_range_rows_are_rejected() {
        let cfg = RecoveryConfig::new(1);
        let cols = vec![ObservedVector::new(0, vec![0, 7], vec![1.0, 1.0]).unwrap()];
        assert!(matches!(run(&cols, 4, &cfg), Err(Error::IndexOutOfRange { index: 7, dim: 4 })));
    }

    #[test]
    fn angle_tolerance_requires_truth() {
        let mut cfg = RecoveryConfig::new(1);
        cfg.angle_tolerance = Some(1e-3);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cyclic_sampling_visits_each_column_once_per_pass() {
        let mut r = rng::seeded(2);
        let mut s = ColumnSampler::new(Sampling::CyclicShuffled, 7);
        for _ in 0..3 {
            let mut seen: Vec<usize> = (0..7).map(|_| s.next(&mut r)).collect();
            seen.sort();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn step_rule_parsing() {
        assert_eq!("grouse".parse::<StepRule>().unwrap(), StepRule::Grouse);
        assert!("sgd".parse::<StepRule>().is_err());
    }

    #[test]
    fn clean_data_converges() {
        let mut r = rng::seeded(10);
        let truth = init_subspace(40, 3, &mut r).unwrap();
        let coeffs = rng::gaussian_matrix(3, 120, &mut r);
        let x = truth.basis() * coeffs;
        let cols: Vec<_> = (0..120).map(|j| column(j, x.column(j).as_slice())).collect();
        let mut cfg = RecoveryConfig::new(3);
        cfg.max_iterations = 3000;
        cfg.truth = Some(truth.clone());
        let (u, trace) = run(&cols, 40, &cfg).unwrap();
        let a = principal_angle(&truth, &u).unwrap();
        assert!(a <= 1e-6, "angle {a}");
        assert_eq!(trace.last_angle().unwrap(), a);
    }
}
