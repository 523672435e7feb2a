//! Multi-level adaptive constant step size.
//!
//! An accumulator `μ` is driven by a sigmoid of the negated inner product of
//! consecutive gradients. Anti-aligned gradients (overshooting) push `μ` up,
//! aligned gradients push it down. When `μ` leaves `(μ_min, μ_max)` the level
//! moves by one and `μ` is reset to the band midpoint; the step size is
//! `η₀ · 2^{−level}`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grassmann::RankOneGradient;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub f_max: f64,
    pub f_min: f64,
    pub omega: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub eta0: f64,
}

impl Default for StepParams {
    fn default() -> Self {
        StepParams { f_max: 0.5, f_min: -1.0, omega: 0.1, mu_min: 0.0, mu_max: 15.0, eta0: 1.0 }
    }
}

impl StepParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min < 0.0 && self.f_max > 0.0) {
            return Err(Error::InvalidParams(format!(
                "need F_min < 0 < F_max, got F_min={}, F_max={}",
                self.f_min, self.f_max
            )));
        }
        if !(self.omega > 0.0) {
            return Err(Error::InvalidParams(format!("omega must be > 0, got {}", self.omega)));
        }
        if !(self.mu_min < self.mu_max) {
            return Err(Error::InvalidParams(format!(
                "need mu_min < mu_max, got {} and {}",
                self.mu_min, self.mu_max
            )));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::InvalidParams(format!("eta0 must be > 0, got {}", self.eta0)));
        }
        Ok(())
    }

    /// Band midpoint, used as the initial and reset value of `μ`.
    pub fn mu_reset(&self) -> f64 {
        0.5 * (self.mu_min + self.mu_max)
    }
}

/// `F_min + (F_max − F_min) / (1 − (F_max/F_min)·exp(−x/ω))`.
pub fn sigmoid(x: f64, p: &StepParams) -> f64 {
    p.f_min + (p.f_max - p.f_min) / (1.0 - (p.f_max / p.f_min) * (-x / p.omega).exp())
}

/// Frobenius inner product of two rank-one gradients `−e₁w₁ᵀ` and `−e₂w₂ᵀ`,
/// computed as `(e₁ᵀe₂)(w₁ᵀw₂)`.
pub fn gradient_inner_product(prev: &RankOneGradient, cur: &RankOneGradient) -> Result<f64> {
    factor_inner_product(&prev.e, &prev.w, &cur.e, &cur.w)
}

fn factor_inner_product(
    e1: &DVector<f64>,
    w1: &DVector<f64>,
    e2: &DVector<f64>,
    w2: &DVector<f64>,
) -> Result<f64> {
    if e1.len() != e2.len() || w1.len() != w2.len() {
        return Err(Error::ShapeMismatch(format!(
            "gradients {}x{} and {}x{}",
            e1.len(),
            w1.len(),
            e2.len(),
            w2.len()
        )));
    }
    Ok(e1.dot(e2) * w1.dot(w2))
}

/// One application of the `μ` / level update for a given gradient inner
/// product. Returns the new `(μ, level)`.
pub fn update_mu_level(mu: f64, level: i32, inner: f64, p: &StepParams) -> (f64, i32) {
    let mu = (mu + sigmoid(-inner, p)).max(p.mu_min);
    if mu >= p.mu_max {
        (p.mu_reset(), level + 1)
    } else if mu <= p.mu_min {
        (p.mu_reset(), level - 1)
    } else {
        (mu, level)
    }
}

/// Controller state: `μ`, the level and the previous gradient's factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveStepState {
    mu: f64,
    level: i32,
    eta: f64,
    prev: Option<(DVector<f64>, DVector<f64>)>,
}

impl AdaptiveStepState {
    pub fn new(p: &StepParams) -> Self {
        AdaptiveStepState { mu: p.mu_reset(), level: 0, eta: p.eta0, prev: None }
    }

    /// State with an explicit `μ` and level and no stored gradient.
    pub fn with(mu: f64, level: i32, p: &StepParams) -> Self {
        AdaptiveStepState { mu, level, eta: p.eta0 * 2f64.powi(-level), prev: None }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn has_previous(&self) -> bool {
        self.prev.is_some()
    }

    /// Feeds the current gradient. The first call only stores it; later
    /// calls update `μ`, the level and `η` from the stored gradient.
    pub fn adapt(&mut self, cur: &RankOneGradient, p: &StepParams) -> Result<()> {
        if let Some((e, w)) = &self.prev {
            let inner = factor_inner_product(e, w, &cur.e, &cur.w)?;
            let (mu, level) = update_mu_level(self.mu, self.level, inner, p);
            self.mu = mu;
            self.level = level;
            self.eta = p.eta0 * 2f64.powi(-level);
        }
        match &mut self.prev {
            Some((e, w)) if e.len() == cur.e.len() && w.len() == cur.w.len() => {
                e.copy_from(&cur.e);
                w.copy_from(&cur.w);
            }
            slot => *slot = Some((cur.e.clone(), cur.w.clone())),
        }
        Ok(())
    }
}

/// Classic diminishing step `C / (1 + j)`.
pub fn diminishing(iteration: u64, scale: f64) -> f64 {
    scale / (1.0 + iteration as f64)
}
