//! Rényi-DP accounting for selectively private training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How noise enters a private step; recorded in every audit log.
pub const NOISE_CONVENTION: &str =
    "noise N(0,(sigma*C)^2) added once to the sum of clipped per-example gradients, then divided by |B_S|; sigma is a multiplier on C";

/// Order-`alpha` Rényi divergence between `N(0, sigma^2)` and `N(1, sigma^2)`:
/// `alpha / (2 sigma^2)`. With clipping bound `C` and noise std `sigma*C` the
/// sensitivity ratio is one.
pub fn gaussian_rdp_epsilon<T: Scalar>(sigma: T, alpha: T) -> Result<T> {
    if !(sigma > T::zero()) || !(alpha > T::one()) {
        return Err(Error::PrivacyParameter(format!(
            "need sigma > 0 and alpha > 1, got sigma {sigma}, alpha {alpha}"
        )));
    }
    Ok(alpha / (T::of(2.0) * sigma * sigma))
}

/// RDP-to-DP conversion `eps + ln(1/delta) / (alpha - 1)`.
pub fn rdp_to_dp<T: Scalar>(eps_rdp: T, alpha: T, delta: T) -> Result<T> {
    if !(alpha > T::one()) {
        return Err(Error::PrivacyParameter(format!("alpha must exceed 1, got {alpha}")));
    }
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::PrivacyParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(eps_rdp >= T::zero()) {
        return Err(Error::PrivacyParameter(format!("epsilon must be non-negative, got {eps_rdp}")));
    }
    Ok(eps_rdp + (T::one() / delta).ln() / (alpha - T::one()))
}

/// Inputs of the selective-training budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccountantState<T> {
    /// Training epochs.
    pub epochs: usize,
    /// Number of training sequences routed to private updates.
    pub sensitive_count: usize,
    pub batch_size: usize,
    /// Per-step RDP epsilon at order `alpha`.
    pub per_step_epsilon: T,
    pub alpha: T,
    /// Detector true-positive rate.
    pub gamma: T,
    /// Private steps actually executed; only used by the composition report.
    pub private_steps: usize,
}

impl<T: Scalar> AccountantState<T> {
    fn check(&self, delta: T) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::PrivacyParameter("batch size must be positive".into()));
        }
        if !(self.per_step_epsilon >= T::zero()) {
            return Err(Error::PrivacyParameter("per-step epsilon must be non-negative".into()));
        }
        if !(self.gamma >= T::zero() && self.gamma <= T::one()) {
            return Err(Error::PrivacyParameter(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(delta < T::one()) {
            return Err(Error::PrivacyParameter(format!("delta must be below 1, got {delta}")));
        }
        if !(delta > T::one() - self.gamma) {
            return Err(Error::DeltaBelowDetectorFloor {
                delta: delta.as_f64(),
                gamma: self.gamma.as_f64(),
            });
        }
        Ok(())
    }
}

/// `(T * N_S * eps / |B| + ln(1/delta) / (alpha - 1), delta)`, valid for
/// `1 - gamma < delta < 1`.
pub fn theorem1_budget<T: Scalar>(state: &AccountantState<T>, delta: T) -> Result<(T, T)> {
    state.check(delta)?;
    let linear = T::of_usize(state.epochs) * T::of_usize(state.sensitive_count) * state.per_step_epsilon
        / T::of_usize(state.batch_size);
    Ok((rdp_to_dp(linear, state.alpha, delta)?, delta))
}

/// Reference figure from plain RDP composition over the executed private
/// steps, `private_steps * eps + ln(1/delta) / (alpha - 1)`. Reported next to
/// [`theorem1_budget`] for comparison only.
pub fn standard_composition_budget<T: Scalar>(state: &AccountantState<T>, delta: T) -> Result<T> {
    state.check(delta)?;
    rdp_to_dp(
        T::of_usize(state.private_steps) * state.per_step_epsilon,
        state.alpha,
        delta,
    )
}

/// Audit record appended to each run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub sigma: f64,
    pub clip: f64,
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub sensitive_count: usize,
    pub batch_size: usize,
    pub per_step_epsilon: f64,
    pub eps_total: f64,
    pub private_steps: usize,
    /// Not the selective-training bound; plain composition over steps.
    pub standard_composition_eps: f64,
    pub noise_convention: String,
    pub log_base: String,
}

impl AuditRecord {
    pub fn compute(
        sigma: f64,
        clip: f64,
        delta: f64,
        state: &AccountantState<f64>,
    ) -> Result<Self> {
        let (eps_total, _) = theorem1_budget(state, delta)?;
        Ok(Self {
            sigma,
            clip,
            alpha: state.alpha,
            delta,
            gamma: state.gamma,
            epochs: state.epochs,
            sensitive_count: state.sensitive_count,
            batch_size: state.batch_size,
            per_step_epsilon: state.per_step_epsilon,
            eps_total,
            private_steps: state.private_steps,
            standard_composition_eps: standard_composition_budget(state, delta)?,
            noise_convention: NOISE_CONVENTION.to_string(),
            log_base: "natural".to_string(),
        })
    }
}
