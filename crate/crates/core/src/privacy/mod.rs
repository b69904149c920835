//! Per-example clipping, Gaussian noising and the private/plain update steps,
//! plus the Rényi-DP accountant.

mod accountant;

pub use accountant::{
    gaussian_rdp_epsilon, rdp_to_dp, standard_composition_budget, theorem1_budget,
    AccountantState, AuditRecord, NOISE_CONVENTION,
};

use rand_distr::{Distribution, StandardNormal};

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};
use crate::lm::{apply_update, per_example_gradient, Gradient, LmParameters};
use crate::rng::{self, tag, SeededRng};
use crate::scalar::{l2_norm, Scalar};

/// Noise multiplier, clipping bound, accounting parameters and the learning
/// rate used for private steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacySpec<T> {
    /// Noise multiplier; the per-coordinate noise std is `sigma * clip`.
    pub sigma: T,
    /// L2 bound applied to every per-example gradient.
    pub clip: T,
    pub delta: T,
    /// Rényi order.
    pub alpha: T,
    pub eta: T,
}

impl<T: Scalar> PrivacySpec<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::PrivacyParameter(m.to_string()));
        if !(self.sigma > T::zero()) {
            return bad("sigma must be positive");
        }
        if !(self.clip > T::zero()) {
            return bad("clipping bound must be positive");
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return bad("delta must lie in (0, 1)");
        }
        if !(self.alpha > T::one()) {
            return bad("alpha must exceed 1");
        }
        if !(self.eta.is_finite() && self.eta >= T::zero()) {
            return bad("learning rate must be finite and non-negative");
        }
        Ok(())
    }
}

fn clip_values<T: Scalar>(values: &mut [T], bound: T) -> Result<()> {
    if !(bound > T::zero()) {
        return Err(Error::PrivacyParameter("clipping bound must be positive".into()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i}")));
    }
    let norm = l2_norm(values);
    if norm <= bound {
        return Ok(());
    }
    let scale = bound / norm;
    for v in values.iter_mut() {
        *v *= scale;
    }
    // Rounding can leave the scaled norm a few ulps above the bound.
    let shrink = T::one() - T::epsilon();
    while l2_norm(values) > bound {
        for v in values.iter_mut() {
            *v *= shrink;
        }
    }
    Ok(())
}

/// Scales `g` down to L2 norm `bound` when it exceeds it; otherwise returns it
/// unchanged.
pub fn clip<T: Scalar>(g: &Gradient<T>, bound: T) -> Result<Gradient<T>> {
    let mut out = g.clone();
    clip_values(out.flat_view_mut(), bound)?;
    Ok(out)
}

/// [`clip`] on a bare vector.
pub fn clip_vector<T: Scalar>(g: &[T], bound: T) -> Result<Vec<T>> {
    let mut out = g.to_vec();
    clip_values(&mut out, bound)?;
    Ok(out)
}

/// Dedicated Gaussian noise stream, independent of every shuffling stream.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: SeededRng,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: rng::stream(seed, tag::NOISE),
        }
    }

    /// Adds i.i.d. `N(0, std^2)` to every entry.
    pub fn perturb<T: Scalar>(&mut self, values: &mut [T], std: T) {
        for v in values.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *v += std * T::of(z);
        }
    }
}

/// `(sum_of_clipped + z) / n` with `z ~ N(0, (sigma*clip)^2 I)`, drawn once.
pub fn privatize<T: Scalar>(
    mut sum_of_clipped: Gradient<T>,
    n: usize,
    spec: &PrivacySpec<T>,
    noise: &mut NoiseStream,
) -> Result<Gradient<T>> {
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    noise.perturb(sum_of_clipped.flat_view_mut(), spec.sigma * spec.clip);
    let n = T::of_usize(n);
    for v in sum_of_clipped.flat_view_mut() {
        *v /= n;
    }
    Ok(sum_of_clipped)
}

/// Summary of one update step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<T> {
    /// Sum of example NLLs before the update.
    pub loss: T,
    pub examples: usize,
    /// Examples whose gradient exceeded the clipping bound.
    pub clipped: usize,
}

/// One private step on `batch`: clip every per-example gradient, add one
/// noise draw to their sum, divide by the batch size and descend with
/// `spec.eta`.
pub fn dp_sgd_step<T: Scalar>(
    params: &mut LmParameters<T>,
    batch: &[&TokenSequence],
    spec: &PrivacySpec<T>,
    noise: &mut NoiseStream,
) -> Result<StepOutcome<T>> {
    spec.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sum = Gradient::zeros(params.layout());
    let mut loss = T::zero();
    let mut clipped = 0;
    for seq in batch {
        let (l, mut g) = per_example_gradient(params, seq)?;
        loss += l;
        if g.norm() > spec.clip {
            clipped += 1;
        }
        clip_values(g.flat_view_mut(), spec.clip)?;
        sum.add_assign(&g)?;
    }
    let update = privatize(sum, batch.len(), spec, noise)?;
    apply_update(params, &update, spec.eta)?;
    Ok(StepOutcome {
        loss,
        examples: batch.len(),
        clipped,
    })
}

/// Plain SGD on the batch-mean gradient.
pub fn sgd_step<T: Scalar>(
    params: &mut LmParameters<T>,
    batch: &[&TokenSequence],
    eta: T,
) -> Result<StepOutcome<T>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sum = Gradient::zeros(params.layout());
    let mut loss = T::zero();
    for seq in batch {
        let (l, g) = per_example_gradient(params, seq)?;
        loss += l;
        sum.add_assign(&g)?;
    }
    let n = T::of_usize(batch.len());
    for v in sum.flat_view_mut() {
        *v /= n;
    }
    apply_update(params, &sum, eta)?;
    Ok(StepOutcome {
        loss,
        examples: batch.len(),
        clipped: 0,
    })
}
