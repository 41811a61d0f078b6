//! Reparameterized soft masks.
//!
//! Each parameter slot holds a weight `w` and a spread `sigma`. Every
//! feature position emits an unnormalized Gaussian from its slot, and the
//! mask value at position `j` is
//!
//! ```text
//! lambda_j = sigmoid( sum_i  w(i) * exp(-d(i, j)^2 / sigma(i)) )
//! ```
//!
//! where `w(i)`, `sigma(i)` are the slot values tied to position `i`. Tying
//! lets several positions (sub-word pieces of one word) share a slot; each
//! member position still emits its own Gaussian, and slot gradients sum over
//! members.
//!
//! Kernel terms with `exp(-d^2/sigma) < truncation_eps` may be skipped,
//! which bounds the interaction radius by `d^2 <= sigma * ln(1/eps)`.
//! `truncation_eps = 0` forces the exact O(n^2) sum.

use crate::error::{Error, Result};
use crate::num::{sigmoid, Real};
use crate::space::FeatureSpace;

/// Optimization variables: one `(w, sigma)` pair per slot plus the
/// feature -> slot tying map.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskParams<T> {
    w: Vec<T>,
    sigma: Vec<T>,
    tying: Vec<usize>,
}

impl<T: Real> MaskParams<T> {
    /// One slot per feature (identity tying).
    pub fn untied(n: usize, w_init: T, sigma_init: T) -> Result<Self> {
        Self::tied((0..n).collect(), w_init, sigma_init)
    }

    /// Explicit tying map from feature index to slot index. Slots must be
    /// numbered `0..slot_count` with every slot referenced at least once.
    pub fn tied(tying: Vec<usize>, w_init: T, sigma_init: T) -> Result<Self> {
        if tying.is_empty() {
            return Err(Error::invalid_argument("tying map must be non-empty"));
        }
        if sigma_init <= T::zero() {
            return Err(Error::invalid_state("sigma must be strictly positive"));
        }
        let slots = tying.iter().max().unwrap() + 1;
        if slots > tying.len() {
            return Err(Error::invalid_argument(
                "slot count cannot exceed feature count",
            ));
        }
        let mut covered = vec![false; slots];
        for &s in &tying {
            covered[s] = true;
        }
        if covered.iter().any(|&c| !c) {
            return Err(Error::invalid_argument(
                "tying map must be surjective onto slots",
            ));
        }
        Ok(Self {
            w: vec![w_init; slots],
            sigma: vec![sigma_init; slots],
            tying,
        })
    }

    pub fn n_features(&self) -> usize {
        self.tying.len()
    }

    pub fn n_slots(&self) -> usize {
        self.w.len()
    }

    pub fn w(&self) -> &[T] {
        &self.w
    }

    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }

    pub fn tying(&self) -> &[usize] {
        &self.tying
    }

    pub fn w_mut(&mut self) -> &mut [T] {
        &mut self.w
    }

    /// Mutable sigma values. Callers must keep them strictly positive;
    /// [`MaskParams::clamp_sigma`] after an optimizer step does that.
    pub fn sigma_mut(&mut self) -> &mut [T] {
        &mut self.sigma
    }

    pub fn clamp_sigma(&mut self, min: T, max: T) {
        for s in &mut self.sigma {
            if *s < min {
                *s = min;
            } else if *s > max {
                *s = max;
            }
        }
    }

    fn check_sigma(&self) -> Result<()> {
        if self.sigma.iter().any(|&s| s <= T::zero()) {
            return Err(Error::invalid_state("sigma must be strictly positive"));
        }
        Ok(())
    }

    fn check_space(&self, space: &FeatureSpace) -> Result<()> {
        if self.n_features() != space.len() {
            return Err(Error::shape(
                format!("{} features", space.len()),
                format!("{} features", self.n_features()),
            ));
        }
        Ok(())
    }
}

/// The derived per-feature blending coefficients, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask<T> {
    lambda: Vec<T>,
}

impl<T: Real> Mask<T> {
    pub fn from_lambda(lambda: Vec<T>) -> Result<Self> {
        if lambda
            .iter()
            .any(|&l| !(l >= T::zero() && l <= T::one()))
        {
            return Err(Error::invalid_argument("lambda values must lie in [0, 1]"));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn mean(&self) -> T {
        if self.lambda.is_empty() {
            return T::zero();
        }
        self.lambda.iter().copied().sum::<T>() / T::of(self.lambda.len() as f64)
    }
}

fn radius_sq_for<T: Real>(sigma: T, truncation_eps: f64) -> f64 {
    if truncation_eps <= 0.0 {
        f64::INFINITY
    } else {
        sigma.as_f64() * (1.0 / truncation_eps).ln()
    }
}

/// Pre-activation sums `s_j`; shared by value and gradient paths.
fn accumulate_preactivations<T: Real>(
    space: &FeatureSpace,
    params: &MaskParams<T>,
    truncation_eps: f64,
) -> Vec<T> {
    let n = space.len();
    let mut s = vec![T::zero(); n];
    for i in 0..n {
        let slot = params.tying[i];
        let w = params.w[slot];
        let sig = params.sigma[slot];
        let radius_sq = radius_sq_for(sig, truncation_eps);
        space.visit_within(i, radius_sq, &mut |j, d2| {
            s[j] += w * (-T::of(d2) / sig).exp();
        });
    }
    s
}

/// Evaluate the mask for the given parameters.
pub fn compute_mask<T: Real>(
    space: &FeatureSpace,
    params: &MaskParams<T>,
    truncation_eps: f64,
) -> Result<Mask<T>> {
    if truncation_eps < 0.0 {
        return Err(Error::invalid_argument("truncation_eps must be >= 0"));
    }
    params.check_space(space)?;
    params.check_sigma()?;
    let lambda = accumulate_preactivations(space, params, truncation_eps)
        .into_iter()
        .map(sigmoid)
        .collect();
    Ok(Mask { lambda })
}

/// Pull a cotangent on lambda back to per-slot gradients `(dL/dw, dL/dsigma)`.
///
/// Per kernel term: `ds_j/dw_i = exp(-d^2/sigma_i)`,
/// `ds_j/dsigma_i = w_i * exp(-d^2/sigma_i) * d^2 / sigma_i^2`, and
/// `dlambda_j/ds_j = lambda_j (1 - lambda_j)`. Tied features accumulate
/// into their shared slot.
pub fn mask_vjp<T: Real>(
    space: &FeatureSpace,
    params: &MaskParams<T>,
    dl_dlambda: &[T],
    truncation_eps: f64,
) -> Result<(Vec<T>, Vec<T>)> {
    if truncation_eps < 0.0 {
        return Err(Error::invalid_argument("truncation_eps must be >= 0"));
    }
    params.check_space(space)?;
    params.check_sigma()?;
    if dl_dlambda.len() != space.len() {
        return Err(Error::shape(
            format!("{} cotangents", space.len()),
            format!("{}", dl_dlambda.len()),
        ));
    }

    let n = space.len();
    let s = accumulate_preactivations(space, params, truncation_eps);
    // dL/ds_j, folded once so the pair loop below is a plain accumulation
    let ds: Vec<T> = s
        .iter()
        .zip(dl_dlambda)
        .map(|(&sj, &g)| {
            let l = sigmoid(sj);
            g * l * (T::one() - l)
        })
        .collect();

    let mut dw = vec![T::zero(); params.n_slots()];
    let mut dsigma = vec![T::zero(); params.n_slots()];
    for i in 0..n {
        let slot = params.tying[i];
        let w = params.w[slot];
        let sig = params.sigma[slot];
        let radius_sq = radius_sq_for(sig, truncation_eps);
        space.visit_within(i, radius_sq, &mut |j, d2| {
            let d2t = T::of(d2);
            let k = (-d2t / sig).exp();
            dw[slot] += ds[j] * k;
            dsigma[slot] += ds[j] * w * k * d2t / (sig * sig);
        });
    }
    Ok((dw, dsigma))
}
