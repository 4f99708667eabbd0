//! Compactly supported sparse kernel and its uncertainty-adaptive variant.

use std::f64::consts::{E, PI};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("length scale must be positive, got {0}")]
    BadLengthScale(f64),
    #[error("cannot compute a threshold over an empty batch")]
    EmptyBatch,
    #[error("invalid kernel parameter {name} = {value}")]
    BadParam { name: &'static str, value: f64 },
}

pub type Result<T> = std::result::Result<T, KernelError>;

/// Hyperparameters of the adaptive kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    /// Base length scale in meters.
    pub length_scale: f64,
    /// Kept at 1; the kernel is already normalized to `k(0) = 1`.
    pub sigma0: f64,
    /// Uncertainty sensitivity of the support radius.
    pub beta: f64,
    pub gamma: f64,
    /// Fraction of the most uncertain inputs excluded each step.
    pub u_percentile: f64,
    /// When false the support stays at `length_scale` regardless of `u`.
    pub adaptive_scale: bool,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            length_scale: 0.2,
            sigma0: 1.0,
            beta: 0.75,
            gamma: 1.0,
            u_percentile: 0.10,
            adaptive_scale: true,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        let check = |name, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(KernelError::BadParam { name, value })
            }
        };
        check("length_scale", self.length_scale, self.length_scale > 0.0)?;
        check("beta", self.beta, self.beta > 0.0)?;
        check("sigma0", self.sigma0, self.sigma0 == 1.0)?;
        check("gamma", self.gamma, self.gamma == 1.0)?;
        check(
            "u_percentile",
            self.u_percentile,
            (0.0..=1.0).contains(&self.u_percentile),
        )
    }

    /// Support radius for an input with uncertainty `u`.
    pub fn effective_length(&self, u: f64) -> f64 {
        if self.adaptive_scale {
            self.length_scale * self.beta * (1.0 - self.gamma * u).exp()
        } else {
            self.length_scale
        }
    }

    /// Largest support any input can have (reached at `u = 0`).
    pub fn max_effective_length(&self) -> f64 {
        if self.adaptive_scale {
            self.length_scale * self.beta * E
        } else {
            self.length_scale
        }
    }
}

/// `k(d) = (2 + cos 2πr)/3 · (1 − r) + sin(2πr)/(2π)` with `r = d/l`, zero
/// for `d ≥ l`.
pub fn sparse_kernel(d: f64, l: f64) -> Result<f64> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(KernelError::BadLengthScale(l));
    }
    if d < 0.0 || d.is_nan() {
        return Err(KernelError::NegativeDistance(d));
    }
    Ok(sparse_kernel_unchecked(d, l))
}

#[inline]
pub(crate) fn sparse_kernel_unchecked(d: f64, l: f64) -> f64 {
    if d >= l {
        return 0.0;
    }
    let r = d / l;
    let x = 2.0 * PI * (1.0 - r);
    if x < 1.0 {
        return tail_series(x);
    }
    let phase = 2.0 * PI * r;
    ((2.0 + phase.cos()) / 3.0 * (1.0 - r) + phase.sin() / (2.0 * PI)).clamp(0.0, 1.0)
}

/// Kernel near the support edge as a power series in `x = 2π(1−r)`. The
/// closed form cancels catastrophically there since `k ~ x⁵`.
fn tail_series(x: f64) -> f64 {
    let x2 = x * x;
    // term_n = x^(2n+1)/(2n+1)!, starting at n = 2.
    let mut term = x2 * x2 * x / 120.0;
    let mut sum = 0.0;
    for n in 2..12u32 {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * (2.0 * n as f64 - 2.0) / 3.0 * term;
        let m = 2.0 * n as f64;
        term *= x2 / ((m + 2.0) * (m + 3.0));
    }
    (sum / (2.0 * PI)).max(0.0)
}

/// Uncertainty threshold that excludes the `u_percentile` most uncertain
/// members of the batch.
///
/// With `k = ⌈ũ·N⌉` members to exclude, the threshold is the midpoint of the
/// order statistics straddling the cut (`x_(N−k)` and `x_(N−k+1)`, 1-based).
/// Everything strictly above it is filtered, so a batch of distinct values
/// loses exactly `k` members. `ũ = 0` returns the batch maximum; excluding
/// everything returns negative infinity.
pub fn u_threshold(uncertainties: &[f64], u_percentile: f64) -> Result<f64> {
    if uncertainties.is_empty() {
        return Err(KernelError::EmptyBatch);
    }
    if !(0.0..=1.0).contains(&u_percentile) {
        return Err(KernelError::BadParam {
            name: "u_percentile",
            value: u_percentile,
        });
    }
    let mut sorted = uncertainties.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Guard against 0.1 * 30 = 3.0000000000000004 style round-up.
    let excluded = ((u_percentile * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if excluded == 0 {
        return Ok(sorted[n - 1]);
    }
    if excluded >= n {
        return Ok(f64::NEG_INFINITY);
    }
    let kept = sorted[n - excluded - 1];
    let dropped = sorted[n - excluded];
    Ok(kept + 0.5 * (dropped - kept))
}

/// Adaptive kernel: zero above the threshold, otherwise the sparse kernel
/// with support `ℓ·β·e^{1−γu}`.
pub fn adaptive_kernel(d: f64, u: f64, params: &KernelParams, u_thr: f64) -> Result<f64> {
    if u > u_thr {
        return Ok(0.0);
    }
    sparse_kernel(d, params.effective_length(u))
}
