//! Confidence ellipsoids of Gaussian primitives and the exact Euclidean
//! distance from a query point to their boundary.
//!
//! The ellipsoid of a Gaussian `(μ, Σ)` at level `τ` is
//! `{x : (x−μ)ᵀ Σ⁻¹ (x−μ) ≤ τ}`, with `τ` the χ² quantile for the enclosed
//! probability mass. Distances are computed in the principal frame, where the
//! closest boundary point is `x_i = a_i² y_i / (a_i² + t)` for the unique
//! `t > 0` satisfying `Σ (a_i y_i / (a_i² + t))² = 1`.

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipsoidError {
    #[error("chi-squared quantile only supports 2 or 3 degrees of freedom, got {0}")]
    UnsupportedDof(usize),
    #[error("probability mass must lie in (0, 1), got {0}")]
    MassOutOfRange(f64),
    #[error("covariance is not positive definite (smallest eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("tau must be finite and non-negative, got {0}")]
    BadTau(f64),
}

pub type Result<T> = std::result::Result<T, EllipsoidError>;

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // Series: P = e^{-x} x^a / Γ(a) · Σ x^n / (a (a+1) ... (a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..1000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum.ln() + ln_prefix).exp().clamp(0.0, 1.0)
    } else {
        // Continued fraction for Q = 1 − P (modified Lentz).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-17 {
                break;
            }
        }
        (1.0 - (ln_prefix.exp() * h)).clamp(0.0, 1.0)
    }
}

/// Lanczos approximation of `ln Γ(x)` for `x > 0`.
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// CDF of the χ² distribution with `dof` degrees of freedom.
pub fn chi2_cdf(dof: usize, x: f64) -> f64 {
    regularized_lower_gamma(dof as f64 / 2.0, x / 2.0)
}

/// Level `τ` with `P(χ²_dof ≤ τ) = mass`.
///
/// Two degrees of freedom use the closed form `−2 ln(1 − mass)`; three use a
/// bracketed bisection on the regularized lower incomplete gamma.
pub fn chi2_quantile(dof: usize, mass: f64) -> Result<f64> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(EllipsoidError::MassOutOfRange(mass));
    }
    match dof {
        2 => Ok(-2.0 * (-mass).ln_1p()),
        3 => {
            let mut lo = 0.0;
            let mut hi = 1.0;
            while chi2_cdf(3, hi) < mass {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if chi2_cdf(3, mid) < mass {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi.max(1e-300) {
                    break;
                }
            }
            Ok(0.5 * (lo + hi))
        }
        other => Err(EllipsoidError::UnsupportedDof(other)),
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (ascending) and the matching eigenvectors as columns.
pub fn symmetric_eigen<const D: usize>(
    m: &SMatrix<f64, D, D>,
) -> (SVector<f64, D>, SMatrix<f64, D, D>) {
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = SMatrix::<f64, D, D>::identity();
    let scale = a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return (SVector::zeros(), v);
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..D {
            for q in (p + 1)..D {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..D {
            for q in (p + 1)..D {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..D {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..D {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..D {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..D).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = SVector::<f64, D>::from_fn(|i, _| a[(order[i], order[i])]);
    let vectors = SMatrix::<f64, D, D>::from_fn(|r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Confidence ellipsoid in `D` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidN<const D: usize> {
    pub center: SVector<f64, D>,
    /// Principal axes as orthonormal columns.
    pub axes: SMatrix<f64, D, D>,
    /// Eigenvalues of the covariance, matching `axes`.
    pub variances: SVector<f64, D>,
    /// `a_i = sqrt(τ λ_i)`.
    pub semi_axes: SVector<f64, D>,
    pub tau: f64,
}

pub type Ellipsoid = EllipsoidN<3>;
pub type Ellipse = EllipsoidN<2>;

/// Outcome of a closest-point projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<const D: usize> {
    pub distance: f64,
    /// Closest boundary point, or the query itself when it lies inside.
    pub point: SVector<f64, D>,
    pub inside: bool,
}

impl<const D: usize> EllipsoidN<D> {
    /// Builds the level-`τ` ellipsoid of `N(center, cov)`. `τ = 0` yields a
    /// point ellipsoid whose distance is the Euclidean distance to the center.
    pub fn from_gaussian(
        center: SVector<f64, D>,
        cov: &SMatrix<f64, D, D>,
        tau: f64,
    ) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(EllipsoidError::BadTau(tau));
        }
        let (variances, axes) = symmetric_eigen(cov);
        if !(variances[0] > 0.0) {
            return Err(EllipsoidError::NotPositiveDefinite(variances[0]));
        }
        let semi_axes = variances.map(|l| (tau * l).sqrt());
        Ok(Self {
            center,
            axes,
            variances,
            semi_axes,
            tau,
        })
    }

    pub fn max_semi_axis(&self) -> f64 {
        self.semi_axes.max()
    }

    /// Query expressed in the principal frame.
    pub fn to_local(&self, x: &SVector<f64, D>) -> SVector<f64, D> {
        self.axes.transpose() * (x - self.center)
    }

    pub fn to_world(&self, y: &SVector<f64, D>) -> SVector<f64, D> {
        self.axes * y + self.center
    }

    /// Squared Mahalanobis distance of `x` from the center.
    pub fn mahalanobis_sq(&self, x: &SVector<f64, D>) -> f64 {
        let y = self.to_local(x);
        (0..D).map(|i| y[i] * y[i] / self.variances[i]).sum()
    }

    /// Cheap lower bound on [`surface_distance`](Self::surface_distance):
    /// distance to the axis-aligned box enclosing the ellipsoid in its
    /// principal frame.
    pub fn distance_lower_bound(&self, x: &SVector<f64, D>) -> f64 {
        let y = self.to_local(x);
        (0..D)
            .map(|i| {
                let g = (y[i].abs() - self.semi_axes[i]).max(0.0);
                g * g
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn surface_distance(&self, x: &SVector<f64, D>) -> f64 {
        self.project(x).distance
    }

    /// Closest point on the boundary; queries inside (or within 1e-12 of the
    /// level set) report distance zero.
    pub fn project(&self, x: &SVector<f64, D>) -> Projection<D> {
        let y = self.to_local(x);
        if self.tau == 0.0 {
            return Projection {
                distance: y.norm(),
                point: self.center,
                inside: false,
            };
        }
        let m2: f64 = (0..D).map(|i| y[i] * y[i] / self.variances[i]).sum();
        if m2 <= self.tau + 1e-12 {
            return Projection {
                distance: 0.0,
                point: *x,
                inside: true,
            };
        }
        let a = self.semi_axes;
        let a2 = a.map(|v| v * v);
        let a2_max = a2.max();
        let secular = |t: f64| -> (f64, f64) {
            let mut f = -1.0;
            let mut df = 0.0;
            for i in 0..D {
                let r = a[i] * y[i] / (a2[i] + t);
                f += r * r;
                df -= 2.0 * r * r / (a2[i] + t);
            }
            (f, df)
        };
        let mut lo = 0.0;
        let mut hi = y.norm() * a.max() + a2_max;
        let mut t = 0.0;
        let tol = 1e-12 * a2_max;
        for _ in 0..200 {
            let (f, df) = secular(t);
            if f > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let mut next = if df < 0.0 { t - f / df } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - t).abs();
            t = next;
            if step < tol || hi - lo < tol {
                break;
            }
        }
        let local = SVector::<f64, D>::from_fn(|i, _| a2[i] * y[i] / (a2[i] + t));
        let point = self.to_world(&local);
        Projection {
            distance: (y - local).norm(),
            point,
            inside: false,
        }
    }
}
