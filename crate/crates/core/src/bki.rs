//! Per-cell Dirichlet evidence and the statistics read back from it.

use crate::belief::{argmax, ClassProbability};

/// Kahan-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new(value: f64) -> Self {
        Self {
            sum: value,
            comp: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Dirichlet parameters of one query location plus the accumulators used
/// for the uncertainty decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletCell {
    alpha: Vec<KahanSum>,
    alpha0: f64,
    kernel_mass: KahanSum,
    weighted_u: KahanSum,
}

/// Label, mean and label variance of a cell's posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats {
    pub label: usize,
    pub expectation: Vec<f64>,
    pub variance: f64,
}

/// Semantic, sparsity and total uncertainty of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uncertainty {
    pub semantic: f64,
    pub sparsity: f64,
    pub total: f64,
}

/// Largest possible Dirichlet marginal variance, used to normalize variance
/// into a confidence.
pub const MAX_VARIANCE: f64 = 0.25;

impl DirichletCell {
    pub fn new(classes: usize, alpha0: f64) -> Self {
        assert!(classes >= 2, "need at least two classes");
        assert!(alpha0 > 0.0, "prior must be positive");
        Self {
            alpha: vec![KahanSum::new(alpha0); classes],
            alpha0,
            kernel_mass: KahanSum::default(),
            weighted_u: KahanSum::default(),
        }
    }

    /// Rebuilds a cell from stored sums (compensation terms start at zero).
    pub fn from_sums(alpha: Vec<f64>, alpha0: f64, kernel_mass: f64, weighted_u: f64) -> Self {
        Self {
            alpha: alpha.into_iter().map(KahanSum::new).collect(),
            alpha0,
            kernel_mass: KahanSum::new(kernel_mass),
            weighted_u: KahanSum::new(weighted_u),
        }
    }

    pub fn classes(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.alpha.iter().map(KahanSum::value).collect()
    }

    pub fn kernel_mass(&self) -> f64 {
        self.kernel_mass.value()
    }

    pub fn weighted_u(&self) -> f64 {
        self.weighted_u.value()
    }

    /// `S = Σ α`.
    pub fn strength(&self) -> f64 {
        self.alpha.iter().map(KahanSum::value).sum()
    }

    pub fn is_touched(&self) -> bool {
        self.kernel_mass.value() > 0.0
    }

    /// `α^c += w·p^c`; the kernel-mass and weighted-uncertainty accumulators
    /// follow. Zero weight leaves the cell untouched.
    pub fn accumulate(&mut self, weight: f64, p: &[f64], u: f64) {
        if weight <= 0.0 {
            return;
        }
        debug_assert_eq!(p.len(), self.alpha.len());
        for (a, &pc) in self.alpha.iter_mut().zip(p) {
            a.add(weight * pc);
        }
        self.kernel_mass.add(weight);
        self.weighted_u.add(weight * u);
    }

    /// Convenience wrapper over [`accumulate`](Self::accumulate).
    pub fn accumulate_prob(&mut self, weight: f64, p: &ClassProbability, u: f64) {
        self.accumulate(weight, p.probs(), u);
    }

    pub fn posterior_stats(&self) -> PosteriorStats {
        let alpha = self.alpha();
        let s: f64 = alpha.iter().sum();
        let label = argmax(&alpha);
        let a = alpha[label];
        PosteriorStats {
            label,
            expectation: alpha.iter().map(|x| x / s).collect(),
            variance: a * (s - a) / (s * s * (s + 1.0)),
        }
    }

    /// `u_sem = Σk·u / Σk` (1 for an untouched cell),
    /// `u_spa = (C−1) / (C²(S+1))` with `S = C·α0 + Σk`, and
    /// `u = clamp(u_sem + u_spa, 0, 1)`.
    pub fn decomposed_uncertainty(&self) -> Uncertainty {
        let c = self.classes() as f64;
        let mass = self.kernel_mass();
        let semantic = if mass > 0.0 {
            (self.weighted_u() / mass).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let s = c * self.alpha0 + mass;
        let sparsity = (c - 1.0) / (c * c * (s + 1.0));
        Uncertainty {
            semantic,
            sparsity,
            total: (semantic + sparsity).clamp(0.0, 1.0),
        }
    }

    /// `1 − Var/max(Var)`, clamped to `[0, 1]`.
    pub fn variance_confidence(&self) -> f64 {
        (1.0 - self.posterior_stats().variance / MAX_VARIANCE).clamp(0.0, 1.0)
    }
}
