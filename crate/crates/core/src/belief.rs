//! Subjective-logic belief masses and Dempster-Shafer combination.
//!
//! A prediction over `C` classes is split into per-class beliefs `b^c` and a
//! residual uncertainty `u` with `u + Σ b^c = 1`. Two masses are fused with
//!
//! ```text
//! δ   = Σ_{x≠y} b1^x b2^y
//! b^c = (b1^c b2^c + b1^c u2 + b2^c u1) / (1 − δ)
//! u   = u1 u2 / (1 − δ)
//! ```
//!
//! and probabilities map to beliefs through `b^c = p^c − u/C`.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

/// Tolerance used when validating that masses and distributions sum to one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Conflict at or above `1 - CONFLICT_EPS` is treated as total conflict.
pub const CONFLICT_EPS: f64 = 1e-12;

static CLAMP_WARNINGS: AtomicU64 = AtomicU64::new(0);

/// Number of `prob_to_belief` conversions (process-wide) that had to clamp a
/// negative belief to zero.
pub fn clamp_warning_count() -> u64 {
    CLAMP_WARNINGS.load(Ordering::Relaxed)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("uncertainty {0} outside [0, 1]")]
    UncertaintyOutOfRange(f64),
    #[error("invalid value {value} for class {class}")]
    InvalidEntry { class: usize, value: f64 },
    #[error("masses do not sum to one (sum = {0})")]
    NotNormalized(f64),
    #[error("class count mismatch: {0} vs {1}")]
    ClassMismatch(usize, usize),
    #[error("total conflict between belief masses (delta = {0})")]
    TotalConflict(f64),
    #[error("cannot combine an empty sequence of masses")]
    Empty,
}

pub type Result<T> = std::result::Result<T, BeliefError>;

/// Categorical distribution over `C ≥ 2` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbability(Vec<f64>);

impl ClassProbability {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(BeliefError::TooFewClasses(probs.len()));
        }
        for (class, &value) in probs.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(BeliefError::InvalidEntry { class, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(BeliefError::NotNormalized(sum));
        }
        Ok(Self(probs))
    }

    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0 / classes as f64; classes])
    }

    pub fn one_hot(classes: usize, class: usize) -> Self {
        let mut probs = vec![0.0; classes];
        probs[class] = 1.0;
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }

    /// Most likely class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-class beliefs plus residual uncertainty, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMass {
    beliefs: Vec<f64>,
    uncertainty: f64,
}

impl BeliefMass {
    pub fn new(beliefs: Vec<f64>, uncertainty: f64) -> Result<Self> {
        if beliefs.len() < 2 {
            return Err(BeliefError::TooFewClasses(beliefs.len()));
        }
        if !uncertainty.is_finite() || !(0.0..=1.0).contains(&uncertainty) {
            return Err(BeliefError::UncertaintyOutOfRange(uncertainty));
        }
        for (class, &value) in beliefs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(BeliefError::InvalidEntry { class, value });
            }
        }
        let sum = beliefs.iter().sum::<f64>() + uncertainty;
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(BeliefError::NotNormalized(sum));
        }
        Ok(Self {
            beliefs,
            uncertainty,
        })
    }

    /// The fully uncertain mass (`u = 1`), identity of [`combine`].
    pub fn vacuous(classes: usize) -> Self {
        Self {
            beliefs: vec![0.0; classes],
            uncertainty: 1.0,
        }
    }

    pub fn beliefs(&self) -> &[f64] {
        &self.beliefs
    }

    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }

    pub fn class_count(&self) -> usize {
        self.beliefs.len()
    }

    pub fn to_probability(&self) -> ClassProbability {
        belief_to_prob(self)
    }
}

/// Converts a class distribution with uncertainty `u` into a belief mass.
///
/// Beliefs that would go negative (`p^c < u/C`) are clamped to zero and the
/// deficit is folded into the uncertainty; [`clamp_warning_count`] records it.
pub fn prob_to_belief(p: &ClassProbability, u: f64) -> Result<BeliefMass> {
    if !u.is_finite() || !(0.0..=1.0).contains(&u) {
        return Err(BeliefError::UncertaintyOutOfRange(u));
    }
    let share = u / p.class_count() as f64;
    let mut clamped = false;
    let beliefs: Vec<f64> = p
        .probs()
        .iter()
        .map(|&pc| {
            let b = pc - share;
            if b < 0.0 {
                clamped = true;
                0.0
            } else {
                b
            }
        })
        .collect();
    let uncertainty = if clamped {
        CLAMP_WARNINGS.fetch_add(1, Ordering::Relaxed);
        (1.0 - beliefs.iter().sum::<f64>()).clamp(0.0, 1.0)
    } else {
        u
    };
    Ok(BeliefMass {
        beliefs,
        uncertainty,
    })
}

/// `p^c = b^c + u/C`.
pub fn belief_to_prob(m: &BeliefMass) -> ClassProbability {
    let share = m.uncertainty / m.class_count() as f64;
    ClassProbability(m.beliefs.iter().map(|&b| b + share).collect())
}

/// Conflict `δ = Σ_{x≠y} b1^x b2^y` between two masses.
pub fn conflict(m1: &BeliefMass, m2: &BeliefMass) -> f64 {
    let total2: f64 = m2.beliefs.iter().sum();
    m1.beliefs
        .iter()
        .zip(&m2.beliefs)
        .map(|(&b1, &b2)| b1 * (total2 - b2))
        .sum::<f64>()
        .max(0.0)
}

/// Dempster-Shafer combination of two masses over the same classes.
pub fn combine(m1: &BeliefMass, m2: &BeliefMass) -> Result<BeliefMass> {
    if m1.class_count() != m2.class_count() {
        return Err(BeliefError::ClassMismatch(m1.class_count(), m2.class_count()));
    }
    let delta = conflict(m1, m2);
    if delta >= 1.0 - CONFLICT_EPS {
        return Err(BeliefError::TotalConflict(delta));
    }
    let scale = 1.0 / (1.0 - delta);
    let (u1, u2) = (m1.uncertainty, m2.uncertainty);
    let beliefs = m1
        .beliefs
        .iter()
        .zip(&m2.beliefs)
        .map(|(&b1, &b2)| scale * (b1 * b2 + b1 * u2 + b2 * u1))
        .collect();
    Ok(BeliefMass {
        beliefs,
        uncertainty: scale * u1 * u2,
    })
}

/// Result of folding a sequence of masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub mass: BeliefMass,
    /// Operands skipped because they were in total conflict with the running
    /// result.
    pub conflicts: usize,
}

/// Left fold of [`combine`] in input order. Operands in total conflict with
/// the running mass are skipped and counted.
pub fn combine_all<'a, I>(masses: I) -> Result<Fused>
where
    I: IntoIterator<Item = &'a BeliefMass>,
{
    let mut iter = masses.into_iter();
    let mut acc = iter.next().ok_or(BeliefError::Empty)?.clone();
    let mut conflicts = 0;
    for m in iter {
        match combine(&acc, m) {
            Ok(next) => acc = next,
            Err(BeliefError::TotalConflict(_)) => conflicts += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(Fused {
        mass: acc,
        conflicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mass(b: &[f64], u: f64) -> BeliefMass {
        BeliefMass::new(b.to_vec(), u).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn prob_to_belief_examples() {
        let p = ClassProbability::new(vec![0.7, 0.3]).unwrap();
        let m = prob_to_belief(&p, 0.2).unwrap();
        assert_close(m.beliefs(), &[0.6, 0.2], 1e-12);
        assert_eq!(m.uncertainty(), 0.2);

        let m = prob_to_belief(&ClassProbability::uniform(4), 1.0).unwrap();
        assert_close(m.beliefs(), &[0.0; 4], 1e-15);
        assert_eq!(m.uncertainty(), 1.0);

        let m = prob_to_belief(&ClassProbability::one_hot(2, 0), 0.0).unwrap();
        assert_eq!(m.beliefs(), &[1.0, 0.0]);
        assert_eq!(m.uncertainty(), 0.0);
    }

    #[test]
    fn prob_to_belief_rejects_bad_uncertainty() {
        let p = ClassProbability::uniform(2);
        assert!(prob_to_belief(&p, 1.5).is_err());
        assert!(prob_to_belief(&p, -0.1).is_err());
        assert!(prob_to_belief(&p, f64::NAN).is_err());
    }

    #[test]
    fn prob_to_belief_clamps_and_counts() {
        let before = clamp_warning_count();
        let p = ClassProbability::new(vec![0.95, 0.05]).unwrap();
        let m = prob_to_belief(&p, 0.4).unwrap();
        assert_eq!(m.beliefs()[1], 0.0);
        assert!((m.beliefs()[0] - 0.75).abs() < 1e-12);
        assert!((m.uncertainty() - 0.25).abs() < 1e-12);
        assert!(clamp_warning_count() > before);
    }

    #[test]
    fn belief_to_prob_examples() {
        let p = belief_to_prob(&mass(&[0.6, 0.2], 0.2));
        assert_close(p.probs(), &[0.7, 0.3], 1e-12);
        let p = belief_to_prob(&BeliefMass::vacuous(3));
        assert_close(p.probs(), &[1.0 / 3.0; 3], 1e-15);
        let p = belief_to_prob(&mass(&[1.0, 0.0], 0.0));
        assert_eq!(p.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn combine_hand_example() {
        let m = mass(&[0.6, 0.2], 0.2);
        assert!((conflict(&m, &m) - 0.24).abs() < 1e-12);
        let out = combine(&m, &m).unwrap();
        // (0.36 + 0.12 + 0.12) / 0.76, (0.04 + 0.04 + 0.04) / 0.76, 0.04 / 0.76
        assert_close(out.beliefs(), &[0.6 / 0.76, 0.12 / 0.76], 1e-12);
        assert!((out.uncertainty() - 0.04 / 0.76).abs() < 1e-12);
        assert_close(out.beliefs(), &[0.7895, 0.1579], 1e-4);
        assert!((out.uncertainty() - 0.0526).abs() < 1e-4);
    }

    #[test]
    fn vacuous_is_exact_identity() {
        let m = mass(&[0.6, 0.2], 0.2);
        let v = BeliefMass::vacuous(2);
        assert_eq!(combine(&m, &v).unwrap(), m);
        assert_eq!(combine(&v, &m).unwrap(), m);
    }

    #[test]
    fn total_conflict_is_reported() {
        let a = mass(&[1.0, 0.0], 0.0);
        let b = mass(&[0.0, 1.0], 0.0);
        assert!(matches!(combine(&a, &b), Err(BeliefError::TotalConflict(_))));
        let fused = combine_all([&a, &b]).unwrap();
        assert_eq!(fused.mass, a);
        assert_eq!(fused.conflicts, 1);
    }

    #[test]
    fn class_mismatch_is_an_error() {
        let a = BeliefMass::vacuous(2);
        let b = BeliefMass::vacuous(3);
        assert!(matches!(combine(&a, &b), Err(BeliefError::ClassMismatch(2, 3))));
    }

    #[test]
    fn combine_all_examples() {
        let m = mass(&[0.5, 0.1, 0.1], 0.3);
        assert_eq!(combine_all([&m]).unwrap().mass, m);
        let v = BeliefMass::vacuous(3);
        assert_eq!(combine_all([&m, &v, &v]).unwrap().mass, m);
        assert!(matches!(
            combine_all(std::iter::empty::<&BeliefMass>()),
            Err(BeliefError::Empty)
        ));
    }

    /// Three-mass chain evaluated term by term, independent of `combine`.
    #[test]
    fn combine_all_matches_hand_chain() {
        let ms = [
            mass(&[0.5, 0.2, 0.1], 0.2),
            mass(&[0.1, 0.6, 0.0], 0.3),
            mass(&[0.3, 0.3, 0.3], 0.1),
        ];
        let mut b = ms[0].beliefs().to_vec();
        let mut u = ms[0].uncertainty();
        for m in &ms[1..] {
            let b2 = m.beliefs();
            let u2 = m.uncertainty();
            let mut agree = 0.0;
            let mut total = 0.0;
            for x in 0..3 {
                for y in 0..3 {
                    total += b[x] * b2[y];
                    if x == y {
                        agree += b[x] * b2[y];
                    }
                }
            }
            let delta = total - agree;
            let nb: Vec<f64> = (0..3)
                .map(|c| (b[c] * b2[c] + b[c] * u2 + b2[c] * u) / (1.0 - delta))
                .collect();
            u = u * u2 / (1.0 - delta);
            b = nb;
        }
        let fused = combine_all(&ms).unwrap();
        assert_close(fused.mass.beliefs(), &b, 1e-12);
        assert!((fused.mass.uncertainty() - u).abs() < 1e-12);
    }

    fn arb_mass(classes: usize) -> impl Strategy<Value = BeliefMass> {
        prop::collection::vec(0.0f64..1.0, classes + 1).prop_map(move |raw| {
            let total: f64 = raw.iter().sum::<f64>().max(1e-9);
            let mut parts: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let u = parts.pop().unwrap();
            BeliefMass::new(parts, u).unwrap_or_else(|_| BeliefMass::vacuous(classes))
        })
    }

    proptest! {
        #[test]
        fn combine_is_closed_and_commutative(a in arb_mass(4), b in arb_mass(4)) {
            let ab = combine(&a, &b);
            let ba = combine(&b, &a);
            if let (Ok(ab), Ok(ba)) = (ab, ba) {
                let sum = ab.beliefs().iter().sum::<f64>() + ab.uncertainty();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(ab.beliefs().iter().all(|&x| x >= 0.0));
                prop_assert!(ab.uncertainty() <= a.uncertainty().min(b.uncertainty()) + 1e-12);
                for (x, y) in ab.beliefs().iter().zip(ba.beliefs()) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
                prop_assert!((ab.uncertainty() - ba.uncertainty()).abs() < 1e-12);
            }
        }

        #[test]
        fn round_trip_without_clamping(raw in prop::collection::vec(0.0f64..10.0, 3)) {
            // Evidence-style construction guarantees p^c >= u/C.
            let alpha: Vec<f64> = raw.iter().map(|e| e + 1.0).collect();
            let s: f64 = alpha.iter().sum();
            let p = ClassProbability::new(alpha.iter().map(|a| a / s).collect()).unwrap();
            let u = 3.0 / s;
            let back = belief_to_prob(&prob_to_belief(&p, u).unwrap());
            for (x, y) in back.probs().iter().zip(p.probs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
