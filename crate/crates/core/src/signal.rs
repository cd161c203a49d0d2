//! Spike trains, sampled signals, observation masks and frequency matching.
//!
//! Samples are indexed by `ell` in `-n..=n`; internally slot `ell + n` of a
//! length `2n+1` vector. Frequencies live on the unit circle `[0, 1)` and every
//! distance between them is the wrap-around distance.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("spike train needs at least one spike")]
    Empty,
    #[error("got {taus} frequencies but {amps} amplitudes")]
    LengthMismatch { taus: usize, amps: usize },
    #[error("frequency {0} is outside [0, 1)")]
    FrequencyOutOfRange(f64),
    #[error("frequencies {0} and {1} coincide")]
    DuplicateFrequency(usize, usize),
    #[error("amplitude {0} is zero or not finite")]
    BadAmplitude(usize),
    #[error("separation needs at least two spikes, got {0}")]
    UndefinedSeparation(usize),
    #[error("half-bandwidth must be positive")]
    ZeroBandwidth,
    #[error("{spikes} spikes cannot be resolved from {samples} samples")]
    TooManySpikes { spikes: usize, samples: usize },
    #[error("expected {expected} samples, got {got}")]
    Length { expected: usize, got: usize },
    #[error("dimension mismatch: n = {left} vs n = {right}")]
    Dimension { left: usize, right: usize },
    #[error("observation rate {0} is outside (0, 1]")]
    Rate(f64),
    #[error("observation count {count} is impossible for 2n+1 = {len}")]
    Count { count: usize, len: usize },
    #[error("mask is not symmetric: ell = {0} and ell = -{0} disagree")]
    Asymmetric(i64),
    #[error("cannot match {estimates} estimates to {truths} true frequencies")]
    Matching { estimates: usize, truths: usize },
}

/// Maps `x` onto `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    // x.floor() can round so that w == 1.0 for tiny negative x.
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Circular distance between two points of `[0, 1)`.
pub fn wrap_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Signed circular difference `a - b` mapped into `[-1/2, 1/2)`.
pub fn wrap_signed(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    if d >= 0.5 {
        d - 1.0
    } else {
        d
    }
}

/// Ground-truth frequencies with their complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    taus: Vec<f64>,
    amps: Vec<Complex64>,
}

impl SpikeTrain {
    pub fn new(taus: Vec<f64>, amps: Vec<Complex64>) -> Result<Self, SignalError> {
        if taus.len() != amps.len() {
            return Err(SignalError::LengthMismatch {
                taus: taus.len(),
                amps: amps.len(),
            });
        }
        if taus.is_empty() {
            return Err(SignalError::Empty);
        }
        for &t in &taus {
            if !(0.0..1.0).contains(&t) {
                return Err(SignalError::FrequencyOutOfRange(t));
            }
        }
        for i in 0..taus.len() {
            for j in i + 1..taus.len() {
                if taus[i] == taus[j] {
                    return Err(SignalError::DuplicateFrequency(i, j));
                }
            }
        }
        for (i, a) in amps.iter().enumerate() {
            if !(a.norm() > 0.0 && a.norm().is_finite()) {
                return Err(SignalError::BadAmplitude(i));
            }
        }
        Ok(Self { taus, amps })
    }

    /// Real amplitudes, a convenience for tests and presets.
    pub fn real(taus: Vec<f64>, amps: &[f64]) -> Result<Self, SignalError> {
        Self::new(taus, amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// Minimum wrap-around distance between distinct frequencies.
    pub fn min_separation(&self) -> Result<f64, SignalError> {
        if self.len() < 2 {
            return Err(SignalError::UndefinedSeparation(self.len()));
        }
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min(wrap_distance(self.taus[i], self.taus[j]));
            }
        }
        Ok(best)
    }

    /// `max |x_i| / min |x_i|`.
    pub fn dynamic_range(&self) -> f64 {
        let mags = self.amps.iter().map(|a| a.norm());
        let (lo, hi) = mags.fold((f64::INFINITY, 0.0_f64), |(lo, hi), m| (lo.min(m), hi.max(m)));
        hi / lo
    }

    pub fn min_amplitude(&self) -> f64 {
        self.amps.iter().map(|a| a.norm()).fold(f64::INFINITY, f64::min)
    }

    /// Samples `y_ell = sum_k x_k exp(j 2 pi tau_k ell)` for `ell = -n..=n`.
    pub fn synthesize(&self, n: usize) -> Result<SampleVector, SignalError> {
        if n == 0 {
            return Err(SignalError::ZeroBandwidth);
        }
        if self.len() > 2 * n + 1 {
            return Err(SignalError::TooManySpikes {
                spikes: self.len(),
                samples: 2 * n + 1,
            });
        }
        let mut values = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
        for (&tau, &amp) in self.taus.iter().zip(&self.amps) {
            for (slot, v) in values.iter_mut().enumerate() {
                let ell = slot as f64 - n as f64;
                *v += amp * Complex64::cis(2.0 * PI * tau * ell);
            }
        }
        Ok(SampleVector {
            n,
            values,
            preconditioned: false,
        })
    }
}

/// `2n+1` complex samples indexed `ell = -n..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVector {
    n: usize,
    values: Vec<Complex64>,
    preconditioned: bool,
}

impl SampleVector {
    pub fn new(n: usize, values: Vec<Complex64>) -> Result<Self, SignalError> {
        if n == 0 {
            return Err(SignalError::ZeroBandwidth);
        }
        if values.len() != 2 * n + 1 {
            return Err(SignalError::Length {
                expected: 2 * n + 1,
                got: values.len(),
            });
        }
        Ok(Self {
            n,
            values,
            preconditioned: false,
        })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![Complex64::new(0.0, 0.0); 2 * n + 1],
            preconditioned: false,
        }
    }

    pub(crate) fn with_flag(n: usize, values: Vec<Complex64>, preconditioned: bool) -> Self {
        debug_assert_eq!(values.len(), 2 * n + 1);
        Self {
            n,
            values,
            preconditioned,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Whether the `sqrt(sigma)` weighting has already been applied.
    pub fn is_preconditioned(&self) -> bool {
        self.preconditioned
    }

    pub fn get(&self, ell: i64) -> Complex64 {
        self.values[(ell + self.n as i64) as usize]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Symmetric observation pattern: `ell` is observed iff `-ell` is.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    n: usize,
    observed: Vec<bool>,
    p: f64,
}

impl ObservationMask {
    pub fn full(n: usize) -> Self {
        Self {
            n,
            observed: vec![true; 2 * n + 1],
            p: 1.0,
        }
    }

    /// Validates symmetry of an externally supplied pattern.
    pub fn from_observed(n: usize, observed: Vec<bool>, p: f64) -> Result<Self, SignalError> {
        if observed.len() != 2 * n + 1 {
            return Err(SignalError::Length {
                expected: 2 * n + 1,
                got: observed.len(),
            });
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(SignalError::Rate(p));
        }
        for ell in 1..=n {
            if observed[n + ell] != observed[n - ell] {
                return Err(SignalError::Asymmetric(ell as i64));
            }
        }
        Ok(Self { n, observed, p })
    }

    /// One Bernoulli(p) draw per `ell = 0..=n`, mirrored onto `-ell`.
    pub fn bernoulli_symmetric(n: usize, p: f64, seed: u64) -> Result<Self, SignalError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(SignalError::Rate(p));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut observed = vec![false; 2 * n + 1];
        for ell in 0..=n {
            let keep = rng.gen::<f64>() < p;
            observed[n + ell] = keep;
            observed[n - ell] = keep;
        }
        Ok(Self { n, observed, p })
    }

    /// Uniformly random symmetric subset with exactly `count` observed indices.
    ///
    /// Odd counts include `ell = 0`, even counts exclude it.
    pub fn exact_count(n: usize, count: usize, seed: u64) -> Result<Self, SignalError> {
        let len = 2 * n + 1;
        if count == 0 || count > len {
            return Err(SignalError::Count { count, len });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut observed = vec![false; len];
        if count % 2 == 1 {
            observed[n] = true;
        }
        for k in index::sample(&mut rng, n, count / 2).into_iter() {
            let ell = k + 1;
            observed[n + ell] = true;
            observed[n - ell] = true;
        }
        Ok(Self {
            n,
            observed,
            p: count as f64 / len as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, ell: i64) -> bool {
        self.observed[(ell + self.n as i64) as usize]
    }

    pub fn count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn is_full(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }
}

/// Zeroes the unobserved samples.
pub fn apply_mask(y: &SampleVector, mask: &ObservationMask) -> Result<SampleVector, SignalError> {
    if y.n != mask.n {
        return Err(SignalError::Dimension {
            left: y.n,
            right: mask.n,
        });
    }
    let values = y
        .values
        .iter()
        .zip(&mask.observed)
        .map(|(&v, &o)| if o { v } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(SampleVector {
        n: y.n,
        values,
        preconditioned: y.preconditioned,
    })
}

/// Injective assignment of estimates to true spikes, with per-estimate errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `assignment[i]` is the truth index matched to estimate `i`.
    pub assignment: Vec<usize>,
    /// `|omega_i - tau_T(i)|` on the circle.
    pub errors: Vec<f64>,
    /// `|x_T(i)| * errors[i]`.
    pub weighted_errors: Vec<f64>,
}

impl Matching {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_weighted_error(&self) -> f64 {
        self.weighted_errors.iter().copied().fold(0.0, f64::max)
    }

    /// Error of the estimate matched to truth `k`, if any.
    pub fn error_for_truth(&self, k: usize) -> Option<f64> {
        self.assignment.iter().position(|&a| a == k).map(|i| self.errors[i])
    }
}

/// Nearest-truth matching; contested truths go to the closer estimate and the
/// other estimate falls back to its nearest unclaimed truth.
pub fn match_frequencies(estimates: &[f64], truth: &SpikeTrain) -> Result<Matching, SignalError> {
    if estimates.is_empty() || estimates.len() > truth.len() {
        return Err(SignalError::Matching {
            estimates: estimates.len(),
            truths: truth.len(),
        });
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(estimates.len() * truth.len());
    for (i, &w) in estimates.iter().enumerate() {
        for (k, &t) in truth.taus.iter().enumerate() {
            pairs.push((wrap_distance(w, t), i, k));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut assignment = vec![usize::MAX; estimates.len()];
    let mut claimed = vec![false; truth.len()];
    let mut left = estimates.len();
    for (_, i, k) in pairs {
        if left == 0 {
            break;
        }
        if assignment[i] == usize::MAX && !claimed[k] {
            assignment[i] = k;
            claimed[k] = true;
            left -= 1;
        }
    }
    let errors: Vec<f64> = assignment
        .iter()
        .zip(estimates)
        .map(|(&k, &w)| wrap_distance(w, truth.taus[k]))
        .collect();
    let weighted_errors = assignment
        .iter()
        .zip(&errors)
        .map(|(&k, &e)| truth.amps[k].norm() * e)
        .collect();
    Ok(Matching {
        assignment,
        errors,
        weighted_errors,
    })
}
