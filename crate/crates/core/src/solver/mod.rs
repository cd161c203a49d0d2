//! Gridded continuous OMP and Sliding-OMP.
//!
//! All solver routines work on *prepared* samples: the observed entries of
//! `y` weighted by `sqrt(sigma)`. The matching dictionary atom at frequency
//! `omega` is `a(omega)_ell = sqrt(sigma_ell) B_ell exp(j 2 pi ell omega)`,
//! with `B_ell` the observation indicator, so every inner product is taken
//! over observed indices only.

mod gram;
mod grid;
mod pursuit;
mod sliding;

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::kernels::{KernelError, Preconditioner};
use crate::signal::{ObservationMask, SampleVector, SignalError};

pub use gram::{residual, solve_gram, GramGuard, GramSystem};
pub use grid::{argmax_correlation, grid_correlations, GridCorrelator};
pub use pursuit::{omp, sliding_omp, IterationTrace, RecoveryResult, RoundRecord, SolverFailure, StopReason};
pub use sliding::{sliding, sliding_gradient, SlideOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("frequencies {i} and {k} are {gap:e} apart (minimum {min_gap:e})")]
    Degenerate { i: usize, k: usize, gap: f64, min_gap: f64 },
    #[error("gram matrix condition estimate {cond:e} exceeds {limit:e}")]
    IllConditioned { cond: f64, limit: f64 },
    #[error("gram matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("samples must be masked and preconditioned before solving")]
    NotPrepared,
    #[error("dimension mismatch: samples have n = {samples}, dictionary n = {dict}")]
    Dimension { samples: usize, dict: usize },
    #[error("grid of {n_grid} points cannot resolve 2n+1 = {need} samples")]
    GridTooSmall { n_grid: usize, need: usize },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("zero least-squares weight for frequency {0}")]
    ZeroWeight(usize),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Solver knobs. `pc` fixes the half-bandwidth `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stop once the largest grid correlation is at most `gamma`.
    pub gamma: f64,
    pub n_grid: usize,
    /// Dimensionless sliding step; see [`sliding`].
    pub eta0: f64,
    pub t_slide: usize,
    pub max_spikes: usize,
    pub pc: Preconditioner,
    pub cond_limit: f64,
}

impl SolverConfig {
    pub const DEFAULT_ETA0: f64 = 0.1;
    pub const DEFAULT_T_SLIDE: usize = 200;
    pub const DEFAULT_COND_LIMIT: f64 = 1e12;

    pub fn new(pc: Preconditioner, gamma: f64, n_grid: usize) -> Self {
        let max_spikes = (2 * pc.n() + 1).min(n_grid);
        Self {
            gamma,
            n_grid,
            eta0: Self::DEFAULT_ETA0,
            t_slide: Self::DEFAULT_T_SLIDE,
            max_spikes,
            pc,
            cond_limit: Self::DEFAULT_COND_LIMIT,
        }
    }

    pub fn n(&self) -> usize {
        self.pc.n()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let need = 2 * self.n() + 1;
        if self.n_grid < need {
            return Err(SolverError::GridTooSmall {
                n_grid: self.n_grid,
                need,
            });
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(SolverError::Config(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(SolverError::Config(format!("eta0 must be positive, got {}", self.eta0)));
        }
        if self.max_spikes == 0 || self.max_spikes > self.n_grid {
            return Err(SolverError::Config(format!(
                "max_spikes must be in 1..={}, got {}",
                self.n_grid, self.max_spikes
            )));
        }
        if !(self.cond_limit > 1.0) {
            return Err(SolverError::Config(format!("cond_limit must exceed 1, got {}", self.cond_limit)));
        }
        Ok(())
    }

    pub fn guard(&self) -> GramGuard {
        GramGuard::new(self.n(), self.n_grid, self.cond_limit)
    }
}

/// Preconditioned, masked exponential dictionary restricted to the indices
/// that carry weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    n: usize,
    slots: Vec<usize>,
    ells: Vec<f64>,
    weights: Vec<f64>,
    sqrt_sigma: Vec<f64>,
    observed: Vec<bool>,
    mass: f64,
    curvature: f64,
}

impl Dictionary {
    pub fn new(pc: &Preconditioner, mask: &ObservationMask) -> Result<Self, SolverError> {
        if pc.n() != mask.n() {
            return Err(SolverError::Dimension {
                samples: mask.n(),
                dict: pc.n(),
            });
        }
        let n = pc.n();
        let mut slots = Vec::new();
        let mut ells = Vec::new();
        let mut weights = Vec::new();
        for (slot, (&w, &o)) in pc.sqrt_sigma().iter().zip(mask.observed()).enumerate() {
            if o && w > 0.0 {
                slots.push(slot);
                ells.push(slot as f64 - n as f64);
                weights.push(w);
            }
        }
        let mass = weights.iter().map(|w| w * w).sum();
        let curvature = weights
            .iter()
            .zip(&ells)
            .map(|(w, l)| w * w * (2.0 * PI * l).powi(2))
            .sum();
        Ok(Self {
            n,
            slots,
            ells,
            weights,
            sqrt_sigma: pc.sqrt_sigma().to_vec(),
            observed: mask.observed().to_vec(),
            mass,
            curvature,
        })
    }

    pub fn full(pc: &Preconditioner) -> Self {
        Self::new(pc, &ObservationMask::full(pc.n())).expect("matching sizes")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `||a(omega)||^2 = sum of observed sigma`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `sum of observed sigma_ell (2 pi ell)^2`, the peak curvature of the
    /// masked kernel.
    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn active_len(&self) -> usize {
        self.slots.len()
    }

    /// Masks and preconditions raw samples.
    pub fn prepare(&self, y: &SampleVector) -> Result<SampleVector, SolverError> {
        if y.n() != self.n {
            return Err(SolverError::Dimension {
                samples: y.n(),
                dict: self.n,
            });
        }
        if y.is_preconditioned() {
            return Err(KernelError::AlreadyPreconditioned.into());
        }
        let values = y
            .values()
            .iter()
            .zip(&self.sqrt_sigma)
            .zip(&self.observed)
            .map(|((v, s), &o)| if o { v * s } else { Complex64::new(0.0, 0.0) })
            .collect();
        Ok(SampleVector::with_flag(self.n, values, true))
    }

    /// Atom entries on the active indices.
    pub(crate) fn atom(&self, omega: f64) -> Vec<Complex64> {
        self.ells
            .iter()
            .zip(&self.weights)
            .map(|(&l, &w)| w * Complex64::cis(2.0 * PI * l * omega))
            .collect()
    }

    /// Full-length atom, zero off the active set.
    pub fn atom_full(&self, omega: f64) -> SampleVector {
        let mut values = vec![Complex64::new(0.0, 0.0); 2 * self.n + 1];
        for (&slot, a) in self.slots.iter().zip(self.atom(omega)) {
            values[slot] = a;
        }
        SampleVector::with_flag(self.n, values, true)
    }

    pub(crate) fn gather(&self, y: &SampleVector) -> Vec<Complex64> {
        self.slots.iter().map(|&s| y.values()[s]).collect()
    }

    /// Inverse of [`Self::gather`]; prepared samples vanish off the active set.
    pub(crate) fn scatter(&self, active: &[Complex64]) -> SampleVector {
        let mut values = vec![Complex64::new(0.0, 0.0); 2 * self.n + 1];
        for (&slot, &v) in self.slots.iter().zip(active) {
            values[slot] = v;
        }
        SampleVector::with_flag(self.n, values, true)
    }

    pub(crate) fn ells(&self) -> &[f64] {
        &self.ells
    }

    pub(crate) fn check(&self, y: &SampleVector) -> Result<(), SolverError> {
        if y.n() != self.n {
            return Err(SolverError::Dimension {
                samples: y.n(),
                dict: self.n,
            });
        }
        if !y.is_preconditioned() {
            return Err(SolverError::NotPrepared);
        }
        Ok(())
    }
}

/// `gamma = fraction * floor * ||a||^2`: a threshold for amplitude floor
/// `floor` that accounts for the energy lost to masking.
pub fn gamma_from_amplitude_floor(floor: f64, fraction: f64, dict: &Dictionary) -> f64 {
    fraction * floor * dict.mass()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelOrder;

    #[test]
    fn config_validation() {
        let pc = Preconditioner::build(KernelOrder::SquaredFejer, 16).unwrap();
        let cfg = SolverConfig::new(pc.clone(), 0.1, 33);
        assert!(cfg.validate().is_ok());
        let bad = SolverConfig::new(pc.clone(), 0.1, 32);
        assert_eq!(bad.validate(), Err(SolverError::GridTooSmall { n_grid: 32, need: 33 }));
        let mut bad = SolverConfig::new(pc.clone(), -1.0, 64);
        assert!(bad.validate().is_err());
        bad.gamma = 0.0;
        bad.max_spikes = 65;
        assert!(bad.validate().is_err());
        bad.max_spikes = 4;
        bad.eta0 = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn full_mask_curvature_matches_kernel() {
        for order in KernelOrder::ALL {
            let n = 64;
            let pc = Preconditioner::build(order, n).unwrap();
            let dict = Dictionary::full(&pc);
            assert!((dict.mass() - 1.0).abs() < 1e-12);
            let k2 = pc.eval(0.0).unwrap().d2;
            assert!((dict.curvature() + k2).abs() / k2.abs() < 1e-10);
        }
    }

    #[test]
    fn prepare_masks_and_weights() {
        let pc = Preconditioner::build(KernelOrder::Fejer, 8).unwrap();
        let mask = ObservationMask::bernoulli_symmetric(8, 0.5, 3).unwrap();
        let dict = Dictionary::new(&pc, &mask).unwrap();
        let y = crate::signal::SpikeTrain::real(vec![0.2], &[1.0]).unwrap().synthesize(8).unwrap();
        let z = dict.prepare(&y).unwrap();
        for ell in -8..=8_i64 {
            let want = if mask.is_observed(ell) { y.get(ell) * pc.sigma_at(ell).sqrt() } else { Complex64::new(0.0, 0.0) };
            assert!((z.get(ell) - want).norm() < 1e-15);
        }
        assert!(dict.prepare(&z).is_err());
    }
}
