use std::fmt;

use num_complex::Complex64;

use super::gram::{residual, solve_gram};
use super::grid::{argmax_correlation, GridCorrelator};
use super::sliding::sliding;
use super::{Dictionary, SolverConfig, SolverError};
use crate::signal::{wrap_distance, ObservationMask, SampleVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Largest grid correlation fell to `gamma`.
    Threshold,
    /// `max_spikes` frequencies found.
    Cap,
    /// The grid argmax coincided with a frequency already in the set.
    Stall,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Threshold => "threshold",
            StopReason::Cap => "cap",
            StopReason::Stall => "stall",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub grid_index: usize,
    pub grid_frequency: f64,
    pub correlation: f64,
    /// Frequencies after appending the grid point, before sliding.
    pub pre_slide: Vec<f64>,
    /// Frequencies kept for this round.
    pub omegas: Vec<f64>,
    pub residual_norm: f64,
    pub slide_steps: usize,
    /// Sliding stalled or raised the loss, so `omegas == pre_slide`.
    pub slide_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationTrace {
    pub rounds: Vec<RoundRecord>,
    /// Largest grid correlation at the final residual.
    pub final_correlation: f64,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub omegas: Vec<f64>,
    pub coeffs: Vec<Complex64>,
    pub trace: IterationTrace,
    pub stopped_reason: StopReason,
    /// Final residual in the prepared (masked, weighted) domain.
    pub residual: SampleVector,
}

/// A solver error together with the rounds completed before it.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverFailure {
    pub error: SolverError,
    pub trace: IterationTrace,
}

impl fmt::Display for SolverFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} rounds)", self.error, self.trace.len())
    }
}

impl std::error::Error for SolverFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<SolverError> for SolverFailure {
    fn from(error: SolverError) -> Self {
        Self {
            error,
            trace: IterationTrace::default(),
        }
    }
}

/// Gridded continuous OMP on raw samples `y` observed on `mask`.
pub fn omp(y: &SampleVector, mask: &ObservationMask, cfg: &SolverConfig) -> Result<RecoveryResult, SolverFailure> {
    pursue(y, mask, cfg, false)
}

/// OMP with every round's frequency set refined by [`sliding`](super::sliding).
pub fn sliding_omp(
    y: &SampleVector,
    mask: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<RecoveryResult, SolverFailure> {
    pursue(y, mask, cfg, true)
}

fn pursue(y: &SampleVector, mask: &ObservationMask, cfg: &SolverConfig, slide: bool) -> Result<RecoveryResult, SolverFailure> {
    cfg.validate()?;
    let dict = Dictionary::new(&cfg.pc, mask)?;
    let y = dict.prepare(y)?;
    let guard = cfg.guard();
    let mut grid = GridCorrelator::new(cfg.n(), cfg.n_grid)?;
    let sqrt_sigma = cfg.pc.sqrt_sigma();

    let mut trace = IterationTrace::default();
    let mut omegas: Vec<f64> = Vec::new();
    let mut coeffs: Vec<Complex64> = Vec::new();
    let mut r = y.clone();
    let fail = |error: SolverError, trace: &IterationTrace| SolverFailure {
        error,
        trace: trace.clone(),
    };

    let stopped_reason = loop {
        let corr = grid.correlations(&r, sqrt_sigma);
        let (k, c) = argmax_correlation(&corr);
        trace.final_correlation = c;
        if c <= cfg.gamma {
            break StopReason::Threshold;
        }
        if omegas.len() >= cfg.max_spikes {
            break StopReason::Cap;
        }
        let w_hat = k as f64 / cfg.n_grid as f64;
        if omegas.iter().any(|&w| wrap_distance(w, w_hat) < guard.min_gap) {
            break StopReason::Stall;
        }

        let mut pre = omegas.clone();
        pre.push(w_hat);
        let gs = solve_gram(&pre, &y, &dict, &guard).map_err(|e| fail(e, &trace))?;
        let mut kept = (pre.clone(), gs.coeffs().to_vec(), residual(&y, &gs));
        let mut slide_steps = 0;
        let mut slide_fallback = false;
        if slide {
            let out = sliding(&pre, &y, &dict, cfg.eta0, cfg.t_slide, &guard).map_err(|e| fail(e, &trace))?;
            slide_steps = out.steps;
            slide_fallback = out.stalled;
            if !out.stalled && out.steps > 0 {
                match solve_gram(&out.omegas, &y, &dict, &guard) {
                    Ok(gs) => {
                        let rs = residual(&y, &gs);
                        if rs.norm() <= kept.2.norm() {
                            kept = (out.omegas, gs.coeffs().to_vec(), rs);
                        } else {
                            slide_fallback = true;
                        }
                    }
                    Err(_) => slide_fallback = true,
                }
            }
        }
        (omegas, coeffs, r) = kept;
        trace.rounds.push(RoundRecord {
            grid_index: k,
            grid_frequency: w_hat,
            correlation: c,
            pre_slide: pre,
            omegas: omegas.clone(),
            residual_norm: r.norm(),
            slide_steps,
            slide_fallback,
        });
    };

    Ok(RecoveryResult {
        omegas,
        coeffs,
        trace,
        stopped_reason,
        residual: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelOrder, Preconditioner};
    use crate::signal::{match_frequencies, SpikeTrain};

    #[test]
    fn single_on_grid_spike() {
        let n = 40;
        let n_grid = 200;
        let pc = Preconditioner::build(KernelOrder::SquaredFejer, n).unwrap();
        let truth = SpikeTrain::real(vec![37.0 / n_grid as f64], &[2.5]).unwrap();
        let y = truth.synthesize(n).unwrap();
        let cfg = SolverConfig::new(pc, 0.5 * 2.5, n_grid);
        let mask = ObservationMask::full(n);
        let a = omp(&y, &mask, &cfg).unwrap();
        assert_eq!(a.trace.len(), 1);
        assert_eq!(a.omegas, truth.taus());
        assert_eq!(a.stopped_reason, StopReason::Threshold);
        assert!(a.residual.norm() < 1e-9);
        let b = sliding_omp(&y, &mask, &cfg).unwrap();
        assert_eq!(a.omegas, b.omegas);
        assert_eq!(a.coeffs, b.coeffs);
    }

    #[test]
    fn cap_and_trace() {
        let n = 32;
        let pc = Preconditioner::build(KernelOrder::Fejer, n).unwrap();
        let y = SpikeTrain::real(vec![0.1, 0.5, 0.77], &[1.0, 1.0, 1.0]).unwrap().synthesize(n).unwrap();
        let mut cfg = SolverConfig::new(pc, 0.0, 128);
        cfg.max_spikes = 2;
        let out = omp(&y, &ObservationMask::full(n), &cfg).unwrap();
        assert_eq!(out.stopped_reason, StopReason::Cap);
        assert_eq!(out.trace.len(), 2);
        let norms: Vec<f64> = out.trace.rounds.iter().map(|r| r.residual_norm).collect();
        assert!(norms[1] <= norms[0] + 1e-12);
    }

    #[test]
    fn sliding_omp_recovers_off_grid() {
        let n = 64;
        let pc = Preconditioner::build(KernelOrder::SquaredFejer, n).unwrap();
        let truth = SpikeTrain::new(
            vec![0.1234, 0.1234 + 12.0 / n as f64, 0.71],
            vec![Complex64::new(1.0, 0.2), Complex64::new(-1.5, 0.0), Complex64::new(0.0, 1.1)],
        )
        .unwrap();
        let y = truth.synthesize(n).unwrap();
        let cfg = SolverConfig::new(pc, 0.5, 4 * n);
        let out = sliding_omp(&y, &ObservationMask::full(n), &cfg).unwrap();
        assert_eq!(out.trace.len(), 3);
        let m = match_frequencies(&out.omegas, &truth).unwrap();
        assert!(m.max_error() < 1e-8, "{}", m.max_error());
    }

    #[test]
    fn raw_input_required() {
        let pc = Preconditioner::build(KernelOrder::Fejer, 8).unwrap();
        let y = crate::kernels::precondition(&SampleVector::zeros(8), &pc).unwrap();
        let cfg = SolverConfig::new(pc, 0.1, 17);
        assert!(omp(&y, &ObservationMask::full(8), &cfg).is_err());
    }

    #[test]
    fn deterministic() {
        let n = 50;
        let pc = Preconditioner::build(KernelOrder::SquaredFejer, n).unwrap();
        let mask = ObservationMask::bernoulli_symmetric(n, 0.6, 4).unwrap();
        let y = SpikeTrain::real(vec![0.2, 0.26, 0.6], &[1.0, 2.0, 1.5]).unwrap().synthesize(n).unwrap();
        let cfg = SolverConfig::new(pc, 0.1, 256);
        assert_eq!(sliding_omp(&y, &mask, &cfg), sliding_omp(&y, &mask, &cfg));
    }
}
