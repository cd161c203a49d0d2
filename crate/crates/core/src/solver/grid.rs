use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::SolverError;
use crate::kernels::Preconditioner;
use crate::signal::SampleVector;

/// Correlation of a residual with every grid atom `k / n_grid`, through one
/// zero-padded FFT. Owns its plan and buffers; one per solver run.
pub struct GridCorrelator {
    n: usize,
    n_grid: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl GridCorrelator {
    pub fn new(n: usize, n_grid: usize) -> Result<Self, SolverError> {
        if n_grid < 2 * n + 1 {
            return Err(SolverError::GridTooSmall {
                n_grid,
                need: 2 * n + 1,
            });
        }
        let fft = FftPlanner::new().plan_fft_forward(n_grid);
        let scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        Ok(Self {
            n,
            n_grid,
            fft,
            buf: vec![Complex64::new(0.0, 0.0); n_grid],
            scratch,
        })
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    /// `|sum_ell sqrt(sigma_ell) r_ell exp(-j 2 pi ell k / n_grid)|` for every `k`.
    pub fn correlations(&mut self, residual: &SampleVector, sqrt_sigma: &[f64]) -> Vec<f64> {
        debug_assert_eq!(residual.n(), self.n);
        self.buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        let n = self.n as i64;
        let big = self.n_grid as i64;
        for (slot, (r, s)) in residual.values().iter().zip(sqrt_sigma).enumerate() {
            let ell = slot as i64 - n;
            self.buf[ell.rem_euclid(big) as usize] = r * s;
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        self.buf.iter().map(|c| c.norm()).collect()
    }
}

/// One-shot form of [`GridCorrelator::correlations`].
pub fn grid_correlations(residual: &SampleVector, pc: &Preconditioner, n_grid: usize) -> Result<Vec<f64>, SolverError> {
    if residual.n() != pc.n() {
        return Err(SolverError::Dimension {
            samples: residual.n(),
            dict: pc.n(),
        });
    }
    let mut g = GridCorrelator::new(pc.n(), n_grid)?;
    Ok(g.correlations(residual, pc.sqrt_sigma()))
}

/// First index attaining the maximum.
pub fn argmax_correlation(correlations: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, &c) in correlations.iter().enumerate() {
        if c > best.1 {
            best = (k, c);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::kernels::{precondition, KernelOrder};
    use crate::signal::SpikeTrain;

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_correlation(&[0.0, 3.0, 1.0]), (1, 3.0));
        assert_eq!(argmax_correlation(&[2.0, 2.0, 2.0]), (0, 2.0));
    }

    #[test]
    fn on_grid_atom_peaks_at_its_index() {
        let n = 20;
        let n_grid = 64;
        for order in KernelOrder::ALL {
            let pc = Preconditioner::build(order, n).unwrap();
            let y = SpikeTrain::real(vec![17.0 / n_grid as f64], &[1.0]).unwrap().synthesize(n).unwrap();
            let r = precondition(&y, &pc).unwrap();
            let c = grid_correlations(&r, &pc, n_grid).unwrap();
            let (k, v) = argmax_correlation(&c);
            assert_eq!(k, 17);
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_residual() {
        let pc = Preconditioner::build(KernelOrder::Fejer, 8).unwrap();
        let c = grid_correlations(&SampleVector::zeros(8), &pc, 17).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
        assert!(matches!(grid_correlations(&SampleVector::zeros(8), &pc, 16), Err(SolverError::GridTooSmall { .. })));
    }

    #[test]
    fn fft_matches_direct_sum() {
        let n = 32;
        let n_grid = 128;
        let pc = Preconditioner::build(KernelOrder::SquaredFejer, n).unwrap();
        let vals: Vec<Complex64> = (0..2 * n + 1)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let r = SampleVector::new(n, vals).unwrap();
        let c = grid_correlations(&r, &pc, n_grid).unwrap();
        for (k, ck) in c.iter().enumerate() {
            let direct: Complex64 = (0..2 * n + 1)
                .map(|slot| {
                    let ell = slot as f64 - n as f64;
                    pc.sqrt_sigma()[slot] * r.values()[slot] * Complex64::cis(-2.0 * PI * ell * k as f64 / n_grid as f64)
                })
                .sum();
            assert!((direct.norm() - ck).abs() < 1e-10);
        }
    }
}
