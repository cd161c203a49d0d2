use std::f64::consts::PI;

use num_complex::Complex64;

use super::gram::{solve_gram, GramGuard, GramSystem};
use super::{Dictionary, SolverError};
use crate::signal::{wrap_unit, SampleVector};

/// Result of one sliding run.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideOutcome {
    pub omegas: Vec<f64>,
    /// Gradient steps actually taken.
    pub steps: usize,
    /// The Gram system failed at some iterate; `omegas` is the last good one.
    pub stalled: bool,
}

/// Gradient of `||y - F(omega) c(omega)||^2` with the least-squares
/// coefficients profiled out.
pub fn sliding_gradient(
    omegas: &[f64],
    y: &SampleVector,
    dict: &Dictionary,
    guard: &GramGuard,
) -> Result<Vec<f64>, SolverError> {
    let gs = solve_gram(omegas, y, dict, guard)?;
    Ok(gradient_at(&gs, &dict.gather(y), dict))
}

fn gradient_at(gs: &GramSystem<'_>, y_active: &[Complex64], dict: &Dictionary) -> Vec<f64> {
    let r = gs.residual_active(y_active);
    gs.atoms()
        .iter()
        .zip(gs.coeffs())
        .map(|(atom, c)| {
            // r^H z with z_ell = (j 2 pi ell) a_ell
            let rz: Complex64 = r
                .iter()
                .zip(atom)
                .zip(dict.ells())
                .map(|((r, a), &l)| r.conj() * a * Complex64::new(0.0, 2.0 * PI * l))
                .sum();
            -2.0 * (rz * c).re
        })
        .collect()
}

/// Weighted gradient descent on the frequencies.
///
/// The weights `w = c(omega0)` are computed once. Each step moves
/// `omega_i` by `eta / |w_i|^2 * g_i` with `eta = eta0 * (pi^2 / 3) / curvature`,
/// which reduces to `eta0 / n^2` for the full-mask squared Fejer dictionary
/// and stays scale-free for the other kernels and for masked dictionaries.
pub fn sliding(
    omega0: &[f64],
    y: &SampleVector,
    dict: &Dictionary,
    eta0: f64,
    t_max: usize,
    guard: &GramGuard,
) -> Result<SlideOutcome, SolverError> {
    let y_active = dict.gather(y);
    let gs = solve_gram(omega0, y, dict, guard)?;
    let inv_w2: Vec<f64> = gs
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let m = w.norm_sqr();
            if m > 0.0 {
                Ok(1.0 / m)
            } else {
                Err(SolverError::ZeroWeight(i))
            }
        })
        .collect::<Result<_, _>>()?;
    let eta = eta0 * (PI * PI / 3.0) / dict.curvature();

    let mut omegas = omega0.to_vec();
    let mut grad = gradient_at(&gs, &y_active, dict);
    let mut steps = 0;
    while steps < t_max {
        let step: Vec<f64> = grad.iter().zip(&inv_w2).map(|(g, iw)| eta * iw * g).collect();
        if step.iter().fold(0.0_f64, |m, s| m.max(s.abs())) < 1e-14 {
            break;
        }
        let next: Vec<f64> = omegas.iter().zip(&step).map(|(w, s)| wrap_unit(w - s)).collect();
        match solve_gram(&next, y, dict, guard) {
            Ok(gs) => {
                grad = gradient_at(&gs, &y_active, dict);
                omegas = next;
                steps += 1;
            }
            Err(_) => {
                return Ok(SlideOutcome {
                    omegas,
                    steps,
                    stalled: true,
                })
            }
        }
    }
    Ok(SlideOutcome {
        omegas,
        steps,
        stalled: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelOrder, Preconditioner};
    use crate::signal::{match_frequencies, SpikeTrain};

    fn two_spike(n: usize, sep: f64) -> (SpikeTrain, Dictionary, SampleVector, GramGuard) {
        let pc = Preconditioner::build(KernelOrder::SquaredFejer, n).unwrap();
        let dict = Dictionary::full(&pc);
        let truth = SpikeTrain::new(
            vec![0.3, 0.3 + sep / n as f64],
            vec![Complex64::new(1.0, 0.5), Complex64::new(-0.8, 0.3)],
        )
        .unwrap();
        let y = dict.prepare(&truth.synthesize(n).unwrap()).unwrap();
        let guard = GramGuard::new(n, 4 * n, 1e12);
        (truth, dict, y, guard)
    }

    #[test]
    fn zero_gradient_at_truth() {
        let (truth, dict, y, guard) = two_spike(64, 3.0);
        let g = sliding_gradient(truth.taus(), &y, &dict, &guard).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9), "{g:?}");
        let out = sliding(truth.taus(), &y, &dict, 0.2, 50, &guard).unwrap();
        assert_eq!(out.omegas, truth.taus());
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn zero_iterations() {
        let (truth, dict, y, guard) = two_spike(64, 3.0);
        let w0 = vec![truth.taus()[0] + 0.001, truth.taus()[1]];
        let out = sliding(&w0, &y, &dict, 0.2, 0, &guard).unwrap();
        assert_eq!(out.omegas, w0);
        assert!(!out.stalled);
    }

    #[test]
    fn weighted_error_contracts() {
        let n = 64;
        let (truth, dict, y, guard) = two_spike(n, 3.0);
        let d = 0.3 / n as f64;
        let w0 = vec![truth.taus()[0] + d, truth.taus()[1] - d];
        let mut prev = match_frequencies(&w0, &truth).unwrap().max_weighted_error();
        for k in 1..=10 {
            let omegas = sliding(&w0, &y, &dict, 0.2, k, &guard).unwrap().omegas;
            let e = match_frequencies(&omegas, &truth).unwrap().max_weighted_error();
            assert!(e < prev, "{e} !< {prev}");
            prev = e;
        }
    }

    #[test]
    fn converges_from_a_grid_start() {
        let n = 100;
        let (truth, dict, y, guard) = two_spike(n, 2.0);
        let w0: Vec<f64> = truth.taus().iter().map(|t| (t * 400.0).round() / 400.0).collect();
        let out = sliding(&w0, &y, &dict, 0.2, 200, &guard).unwrap();
        let m = match_frequencies(&out.omegas, &truth).unwrap();
        assert!(m.max_error() < 1e-10, "{}", m.max_error());
        assert!(out.steps < 200);
    }

    #[test]
    fn single_spike_gradient_points_home() {
        let n = 40;
        let pc = Preconditioner::build(KernelOrder::Fejer, n).unwrap();
        let dict = Dictionary::full(&pc);
        let tau = 0.37;
        let y = dict.prepare(&SpikeTrain::real(vec![tau], &[1.7]).unwrap().synthesize(n).unwrap()).unwrap();
        let guard = GramGuard::new(n, 4 * n, 1e12);
        for k in 1..=8 {
            let d = k as f64 * 0.05 / n as f64;
            for w in [tau - d, tau + d] {
                let g = sliding_gradient(&[w], &y, &dict, &guard).unwrap()[0];
                assert!(g * (w - tau) > 0.0);
            }
        }
    }
}
