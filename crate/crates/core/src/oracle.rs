//! Brute-force references that share no code with the solver: dense
//! least-squares losses by Gram-Schmidt, finite-difference gradients, loss
//! landscape slices, adversarial instances for plain OMP and a Monte-Carlo
//! probe of masked-kernel concentration.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::kernels::{KernelError, KernelOrder, Preconditioner};
use crate::signal::{wrap_unit, ObservationMask, SampleVector, SignalError, SpikeTrain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("atom {column} is numerically dependent on the previous ones")]
    Degenerate { column: usize },
    #[error("loss evaluation failed when perturbing coordinate {index}: {source}")]
    Coordinate {
        index: usize,
        #[source]
        source: Box<OracleError>,
    },
    #[error("finite-difference step {0:e} outside [1e-9, 1e-4]")]
    Step(f64),
    #[error("samples must be preconditioned")]
    NotPrepared,
    #[error("dimension mismatch: samples n = {samples}, preconditioner n = {pc}, mask n = {mask}")]
    Dimension { samples: usize, pc: usize, mask: usize },
    #[error("coordinate {coordinate} out of range for {len} frequencies")]
    NoSuchCoordinate { coordinate: usize, len: usize },
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("probe requires n p >= 4, got n = {n}, p = {p}")]
    ProbeRegime { n: usize, p: f64 },
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(a, b)| a.conj() * b).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// `1/2 ||y - P y||^2` with `P` the orthogonal projector onto the masked,
/// weighted atoms at `omegas`.
///
/// The projector is built by modified Gram-Schmidt with one
/// re-orthogonalisation pass; no normal equations are formed.
pub fn dense_loss(
    omegas: &[f64],
    y: &SampleVector,
    pc: &Preconditioner,
    mask: &ObservationMask,
) -> Result<f64, OracleError> {
    if y.n() != pc.n() || y.n() != mask.n() {
        return Err(OracleError::Dimension {
            samples: y.n(),
            pc: pc.n(),
            mask: mask.n(),
        });
    }
    if !y.is_preconditioned() {
        return Err(OracleError::NotPrepared);
    }
    let n = y.n() as f64;
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(omegas.len());
    for (column, &w) in omegas.iter().enumerate() {
        let mut a: Vec<Complex64> = pc
            .sigma()
            .iter()
            .zip(mask.observed())
            .enumerate()
            .map(|(slot, (&s, &o))| {
                if o {
                    s.sqrt() * Complex64::cis(2.0 * PI * (slot as f64 - n) * w)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let a_norm = norm(&a);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &a);
                a.iter_mut().zip(q).for_each(|(ai, qi)| *ai -= c * qi);
            }
        }
        let left = norm(&a);
        if !(left > 1e-10 * a_norm) {
            return Err(OracleError::Degenerate { column });
        }
        a.iter_mut().for_each(|v| *v /= left);
        basis.push(a);
    }
    let mut r: Vec<Complex64> = y
        .values()
        .iter()
        .zip(mask.observed())
        .map(|(&v, &o)| if o { v } else { Complex64::new(0.0, 0.0) })
        .collect();
    for _ in 0..2 {
        for q in &basis {
            let c = dot(q, &r);
            r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
        }
    }
    Ok(0.5 * r.iter().map(|v| v.norm_sqr()).sum::<f64>())
}

/// Central differences of `2 * dense_loss`, one coordinate at a time.
pub fn finite_diff_gradient(
    omegas: &[f64],
    y: &SampleVector,
    pc: &Preconditioner,
    mask: &ObservationMask,
    step: f64,
) -> Result<Vec<f64>, OracleError> {
    if !(1e-9..=1e-4).contains(&step) {
        return Err(OracleError::Step(step));
    }
    let mut w = omegas.to_vec();
    let mut g = Vec::with_capacity(omegas.len());
    for i in 0..omegas.len() {
        let wrap = |e: OracleError| OracleError::Coordinate {
            index: i,
            source: Box::new(e),
        };
        w[i] = omegas[i] + step;
        let plus = dense_loss(&w, y, pc, mask).map_err(wrap)?;
        w[i] = omegas[i] - step;
        let minus = dense_loss(&w, y, pc, mask).map_err(wrap)?;
        w[i] = omegas[i];
        g.push((plus - minus) / step);
    }
    Ok(g)
}

/// `dense_loss` along one coordinate with the others held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeScan {
    pub base: Vec<f64>,
    pub coordinate: usize,
    /// Scanned values of `omegas[coordinate]`. Points where the atoms become
    /// dependent are dropped.
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
}

impl LandscapeScan {
    pub fn scan(
        base: &[f64],
        coordinate: usize,
        axis: &[f64],
        y: &SampleVector,
        pc: &Preconditioner,
        mask: &ObservationMask,
    ) -> Result<Self, OracleError> {
        if coordinate >= base.len() {
            return Err(OracleError::NoSuchCoordinate {
                coordinate,
                len: base.len(),
            });
        }
        let mut w = base.to_vec();
        let mut kept = Vec::with_capacity(axis.len());
        let mut values = Vec::with_capacity(axis.len());
        for &x in axis {
            w[coordinate] = wrap_unit(x);
            match dense_loss(&w, y, pc, mask) {
                Ok(v) => {
                    kept.push(x);
                    values.push(v);
                }
                Err(OracleError::Degenerate { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(Self {
            base: base.to_vec(),
            coordinate,
            axis: kept,
            values,
        })
    }

    /// `k / resolution` for `k = 0..resolution`.
    pub fn uniform_axis(resolution: usize) -> Vec<f64> {
        (0..resolution).map(|k| k as f64 / resolution as f64).collect()
    }

    /// `points` evenly spaced values covering `[center - half, center + half]`.
    pub fn window_axis(center: f64, half: f64, points: usize) -> Vec<f64> {
        let step = 2.0 * half / (points.max(2) - 1) as f64;
        (0..points).map(|k| center - half + k as f64 * step).collect()
    }

    /// Smallest value and its position (first on ties).
    pub fn argmin(&self) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for (&x, &v) in self.axis.iter().zip(&self.values) {
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((x, v));
            }
        }
        best
    }
}

/// Three-spike instance on which plain OMP misplaces the weakest spike.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialInstance {
    pub train: SpikeTrain,
    pub n: usize,
    pub c: f64,
    pub l: f64,
    /// `n * Delta_1`, an integer number of `1/n` spacings.
    pub ell1: usize,
    /// `L / n`: the third-frequency error plain OMP is expected to exceed.
    pub target_error: f64,
}

impl AdversarialInstance {
    pub const DEFAULT_C: f64 = 4.0;
    pub const DEFAULT_L: f64 = 3.0;
    const TAU1: f64 = 0.5;

    /// Same amplitudes and layout with the closest pair `n_delta / n` apart.
    pub fn widened(&self, n_delta: f64) -> Result<SpikeTrain, OracleError> {
        let n = self.n as f64;
        if !(n_delta > 0.0 && n_delta * (1.0 + self.l) < n / 2.0) {
            return Err(OracleError::Infeasible(format!(
                "n_delta = {n_delta} with L = {} does not fit in n = {}",
                self.l, self.n
            )));
        }
        Ok(layout(n_delta / n, self.l, self.train.amps().to_vec())?)
    }
}

fn layout(d1: f64, l: f64, amps: Vec<Complex64>) -> Result<SpikeTrain, SignalError> {
    let t1 = AdversarialInstance::TAU1;
    SpikeTrain::new(vec![t1, wrap_unit(t1 + d1), wrap_unit(t1 - l * d1)], amps)
}

/// Builds the instance with `Delta_1 = ell1 / n`, `ell1 = floor(c) + 1`,
/// `tau_2 = tau_1 + Delta_1`, `tau_3 = tau_1 - L Delta_1`, amplitudes
/// `x_1 = 2 x_2 = 2` and `x_3 = min(x_2 / (4 ell1^2), x_1 / (2c))`.
pub fn adversarial_instance(c: f64, l: f64, n: usize) -> Result<AdversarialInstance, OracleError> {
    if !(c > 0.0 && c.is_finite() && l > 0.0 && l.is_finite()) {
        return Err(OracleError::Infeasible(format!("need c > 0 and L > 0, got c = {c}, L = {l}")));
    }
    let ell1 = c.floor() as usize + 1;
    if !((ell1 as f64) * (1.0 + l) < n as f64 / 2.0) {
        return Err(OracleError::Infeasible(format!(
            "ell1 (1 + L) = {} must be below n / 2 = {}",
            ell1 as f64 * (1.0 + l),
            n as f64 / 2.0
        )));
    }
    let x1 = 2.0;
    let x2 = 1.0;
    let x3 = f64::min(x2 / (4.0 * (ell1 * ell1) as f64), x1 / (2.0 * c));
    let amps = vec![Complex64::new(x1, 0.0), Complex64::new(x2, 0.0), Complex64::new(x3, 0.0)];
    let train = layout(ell1 as f64 / n as f64, l, amps)?;
    Ok(AdversarialInstance {
        train,
        n,
        c,
        l,
        ell1,
        target_error: l / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTrial {
    pub seed: u64,
    /// `sup_tau |K~^(q) - p K^(q)| / n^q` for `q = 0, 1, 2`.
    pub deviation: [f64; 3],
    /// `deviation / sqrt(p log(n) / n)`.
    pub ratio: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub n: usize,
    pub p: f64,
    pub grid: usize,
    pub trials: Vec<ProbeTrial>,
}

impl ConcentrationReport {
    pub fn median_deviation(&self, q: usize) -> f64 {
        median(self.trials.iter().map(|t| t.deviation[q]).collect())
    }

    pub fn max_ratio(&self, q: usize) -> f64 {
        self.trials.iter().map(|t| t.ratio[q]).fold(0.0, f64::max)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Monte-Carlo deviation of the masked squared Fejer kernel from `p` times
/// the full one, over a `10 n` point grid. Trial `i` uses mask seed `seed + i`.
pub fn concentration_probe(n: usize, p: f64, trials: usize, seed: u64) -> Result<ConcentrationReport, OracleError> {
    if !(p > 0.0 && p <= 1.0) || (n as f64) * p < 4.0 {
        return Err(OracleError::ProbeRegime { n, p });
    }
    let pc = Preconditioner::build(KernelOrder::SquaredFejer, n)?;
    let grid = 10 * n;
    let fft = FftPlanner::new().plan_fft_forward(grid);
    let bound = (p * (n as f64).ln() / n as f64).sqrt();
    let trials = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            let mask = ObservationMask::bernoulli_symmetric(n, p, s)?;
            let mut deviation = [0.0; 3];
            for (q, dev) in deviation.iter_mut().enumerate() {
                let mut buf = vec![Complex64::new(0.0, 0.0); grid];
                for (slot, (&sig, &o)) in pc.sigma().iter().zip(mask.observed()).enumerate() {
                    let ell = slot as i64 - n as i64;
                    let b = if o { 1.0 } else { 0.0 };
                    let d = Complex64::new(0.0, 2.0 * PI * ell as f64).powu(q as u32);
                    // slot -ell turns the forward transform into sum_ell v_ell exp(+j 2 pi ell k / grid)
                    buf[(-ell).rem_euclid(grid as i64) as usize] = (b - p) * sig * d;
                }
                fft.process(&mut buf);
                let sup = buf.iter().map(|c| c.norm()).fold(0.0, f64::max);
                *dev = sup / (n as f64).powi(q as i32);
            }
            let ratio = deviation.map(|d| d / bound);
            Ok(ProbeTrial {
                seed: s,
                deviation,
                ratio,
            })
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    Ok(ConcentrationReport { n, p, grid, trials })
}
