use num_complex::Complex64;

use super::{Dictionary, SolverError};
use crate::signal::{wrap_distance, SampleVector};

/// Rejection thresholds for a Gram solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramGuard {
    pub cond_limit: f64,
    /// Frequencies closer than this (on the circle) are treated as one atom.
    pub min_gap: f64,
}

impl GramGuard {
    pub fn new(n: usize, n_grid: usize, cond_limit: f64) -> Self {
        Self {
            cond_limit,
            min_gap: 1.0 / (10.0 * n as f64 * n_grid as f64),
        }
    }
}

/// Normal equations `A c = F* y` for the current frequency set.
#[derive(Debug, Clone)]
pub struct GramSystem<'d> {
    dict: &'d Dictionary,
    omegas: Vec<f64>,
    atoms: Vec<Vec<Complex64>>,
    gram: Vec<Complex64>,
    fy: Vec<Complex64>,
    coeffs: Vec<Complex64>,
    cond: f64,
}

impl<'d> GramSystem<'d> {
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// `A_ik = <a(omega_i), a(omega_k)>`.
    pub fn gram(&self, i: usize, k: usize) -> Complex64 {
        self.gram[i * self.len() + k]
    }

    /// `<a(omega_i), y>`.
    pub fn fy(&self) -> &[Complex64] {
        &self.fy
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// 1-norm condition number of `A`.
    pub fn condition(&self) -> f64 {
        self.cond
    }

    pub(crate) fn atoms(&self) -> &[Vec<Complex64>] {
        &self.atoms
    }

    /// `y - F c` on the active indices.
    pub(crate) fn residual_active(&self, y_active: &[Complex64]) -> Vec<Complex64> {
        let mut r = y_active.to_vec();
        for (atom, c) in self.atoms.iter().zip(&self.coeffs) {
            for (ri, a) in r.iter_mut().zip(atom) {
                *ri -= c * a;
            }
        }
        r
    }
}

/// Assembles the masked Gram system at `omegas` and solves it by Cholesky.
pub fn solve_gram<'d>(
    omegas: &[f64],
    y: &SampleVector,
    dict: &'d Dictionary,
    guard: &GramGuard,
) -> Result<GramSystem<'d>, SolverError> {
    dict.check(y)?;
    let t = omegas.len();
    for i in 0..t {
        for k in i + 1..t {
            let gap = wrap_distance(omegas[i], omegas[k]);
            if gap < guard.min_gap {
                return Err(SolverError::Degenerate {
                    i,
                    k,
                    gap,
                    min_gap: guard.min_gap,
                });
            }
        }
    }
    let atoms: Vec<Vec<Complex64>> = omegas.iter().map(|&w| dict.atom(w)).collect();
    let y_active = dict.gather(y);

    let mut gram = vec![Complex64::new(0.0, 0.0); t * t];
    for i in 0..t {
        for k in i..t {
            let v: Complex64 = atoms[i].iter().zip(&atoms[k]).map(|(a, b)| a.conj() * b).sum();
            gram[i * t + k] = v;
            gram[k * t + i] = v.conj();
        }
    }
    let fy: Vec<Complex64> = atoms
        .iter()
        .map(|a| a.iter().zip(&y_active).map(|(a, y)| a.conj() * y).sum())
        .collect();

    let chol = Cholesky::factor(&gram, t)?;
    let cond = if t == 0 { 1.0 } else { chol.condition_1(&gram) };
    if !(cond <= guard.cond_limit) {
        return Err(SolverError::IllConditioned {
            cond,
            limit: guard.cond_limit,
        });
    }
    let coeffs = chol.solve(&fy);
    Ok(GramSystem {
        dict,
        omegas: omegas.to_vec(),
        atoms,
        gram,
        fy,
        coeffs,
        cond,
    })
}

/// `r = y - F(omega) c`, recomputed from `y`.
pub fn residual(y: &SampleVector, gs: &GramSystem<'_>) -> SampleVector {
    let r = gs.residual_active(&gs.dict.gather(y));
    gs.dict.scatter(&r)
}

/// Lower-triangular factor of a Hermitian positive definite matrix.
struct Cholesky {
    t: usize,
    l: Vec<Complex64>,
}

impl Cholesky {
    fn factor(a: &[Complex64], t: usize) -> Result<Self, SolverError> {
        let mut l = vec![Complex64::new(0.0, 0.0); t * t];
        for j in 0..t {
            let mut d = a[j * t + j].re;
            for k in 0..j {
                d -= l[j * t + k].norm_sqr();
            }
            if !(d > 0.0) {
                return Err(SolverError::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l[j * t + j] = Complex64::new(djj, 0.0);
            for i in j + 1..t {
                let mut s = a[i * t + j];
                for k in 0..j {
                    s -= l[i * t + k] * l[j * t + k].conj();
                }
                l[i * t + j] = s / djj;
            }
        }
        Ok(Self { t, l })
    }

    fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let t = self.t;
        let l = &self.l;
        let mut z = b.to_vec();
        for i in 0..t {
            for k in 0..i {
                let lz = l[i * t + k] * z[k];
                z[i] -= lz;
            }
            z[i] /= l[i * t + i];
        }
        for i in (0..t).rev() {
            for k in i + 1..t {
                let lz = l[k * t + i].conj() * z[k];
                z[i] -= lz;
            }
            z[i] /= l[i * t + i];
        }
        z
    }

    fn condition_1(&self, a: &[Complex64]) -> f64 {
        let t = self.t;
        let col_norm_max = |m: &[Complex64]| {
            (0..t)
                .map(|j| (0..t).map(|i| m[i * t + j].norm()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let mut inv = vec![Complex64::new(0.0, 0.0); t * t];
        for j in 0..t {
            let mut e = vec![Complex64::new(0.0, 0.0); t];
            e[j] = Complex64::new(1.0, 0.0);
            for (i, v) in self.solve(&e).into_iter().enumerate() {
                inv[i * t + j] = v;
            }
        }
        col_norm_max(a) * col_norm_max(&inv)
    }
}
