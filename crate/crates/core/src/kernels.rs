//! Preconditioning windows and the concentration kernels they induce.
//!
//! A window of order `alpha` is the normalized `alpha`-fold self-convolution
//! of the flat indicator of `{-b..=b}` with `b = floor(n / alpha)`. Its
//! trigonometric sum is therefore exactly
//!
//! ```text
//! K(t) = [ sin(m pi t) / (m sin(pi t)) ]^alpha,   m = 2b + 1,
//! ```
//!
//! which is the Dirichlet kernel for `alpha = 1`, the Fejér kernel for
//! `alpha = 2` and the squared Fejér kernel for `alpha = 4`. For `4 | n` the
//! last one has `m = n/2 + 1`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::signal::SampleVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("unsupported kernel order {0}; expected 1, 2 or 4")]
    UnsupportedOrder(u32),
    #[error("half-bandwidth {n} too small for order {alpha} (need n >= {need})")]
    BandwidthTooSmall { n: usize, alpha: u32, need: usize },
    #[error("kernel offset {0} is outside [-1/2, 1/2]")]
    Domain(f64),
    #[error("dimension mismatch: samples have n = {samples}, preconditioner n = {pc}")]
    Dimension { samples: usize, pc: usize },
    #[error("samples are already preconditioned")]
    AlreadyPreconditioned,
}

/// Kernel order: the number of flat windows convolved together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelOrder {
    Dirichlet,
    Fejer,
    SquaredFejer,
}

impl KernelOrder {
    pub const ALL: [KernelOrder; 3] = [KernelOrder::Dirichlet, KernelOrder::Fejer, KernelOrder::SquaredFejer];

    pub fn alpha(self) -> u32 {
        match self {
            KernelOrder::Dirichlet => 1,
            KernelOrder::Fejer => 2,
            KernelOrder::SquaredFejer => 4,
        }
    }
}

impl TryFrom<u32> for KernelOrder {
    type Error = KernelError;

    fn try_from(alpha: u32) -> Result<Self, KernelError> {
        match alpha {
            1 => Ok(KernelOrder::Dirichlet),
            2 => Ok(KernelOrder::Fejer),
            4 => Ok(KernelOrder::SquaredFejer),
            other => Err(KernelError::UnsupportedOrder(other)),
        }
    }
}

impl fmt::Display for KernelOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.alpha())
    }
}

/// Non-negative symmetric weights `sigma_ell`, `ell = -n..=n`, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    order: KernelOrder,
    n: usize,
    sigma: Vec<f64>,
    sqrt_sigma: Vec<f64>,
}

impl Preconditioner {
    pub fn build(order: KernelOrder, n: usize) -> Result<Self, KernelError> {
        let alpha = order.alpha() as usize;
        if n < 2 * alpha {
            return Err(KernelError::BandwidthTooSmall {
                n,
                alpha: order.alpha(),
                need: 2 * alpha,
            });
        }
        let b = n / alpha;
        let len = 2 * n + 1;
        // Integer-valued running convolution; exact in f64 for any practical n.
        let mut acc = vec![0.0; len];
        acc[n] = 1.0;
        for _ in 0..alpha {
            acc = box_sum(&acc, b);
        }
        let total = (2 * b + 1) as f64;
        let norm = total.powi(alpha as i32);
        let sigma: Vec<f64> = acc.iter().map(|v| v / norm).collect();
        let sqrt_sigma = sigma.iter().map(|s| s.sqrt()).collect();
        Ok(Self {
            order,
            n,
            sigma,
            sqrt_sigma,
        })
    }

    pub fn order(&self) -> KernelOrder {
        self.order
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sqrt_sigma(&self) -> &[f64] {
        &self.sqrt_sigma
    }

    pub fn sigma_at(&self, ell: i64) -> f64 {
        self.sigma[(ell + self.n as i64) as usize]
    }

    /// Half-width `b` of the flat window being convolved.
    pub fn window_half_width(&self) -> usize {
        self.n / self.order.alpha() as usize
    }

    /// `m = 2b + 1` in the closed form.
    pub fn kernel_width(&self) -> usize {
        2 * self.window_half_width() + 1
    }

    /// Direct trigonometric sum `sum_ell sigma_ell exp(j 2 pi ell t)`.
    pub fn kernel(&self, t: f64) -> Complex64 {
        let n = self.n as f64;
        self.sigma
            .iter()
            .enumerate()
            .map(|(slot, &s)| s * Complex64::cis(2.0 * PI * (slot as f64 - n) * t))
            .sum()
    }

    /// Closed-form kernel value and derivatives at offset `t`.
    pub fn eval(&self, t: f64) -> Result<KernelEval, KernelError> {
        kernel_closed_form(self.order, self.n, t)
    }
}

/// Moving sum over `[i - b, i + b]`, truncated at the vector ends.
fn box_sum(v: &[f64], b: usize) -> Vec<f64> {
    let len = v.len();
    let mut prefix = vec![0.0; len + 1];
    for i in 0..len {
        prefix[i + 1] = prefix[i] + v[i];
    }
    (0..len)
        .map(|i| {
            let lo = i.saturating_sub(b);
            let hi = (i + b + 1).min(len);
            prefix[hi] - prefix[lo]
        })
        .collect()
}

/// `K(t)`, `K'(t)` and `K''(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Closed-form kernel of the given order and half-bandwidth.
pub fn kernel_closed_form(order: KernelOrder, n: usize, t: f64) -> Result<KernelEval, KernelError> {
    if !(t.abs() <= 0.5) {
        return Err(KernelError::Domain(t));
    }
    let alpha = order.alpha() as usize;
    let m = (2 * (n / alpha) + 1) as f64;
    let (d, dx, dxx) = dirichlet_ratio(m, PI * t);
    // chain rule x = pi t
    let (d1, d2) = (PI * dx, PI * PI * dxx);
    let a = alpha as i32;
    let (value, k1, k2) = match alpha {
        1 => (d, d1, d2),
        _ => {
            let af = alpha as f64;
            (
                d.powi(a),
                af * d.powi(a - 1) * d1,
                af * (af - 1.0) * d.powi(a - 2) * d1 * d1 + af * d.powi(a - 1) * d2,
            )
        }
    };
    Ok(KernelEval {
        value,
        d1: k1,
        d2: k2,
    })
}

/// `D(x) = sin(m x) / (m sin x)` with first and second x-derivatives.
fn dirichlet_ratio(m: f64, x: f64) -> (f64, f64, f64) {
    if (m * x).abs() < 0.05 {
        // Even Taylor series through x^8.
        let m2 = m * m;
        let c2 = -(m2 - 1.0) / 6.0;
        let c4 = (m2 - 1.0) * (3.0 * m2 - 7.0) / 360.0;
        let c6 = -(m2 - 1.0) * (3.0 * m2 * m2 - 18.0 * m2 + 31.0) / 15120.0;
        let c8 = (m2 - 1.0) * (5.0 * m2 * m2 * m2 - 55.0 * m2 * m2 + 239.0 * m2 - 381.0) / 1_814_400.0;
        let x2 = x * x;
        let d = 1.0 + x2 * (c2 + x2 * (c4 + x2 * (c6 + x2 * c8)));
        let dx = x * (2.0 * c2 + x2 * (4.0 * c4 + x2 * (6.0 * c6 + x2 * 8.0 * c8)));
        let dxx = 2.0 * c2 + x2 * (12.0 * c4 + x2 * (30.0 * c6 + x2 * 56.0 * c8));
        return (d, dx, dxx);
    }
    let u = (m * x).sin();
    let du = m * (m * x).cos();
    let ddu = -m * m * u;
    let v = m * x.sin();
    let dv = m * x.cos();
    let ddv = -v;
    let d = u / v;
    let dx = (du - d * dv) / v;
    let dxx = (ddu - 2.0 * dx * dv - d * ddv) / v;
    (d, dx, dxx)
}

/// `sqrt(sigma) ⊙ y`.
pub fn precondition(y: &SampleVector, pc: &Preconditioner) -> Result<SampleVector, KernelError> {
    if y.is_preconditioned() {
        return Err(KernelError::AlreadyPreconditioned);
    }
    if y.n() != pc.n {
        return Err(KernelError::Dimension {
            samples: y.n(),
            pc: pc.n,
        });
    }
    let values = y
        .values()
        .iter()
        .zip(&pc.sqrt_sigma)
        .map(|(v, s)| v * s)
        .collect();
    Ok(SampleVector::with_flag(y.n(), values, true))
}

/// One squared-Fejér envelope inequality evaluated over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeCheck {
    pub id: &'static str,
    pub range: &'static str,
    /// Smallest relative slack `(bound - lhs) / |bound|` over the range.
    pub worst_margin: f64,
    pub points: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub n: usize,
    pub grid_size: usize,
    pub checks: Vec<EnvelopeCheck>,
}

impl EnvelopeReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, id: &str) -> Option<&EnvelopeCheck> {
        self.checks.iter().find(|c| c.id == id)
    }
}

const MARGIN_SLACK: f64 = 1e-9;

struct MarginAcc {
    worst: f64,
    points: usize,
}

impl MarginAcc {
    fn new() -> Self {
        Self {
            worst: f64::INFINITY,
            points: 0,
        }
    }

    /// Records `lhs <= bound`.
    fn upper(&mut self, lhs: f64, bound: f64) {
        self.points += 1;
        let margin = if bound == 0.0 {
            if lhs.abs() <= 1e-12 {
                0.0
            } else {
                -lhs.abs()
            }
        } else {
            (bound - lhs) / bound.abs()
        };
        self.worst = self.worst.min(margin);
    }

    /// Records `lhs >= bound`.
    fn lower(&mut self, lhs: f64, bound: f64) {
        self.points += 1;
        let margin = if bound == 0.0 {
            if lhs.abs() <= 1e-12 {
                0.0
            } else {
                lhs
            }
        } else {
            (lhs - bound) / bound.abs()
        };
        self.worst = self.worst.min(margin);
    }

    fn finish(self, id: &'static str, range: &'static str) -> EnvelopeCheck {
        EnvelopeCheck {
            id,
            range,
            worst_margin: self.worst,
            points: self.points,
            pass: self.points > 0 && self.worst >= -MARGIN_SLACK,
        }
    }
}

/// Checks the five squared-Fejér envelope inequalities (with `n + 2`) on a
/// uniform grid of `grid_size` points over `[-1/2, 1/2]`, plus the two
/// region boundaries `±1/(2n+4)`.
pub fn certify_envelopes(n: usize, grid_size: usize) -> Result<EnvelopeReport, KernelError> {
    let order = KernelOrder::SquaredFejer;
    if n < 8 {
        return Err(KernelError::BandwidthTooSmall { n, alpha: 4, need: 8 });
    }
    let grid_size = grid_size.max(2);
    let np2 = n as f64 + 2.0;
    let edge = 1.0 / (2.0 * n as f64 + 4.0);
    let pi2 = PI * PI;

    let mut pts: Vec<f64> = (0..grid_size).map(|k| -0.5 + k as f64 / (grid_size - 1) as f64).collect();
    pts.extend([-edge, edge]);

    let mut tail = MarginAcc::new();
    let mut peak = MarginAcc::new();
    let mut first = MarginAcc::new();
    let mut slope = MarginAcc::new();
    let mut second = MarginAcc::new();

    for &t in &pts {
        let k = kernel_closed_form(order, n, t)?;
        let a = t.abs();
        let near = a <= edge;
        let far = a >= edge;
        if far {
            tail.upper(k.value.abs(), 0.7_f64.min(1.0 / (np2 * a).powi(4)));
            first.upper(k.d1.abs(), pi2 / (np2.powi(3) * a.powi(4)));
            second.upper(k.d2.abs(), 4.0 * pi2 * pi2 / (np2 * np2 * a.powi(4)));
        }
        if near {
            let q = np2 * np2 * t * t;
            peak.upper((1.0 - k.value).abs(), pi2 / 6.0 * q);
            peak.lower((1.0 - k.value).abs(), q);
            first.upper(k.d1.abs(), pi2 / 3.0 * np2);
            slope.upper(-k.d1 * t, pi2 / 3.0 * q);
            slope.lower(-k.d1 * t, 1.9 * q);
            second.upper(k.d2.abs(), pi2 / 3.0 * np2 * np2);
        }
    }

    Ok(EnvelopeReport {
        n,
        grid_size,
        checks: vec![
            tail.finish("tail-value", "1/(2n+4) <= |t| <= 1/2"),
            peak.finish("peak-value", "|t| <= 1/(2n+4)"),
            first.finish("first-derivative", "|t| <= 1/2"),
            slope.finish("peak-slope", "|t| <= 1/(2n+4)"),
            second.finish("second-derivative", "|t| <= 1/2"),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SpikeTrain;

    /// Independent reference: repeated full convolution of the flat window.
    fn convolve_window(alpha: usize, n: usize) -> Vec<f64> {
        let b = n / alpha;
        let flat: Vec<f64> = vec![1.0; 2 * b + 1];
        let mut acc = vec![1.0];
        for _ in 0..alpha {
            let mut next = vec![0.0; acc.len() + flat.len() - 1];
            for (i, a) in acc.iter().enumerate() {
                for (j, f) in flat.iter().enumerate() {
                    next[i + j] += a * f;
                }
            }
            acc = next;
        }
        let total: f64 = acc.iter().sum();
        let mut out = vec![0.0; 2 * n + 1];
        let half = acc.len() / 2;
        for (i, a) in acc.iter().enumerate() {
            out[n + i - half] = a / total;
        }
        out
    }

    #[test]
    fn flat_window() {
        let pc = Preconditioner::build(KernelOrder::Dirichlet, 2).unwrap();
        for s in pc.sigma() {
            assert!((s - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn fejer_window_small() {
        // b = 2: [1,2,3,4,5,4,3,2,1] / 25
        let pc = Preconditioner::build(KernelOrder::Fejer, 4).unwrap();
        let want = [1.0, 2.0, 3.0, 4.0, 5.0, 4.0, 3.0, 2.0, 1.0].map(|v| v / 25.0);
        for (s, w) in pc.sigma().iter().zip(want) {
            assert!((s - w).abs() < 1e-15);
        }
        assert_eq!(
            Preconditioner::build(KernelOrder::Fejer, 2),
            Err(KernelError::BandwidthTooSmall { n: 2, alpha: 2, need: 4 })
        );
    }

    #[test]
    fn windows_match_reference_convolution() {
        for order in KernelOrder::ALL {
            for n in [8, 9, 17, 64, 101] {
                let pc = Preconditioner::build(order, n).unwrap();
                let want = convolve_window(order.alpha() as usize, n);
                for (s, w) in pc.sigma().iter().zip(&want) {
                    assert!((s - w).abs() < 1e-15, "alpha {order} n {n}");
                }
                let total: f64 = pc.sigma().iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
                for ell in 0..=n as i64 {
                    assert_eq!(pc.sigma_at(ell), pc.sigma_at(-ell));
                    assert!(pc.sigma_at(ell) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn unsupported_order() {
        assert_eq!(KernelOrder::try_from(3), Err(KernelError::UnsupportedOrder(3)));
    }

    #[test]
    fn peak_is_normalized() {
        for order in KernelOrder::ALL {
            let k = kernel_closed_form(order, 64, 0.0).unwrap();
            assert_eq!(k.value, 1.0);
            assert_eq!(k.d1, 0.0);
            let pc = Preconditioner::build(order, 64).unwrap();
            assert!((pc.kernel(0.0) - 1.0).norm() < 1e-12);
        }
        assert_eq!(kernel_closed_form(KernelOrder::Fejer, 8, 0.51), Err(KernelError::Domain(0.51)));
    }

    #[test]
    fn squared_fejer_at_cell_edge() {
        let n = 100;
        let k = kernel_closed_form(KernelOrder::SquaredFejer, n, 1.0 / (2.0 * n as f64 + 4.0)).unwrap();
        assert!(k.value <= 0.7);
    }

    #[test]
    fn alternating_sum_at_half() {
        let pc = Preconditioner::build(KernelOrder::Dirichlet, 2).unwrap();
        let k = pc.kernel(0.5);
        assert!((k.re - 0.2).abs() < 1e-15);
        assert!(k.im.abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_direct_sum() {
        let pc = Preconditioner::build(KernelOrder::SquaredFejer, 64).unwrap();
        let direct = pc.kernel(0.3);
        let closed = pc.eval(0.3).unwrap().value;
        assert!((direct.re - closed).abs() < 1e-10);
        assert!(direct.im.abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for order in KernelOrder::ALL {
            for n in [16, 64, 256] {
                for &t in &[0.0007, 0.003, 0.0123, 0.07, 0.2, 0.41] {
                    let k = kernel_closed_form(order, n, t).unwrap();
                    let kp = kernel_closed_form(order, n, t + h).unwrap();
                    let km = kernel_closed_form(order, n, t - h).unwrap();
                    let fd1 = (kp.value - km.value) / (2.0 * h);
                    let fd2 = (kp.d1 - km.d1) / (2.0 * h);
                    let scale1 = k.d1.abs().max(1e-3 * n as f64);
                    let scale2 = k.d2.abs().max(1e-3 * (n * n) as f64);
                    assert!((fd1 - k.d1).abs() / scale1 < 1e-5, "d1 alpha {order} n {n} t {t}");
                    assert!((fd2 - k.d2).abs() / scale2 < 1e-5, "d2 alpha {order} n {n} t {t}");
                }
                // symmetric limit at the origin
                let k0 = kernel_closed_form(order, n, 0.0).unwrap();
                let kh = kernel_closed_form(order, n, h).unwrap();
                let fd2 = 2.0 * (kh.value - 1.0) / (h * h);
                assert!((fd2 - k0.d2).abs() / k0.d2.abs() < 1e-5);
            }
        }
    }

    #[test]
    fn series_and_closed_form_agree_at_switch() {
        for order in KernelOrder::ALL {
            let n = 200;
            let m = (2 * (n / order.alpha() as usize) + 1) as f64;
            let x = 0.05 / m;
            let (tb, ta) = ((x * 0.999_999) / PI, (x * 1.000_001) / PI);
            let below = kernel_closed_form(order, n, tb).unwrap();
            let above = kernel_closed_form(order, n, ta).unwrap();
            assert!((below.value + below.d1 * (ta - tb) - above.value).abs() < 1e-12);
            assert!((below.d1 - above.d1).abs() / above.d1.abs() < 1e-5);
            assert!((below.d2 - above.d2).abs() / above.d2.abs() < 1e-5);
        }
    }

    #[test]
    fn flat_precondition_scales_uniformly() {
        let y = SpikeTrain::real(vec![0.31], &[1.5]).unwrap().synthesize(6).unwrap();
        let pc = Preconditioner::build(KernelOrder::Dirichlet, 6).unwrap();
        let z = precondition(&y, &pc).unwrap();
        let s = 1.0 / 13.0_f64.sqrt();
        for (a, b) in z.values().iter().zip(y.values()) {
            assert!((a - b * s).norm() < 1e-15);
        }
    }

    #[test]
    fn preconditioned_single_spike_correlation() {
        let n = 40;
        for order in KernelOrder::ALL {
            let pc = Preconditioner::build(order, n).unwrap();
            let x = Complex64::new(0.7, -1.2);
            let y = SpikeTrain::new(vec![0.377], vec![x]).unwrap().synthesize(n).unwrap();
            let z = precondition(&y, &pc).unwrap();
            // <f(tau), y> with f(tau)_ell = sqrt(sigma_ell) e^{j 2 pi ell tau}
            let corr: Complex64 = z
                .values()
                .iter()
                .enumerate()
                .map(|(slot, v)| pc.sqrt_sigma()[slot] * Complex64::cis(-2.0 * PI * (slot as f64 - n as f64) * 0.377) * v)
                .sum();
            assert!((corr - x).norm() < 1e-12);
        }
    }

    #[test]
    fn preconditioning_is_not_idempotent() {
        let n = 8;
        let pc = Preconditioner::build(KernelOrder::Fejer, n).unwrap();
        let y = SpikeTrain::real(vec![0.2], &[1.0]).unwrap().synthesize(n).unwrap();
        let once = precondition(&y, &pc).unwrap();
        assert_eq!(precondition(&once, &pc), Err(KernelError::AlreadyPreconditioned));
        // sigma applied twice is sigma, not sqrt(sigma)
        let twice: Vec<Complex64> = once.values().iter().zip(pc.sqrt_sigma()).map(|(v, s)| v * s).collect();
        let diff: f64 = twice.iter().zip(once.values()).map(|(a, b)| (a - b).norm()).sum();
        assert!(diff > 1e-3);
        assert!(matches!(
            precondition(&y, &Preconditioner::build(KernelOrder::Fejer, 9).unwrap()),
            Err(KernelError::Dimension { .. })
        ));
    }

    #[test]
    fn envelope_spot_checks() {
        let r = certify_envelopes(64, 640).unwrap();
        assert!(r.check("peak-value").unwrap().pass);
        let r = certify_envelopes(128, 1280).unwrap();
        assert!(r.check("peak-slope").unwrap().pass);
        let r = certify_envelopes(100, 10_000).unwrap();
        assert!(r.all_pass(), "{r:?}");
    }

    /// Largest |K(s)| over |s| >= t.
    fn tail_envelope(order: KernelOrder, n: usize, t: f64) -> f64 {
        let steps = 20_000;
        (0..=steps)
            .map(|k| t + (0.5 - t) * k as f64 / steps as f64)
            .map(|s| kernel_closed_form(order, n, s).unwrap().value.abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn larger_order_has_lighter_tail() {
        let n = 100;
        let t = 5.0 / n as f64;
        let e1 = tail_envelope(KernelOrder::Dirichlet, n, t);
        let e2 = tail_envelope(KernelOrder::Fejer, n, t);
        let e4 = tail_envelope(KernelOrder::SquaredFejer, n, t);
        assert!(e4 < e2 && e2 < e1, "{e4} {e2} {e1}");
        let k4 = kernel_closed_form(KernelOrder::SquaredFejer, n, t).unwrap().value.abs();
        let k1 = kernel_closed_form(KernelOrder::Dirichlet, n, t).unwrap().value.abs();
        assert!(k4 < k1);
    }
}
