use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kernels::KernelOrder;

/// Number of observed indices in the reference sweep, out of 789.
pub const REFERENCE_MEASUREMENTS: usize = 180;
pub const REFERENCE_LEN: usize = 789;
pub const REFERENCE_GRID: usize = 1800;
/// Recovery criterion on the largest matched frequency error.
pub const RECOVERY_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Synth,
    Recover,
    SweepDyn,
    #[serde(alias = "sweep-separation")]
    SweepSep,
    KernelTable,
    Certify,
    Adversarial,
    ProbeConcentration,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Synth => "synth",
            Mode::Recover => "recover",
            Mode::SweepDyn => "sweep-dyn",
            Mode::SweepSep => "sweep-sep",
            Mode::KernelTable => "kernel-table",
            Mode::Certify => "certify",
            Mode::Adversarial => "adversarial",
            Mode::ProbeConcentration => "probe-concentration",
        }
    }
}

/// Frequency layout of a generated instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// `tau_i = (1 + i) Delta` for `i = 1..=s`.
    Ladder,
    /// Uniformly random with minimum separation `Delta`.
    Random,
}

/// Named amplitude rules. Phases are always uniform on `[0, 2 pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AmplitudePreset {
    /// `|x| = [1, u, max(u/2, 1), 1, u]`, cycled for other `s`.
    #[serde(rename = "fig4")]
    Fig4,
    /// `|x_i| = 1 + 10^Unif[0, v]`.
    #[serde(rename = "fig6-v0.5")]
    Fig6V05,
    #[serde(rename = "fig6-v1")]
    Fig6V1,
    #[serde(rename = "fig6-v1.5")]
    Fig6V15,
    #[serde(rename = "unit")]
    Unit,
}

impl AmplitudePreset {
    pub fn fig6(v: f64) -> Option<Self> {
        match v {
            v if v == 0.5 => Some(Self::Fig6V05),
            v if v == 1.0 => Some(Self::Fig6V1),
            v if v == 1.5 => Some(Self::Fig6V15),
            _ => None,
        }
    }

    pub fn v(self) -> Option<f64> {
        match self {
            Self::Fig6V05 => Some(0.5),
            Self::Fig6V1 => Some(1.0),
            Self::Fig6V15 => Some(1.5),
            _ => None,
        }
    }

    /// Smallest amplitude magnitude the preset can produce.
    pub fn floor(self) -> f64 {
        match self {
            Self::Fig4 | Self::Unit => 1.0,
            _ => 2.0,
        }
    }
}

/// Recovery algorithm: plain or sliding OMP with a kernel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Algorithm {
    pub sliding: bool,
    pub alpha: u32,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm { sliding: false, alpha: 1 },
        Algorithm { sliding: false, alpha: 2 },
        Algorithm { sliding: false, alpha: 4 },
        Algorithm { sliding: true, alpha: 1 },
        Algorithm { sliding: true, alpha: 2 },
        Algorithm { sliding: true, alpha: 4 },
    ];

    pub fn order(self) -> KernelOrder {
        KernelOrder::try_from(self.alpha).expect("validated on parse")
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-a{}", if self.sliding { "somp" } else { "omp" }, self.alpha)
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("unknown algorithm {s:?}; expected omp-a{{1,2,4}} or somp-a{{1,2,4}}");
        let (kind, alpha) = s.split_once("-a").ok_or_else(bad)?;
        let sliding = match kind {
            "omp" => false,
            "somp" => true,
            _ => return Err(bad()),
        };
        let alpha: u32 = alpha.parse().map_err(|_| bad())?;
        KernelOrder::try_from(alpha).map_err(|_| bad())?;
        Ok(Self { sliding, alpha })
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceConfig {
    /// Half-bandwidth; samples run over `-n..=n`.
    pub n: usize,
    pub s: usize,
    /// Minimum separation in units of `1/n`.
    pub n_delta: f64,
    pub placement: Placement,
    pub amplitudes: AmplitudePreset,
    /// Dynamic-range knob of the `fig4` preset.
    pub u: f64,
    /// Bernoulli observation rate.
    pub p: f64,
    /// Use an exact-count mask with this many observed indices instead.
    pub measurements: Option<usize>,
    pub exact_count: bool,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            n: (REFERENCE_LEN - 1) / 2,
            s: 5,
            n_delta: 1.15,
            placement: Placement::Ladder,
            amplitudes: AmplitudePreset::Fig4,
            u: 1.0,
            p: REFERENCE_MEASUREMENTS as f64 / REFERENCE_LEN as f64,
            measurements: None,
            exact_count: false,
        }
    }
}

impl InstanceConfig {
    pub fn measurement_count(&self) -> usize {
        self.measurements
            .unwrap_or_else(|| (self.p * (2 * self.n + 1) as f64).round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub algorithms: Vec<Algorithm>,
    /// Explicit stopping threshold. When absent, `gamma_fraction` times the
    /// amplitude floor times the observed preconditioner mass is used.
    pub gamma: Option<f64>,
    pub gamma_fraction: f64,
    /// Defaults to the amplitude preset's floor.
    pub amplitude_floor: Option<f64>,
    /// Defaults to `1800 (2n + 1) / 789`, rounded.
    pub n_grid: Option<usize>,
    pub eta0: f64,
    pub t_slide: usize,
    /// Defaults to `2 s` in sweeps.
    pub max_spikes: Option<usize>,
    pub cond_limit: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            gamma: None,
            gamma_fraction: 0.5,
            amplitude_floor: None,
            n_grid: None,
            eta0: crate::solver::SolverConfig::DEFAULT_ETA0,
            t_slide: crate::solver::SolverConfig::DEFAULT_T_SLIDE,
            max_spikes: None,
            cond_limit: crate::solver::SolverConfig::DEFAULT_COND_LIMIT,
        }
    }
}

impl SolverSettings {
    pub fn grid_for(&self, n: usize) -> usize {
        self.n_grid.unwrap_or_else(|| {
            let g = (REFERENCE_GRID as f64 * (2 * n + 1) as f64 / REFERENCE_LEN as f64).round() as usize;
            g.max(2 * n + 1)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub u: Vec<f64>,
    pub n_delta: Vec<f64>,
    pub v: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            u: (1..=8).map(f64::from).collect(),
            n_delta: (0..=10).map(|k| 0.5 + 0.25 * k as f64).collect(),
            v: vec![0.5, 1.0, 1.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelTableConfig {
    pub n: usize,
    pub alphas: Vec<u32>,
    /// Samples over `[-1/2, 1/2]`, endpoints included.
    pub points: usize,
}

impl Default for KernelTableConfig {
    fn default() -> Self {
        Self {
            n: 64,
            alphas: vec![1, 2, 4],
            points: 2001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    pub n: Vec<usize>,
    pub grid: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            n: vec![64, 100, 256],
            grid: 20001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversarialConfig {
    pub c: f64,
    pub l: f64,
    pub n: usize,
    /// Separation of the widened variant handed to sliding OMP, in units of `1/n`.
    pub widened_n_delta: f64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            c: crate::oracle::AdversarialInstance::DEFAULT_C,
            l: crate::oracle::AdversarialInstance::DEFAULT_L,
            n: 394,
            widened_n_delta: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub n: usize,
    pub p: Vec<f64>,
    pub trials: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            n: 256,
            p: vec![0.6, 0.3, 0.15],
            trials: 50,
        }
    }
}

/// Everything a run needs. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    /// First seed; runs use `seed..seed + seeds`.
    pub seed: u64,
    pub seeds: usize,
    pub instance: InstanceConfig,
    pub solver: SolverSettings,
    pub sweep: SweepConfig,
    pub kernel_table: KernelTableConfig,
    pub certify: CertifyConfig,
    pub adversarial: AdversarialConfig,
    pub probe: ProbeConfig,
    pub output: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: None,
            seed: 0,
            seeds: 10,
            instance: InstanceConfig::default(),
            solver: SolverSettings::default(),
            sweep: SweepConfig::default(),
            kernel_table: KernelTableConfig::default(),
            certify: CertifyConfig::default(),
            adversarial: AdversarialConfig::default(),
            probe: ProbeConfig::default(),
            output: None,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn finite_pos(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| LoadError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// Range checks that serde cannot express.
    pub fn validate(&self) -> Result<(), String> {
        let i = &self.instance;
        check(i.n >= 8, || format!("instance.n must be >= 8, got {}", i.n))?;
        check(i.s >= 1 && i.s <= 2 * i.n + 1, || format!("instance.s must be in 1..=2n+1, got {}", i.s))?;
        check(finite_pos(i.n_delta), || format!("instance.n_delta must be positive, got {}", i.n_delta))?;
        check(i.u.is_finite() && i.u >= 1.0, || format!("instance.u must be >= 1, got {}", i.u))?;
        check(i.p > 0.0 && i.p <= 1.0, || format!("instance.p must be in (0, 1], got {}", i.p))?;
        if let Some(m) = i.measurements {
            check(m >= 1 && m <= 2 * i.n + 1, || format!("instance.measurements must be in 1..=2n+1, got {m}"))?;
        }
        let s = &self.solver;
        check(!s.algorithms.is_empty(), || "solver.algorithms must not be empty".into())?;
        if let Some(g) = s.gamma {
            check(g.is_finite() && g >= 0.0, || format!("solver.gamma must be >= 0, got {g}"))?;
        }
        check(s.gamma_fraction.is_finite() && s.gamma_fraction > 0.0 && s.gamma_fraction < 1.0, || {
            format!("solver.gamma_fraction must be in (0, 1), got {}", s.gamma_fraction)
        })?;
        if let Some(f) = s.amplitude_floor {
            check(finite_pos(f), || format!("solver.amplitude_floor must be positive, got {f}"))?;
        }
        if let Some(g) = s.n_grid {
            check(g >= 2 * i.n + 1, || format!("solver.n_grid must be >= 2n+1 = {}, got {g}", 2 * i.n + 1))?;
        }
        check(finite_pos(s.eta0), || format!("solver.eta0 must be positive, got {}", s.eta0))?;
        check(s.t_slide >= 1, || "solver.t_slide must be >= 1".into())?;
        if let Some(m) = s.max_spikes {
            check(m >= 1 && m <= s.grid_for(i.n), || format!("solver.max_spikes must be in 1..=n_grid, got {m}"))?;
        }
        check(s.cond_limit > 1.0, || format!("solver.cond_limit must exceed 1, got {}", s.cond_limit))?;
        check(self.seeds >= 1, || "seeds must be >= 1".into())?;

        let w = &self.sweep;
        check(!w.u.is_empty() && w.u.iter().all(|&u| u.is_finite() && u >= 1.0), || {
            "sweep.u must be a non-empty list of values >= 1".into()
        })?;
        check(!w.n_delta.is_empty() && w.n_delta.iter().all(|&d| finite_pos(d)), || {
            "sweep.n_delta must be a non-empty list of positive values".into()
        })?;
        for &v in &w.v {
            check(AmplitudePreset::fig6(v).is_some(), || format!("sweep.v entries must be 0.5, 1 or 1.5, got {v}"))?;
        }
        let k = &self.kernel_table;
        check(!k.alphas.is_empty(), || "kernel_table.alphas must not be empty".into())?;
        for &a in &k.alphas {
            check(KernelOrder::try_from(a).is_ok(), || format!("kernel_table.alphas must be in {{1, 2, 4}}, got {a}"))?;
            check(k.n >= 2 * a as usize, || format!("kernel_table.n must be >= 2 alpha, got {}", k.n))?;
        }
        check(k.points >= 2, || "kernel_table.points must be >= 2".into())?;
        check(self.certify.n.iter().all(|&n| n >= 8), || "certify.n entries must be >= 8".into())?;
        check(self.certify.grid >= 3, || "certify.grid must be >= 3".into())?;
        let a = &self.adversarial;
        check(finite_pos(a.c) && finite_pos(a.l), || "adversarial.c and adversarial.l must be positive".into())?;
        check(finite_pos(a.widened_n_delta), || "adversarial.widened_n_delta must be positive".into())?;
        let p = &self.probe;
        check(p.trials >= 1, || "probe.trials must be >= 1".into())?;
        check(p.p.iter().all(|&x| x > 0.0 && x <= 1.0), || "probe.p entries must be in (0, 1]".into())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadError {
    Io(String),
    Invalid(String),
}
