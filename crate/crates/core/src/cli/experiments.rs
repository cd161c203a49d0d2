use std::f64::consts::TAU;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{
    Algorithm, AmplitudePreset, ExperimentConfig, InstanceConfig, Placement, SolverSettings, RECOVERY_TOLERANCE,
};
use crate::kernels::{certify_envelopes, EnvelopeReport, KernelOrder, Preconditioner};
use crate::oracle::{adversarial_instance, concentration_probe, AdversarialInstance, ConcentrationReport};
use crate::signal::{match_frequencies, wrap_distance, ObservationMask, SampleVector, SpikeTrain};
use crate::solver::{gamma_from_amplitude_floor, omp, sliding_omp, Dictionary, RecoveryResult, SolverConfig};

/// Mixed into the run seed so masks and amplitudes use unrelated streams.
const MASK_SALT: u64 = 0x6d61_736b_5eed_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentError(pub String);

impl std::fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ExperimentError {}

fn err(e: impl ToString) -> ExperimentError {
    ExperimentError(e.to_string())
}

fn magnitudes(preset: AmplitudePreset, s: usize, u: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match preset {
        AmplitudePreset::Fig4 => {
            let pattern = [1.0, u, f64::max(u / 2.0, 1.0), 1.0, u];
            (0..s).map(|i| pattern[i % pattern.len()]).collect()
        }
        AmplitudePreset::Unit => vec![1.0; s],
        p => {
            let v = p.v().expect("fig6 preset");
            (0..s).map(|_| 1.0 + 10f64.powf(rng.gen_range(0.0..=v))).collect()
        }
    }
}

/// Spike train for one seed. Magnitudes (if random) are drawn first, then
/// phases, then (for random placement) the frequencies.
pub fn make_instance(inst: &InstanceConfig, seed: u64) -> Result<SpikeTrain, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = inst.n as f64;
    let delta = inst.n_delta / n;
    if inst.s as f64 * inst.n_delta >= n {
        return Err(err(format!(
            "{} spikes {} / n apart do not fit on the circle for n = {}",
            inst.s, inst.n_delta, inst.n
        )));
    }
    let mags = magnitudes(inst.amplitudes, inst.s, inst.u, &mut rng);
    let amps: Vec<Complex64> = mags
        .iter()
        .map(|&m| Complex64::from_polar(m, rng.gen_range(0.0..TAU)))
        .collect();
    let taus = match inst.placement {
        Placement::Ladder => (1..=inst.s).map(|i| (1 + i) as f64 * delta).collect(),
        Placement::Random => {
            let mut taus: Vec<f64> = Vec::with_capacity(inst.s);
            let mut tries = 0;
            while taus.len() < inst.s {
                tries += 1;
                if tries > 100_000 {
                    return Err(err("could not place random spikes at the requested separation"));
                }
                let t: f64 = rng.gen_range(0.0..1.0);
                if taus.iter().all(|&x| wrap_distance(x, t) >= delta) {
                    taus.push(t);
                }
            }
            taus
        }
    };
    SpikeTrain::new(taus, amps).map_err(err)
}

pub fn make_mask(inst: &InstanceConfig, seed: u64) -> Result<ObservationMask, ExperimentError> {
    let ms = seed ^ MASK_SALT;
    if inst.exact_count || inst.measurements.is_some() {
        ObservationMask::exact_count(inst.n, inst.measurement_count(), ms).map_err(err)
    } else if inst.p >= 1.0 {
        Ok(ObservationMask::full(inst.n))
    } else {
        ObservationMask::bernoulli_symmetric(inst.n, inst.p, ms).map_err(err)
    }
}

/// Solver configuration for one algorithm on one mask.
pub fn solver_config(
    settings: &SolverSettings,
    n: usize,
    s: usize,
    order: KernelOrder,
    mask: &ObservationMask,
    floor: f64,
) -> Result<SolverConfig, ExperimentError> {
    let pc = Preconditioner::build(order, n).map_err(err)?;
    let gamma = match settings.gamma {
        Some(g) => g,
        None => {
            let dict = Dictionary::new(&pc, mask).map_err(err)?;
            gamma_from_amplitude_floor(floor, settings.gamma_fraction, &dict)
        }
    };
    let n_grid = settings.grid_for(n);
    let mut cfg = SolverConfig::new(pc, gamma, n_grid);
    cfg.eta0 = settings.eta0;
    cfg.t_slide = settings.t_slide;
    cfg.cond_limit = settings.cond_limit;
    cfg.max_spikes = settings.max_spikes.unwrap_or(2 * s).min(n_grid);
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

pub fn run_algorithm(
    algo: Algorithm,
    y: &SampleVector,
    mask: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<RecoveryResult, crate::solver::SolverFailure> {
    if algo.sliding {
        sliding_omp(y, mask, cfg)
    } else {
        omp(y, mask, cfg)
    }
}

/// Largest matched error and the recovery verdict.
///
/// With more estimates than spikes the error is the largest distance from a
/// spike to its nearest estimate; such runs never count as recovered.
pub fn evaluate(omegas: &[f64], truth: &SpikeTrain) -> (f64, bool) {
    if omegas.is_empty() {
        return (f64::INFINITY, false);
    }
    let max_error = if omegas.len() <= truth.len() {
        match_frequencies(omegas, truth).map(|m| m.max_error()).unwrap_or(f64::INFINITY)
    } else {
        truth
            .taus()
            .iter()
            .map(|&t| omegas.iter().map(|&w| wrap_distance(w, t)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    (max_error, omegas.len() == truth.len() && max_error < RECOVERY_TOLERANCE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Sweep coordinates, e.g. `[u]` or `[v, n_delta]`.
    pub coords: Vec<f64>,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub max_error: f64,
    pub recovered: bool,
    pub rounds: usize,
    pub stop: String,
    pub wall_ms: f64,
}

struct Job {
    coords: Vec<f64>,
    inst: InstanceConfig,
    seed: u64,
}

fn run_jobs(cfg: &ExperimentConfig, jobs: Vec<Job>) -> Result<Vec<SweepRow>, ExperimentError> {
    let algos = &cfg.solver.algorithms;
    let per_job: Vec<Result<Vec<SweepRow>, ExperimentError>> = jobs
        .par_iter()
        .map(|job| {
            let truth = make_instance(&job.inst, job.seed)?;
            let mask = make_mask(&job.inst, job.seed)?;
            let y = truth.synthesize(job.inst.n).map_err(err)?;
            let floor = cfg.solver.amplitude_floor.unwrap_or(job.inst.amplitudes.floor());
            algos
                .iter()
                .map(|&algo| {
                    let scfg = solver_config(&cfg.solver, job.inst.n, job.inst.s, algo.order(), &mask, floor)?;
                    let start = Instant::now();
                    let res = run_algorithm(algo, &y, &mask, &scfg);
                    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                    let (max_error, recovered, rounds, stop) = match res {
                        Ok(r) => {
                            let (e, ok) = evaluate(&r.omegas, &truth);
                            (e, ok, r.trace.len(), r.stopped_reason.to_string())
                        }
                        Err(f) => (f64::INFINITY, false, f.trace.len(), "error".to_string()),
                    };
                    Ok(SweepRow {
                        coords: job.coords.clone(),
                        seed: job.seed,
                        algorithm: algo,
                        max_error,
                        recovered,
                        rounds,
                        stop,
                        wall_ms,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_job {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Dynamic-range sweep: every `u` in `cfg.sweep.u`, every seed, every algorithm.
pub fn sweep_dyn(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, ExperimentError> {
    let mut jobs = Vec::new();
    for &u in &cfg.sweep.u {
        for seed in cfg.seed_list() {
            let mut inst = cfg.instance.clone();
            inst.u = u;
            jobs.push(Job {
                coords: vec![u],
                inst,
                seed,
            });
        }
    }
    run_jobs(cfg, jobs)
}

/// Separation sweep over `cfg.sweep.v` and `cfg.sweep.n_delta` with the
/// matching `fig6` amplitude preset.
pub fn sweep_sep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, ExperimentError> {
    let mut jobs = Vec::new();
    for &v in &cfg.sweep.v {
        for &nd in &cfg.sweep.n_delta {
            for seed in cfg.seed_list() {
                let mut inst = cfg.instance.clone();
                inst.amplitudes = AmplitudePreset::fig6(v).ok_or_else(|| err(format!("no preset for v = {v}")))?;
                inst.n_delta = nd;
                jobs.push(Job {
                    coords: vec![v, nd],
                    inst,
                    seed,
                });
            }
        }
    }
    run_jobs(cfg, jobs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub coords: Vec<f64>,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub failures: usize,
}

impl Cell {
    pub fn failure_probability(&self) -> f64 {
        self.failures as f64 / self.trials as f64
    }
}

/// Groups rows by coordinates and algorithm, keeping first-seen order.
pub fn summarize(rows: &[SweepRow]) -> Vec<Cell> {
    let mut cells: Vec<Cell> = Vec::new();
    for r in rows {
        match cells.iter_mut().find(|c| c.coords == r.coords && c.algorithm == r.algorithm) {
            Some(c) => {
                c.trials += 1;
                c.failures += usize::from(!r.recovered);
            }
            None => cells.push(Cell {
                coords: r.coords.clone(),
                algorithm: r.algorithm,
                trials: 1,
                failures: usize::from(!r.recovered),
            }),
        }
    }
    cells
}

/// Kernel values on `points` samples of `[-1/2, 1/2]`: one row per `t`,
/// one column per order.
pub fn kernel_table(n: usize, alphas: &[u32], points: usize) -> Result<Vec<(f64, Vec<f64>)>, ExperimentError> {
    let pcs: Vec<Preconditioner> = alphas
        .iter()
        .map(|&a| {
            let order = KernelOrder::try_from(a).map_err(err)?;
            Preconditioner::build(order, n).map_err(err)
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(points);
    for k in 0..points {
        let t = -0.5 + k as f64 / (points - 1) as f64;
        let vals = pcs
            .iter()
            .map(|pc| pc.eval(t).map(|e| e.value).map_err(err))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((t, vals));
    }
    Ok(rows)
}

pub fn certify(ns: &[usize], grid: usize) -> Result<Vec<EnvelopeReport>, ExperimentError> {
    ns.iter().map(|&n| certify_envelopes(n, grid).map_err(err)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialReport {
    pub instance: AdversarialInstance,
    /// Error of plain OMP's estimate matched to the weakest spike.
    pub omp_tau3_error: f64,
    pub omp_omegas: Vec<f64>,
    pub widened: SpikeTrain,
    pub widened_max_error: f64,
    pub widened_recovered: bool,
}

impl AdversarialReport {
    /// Plain OMP leaves the localisation cell `1 / (2n + 4)` of the weakest spike.
    pub fn omp_fails(&self) -> bool {
        self.omp_tau3_error > 1.0 / (2 * self.instance.n + 4) as f64
    }
}

/// Plain Dirichlet-kernel OMP with three rounds on the adversarial instance,
/// and squared Fejer sliding OMP on its widened variant. Full masks.
pub fn adversarial(cfg: &ExperimentConfig) -> Result<AdversarialReport, ExperimentError> {
    let a = &cfg.adversarial;
    let instance = adversarial_instance(a.c, a.l, a.n).map_err(err)?;
    let mask = ObservationMask::full(a.n);
    let mut settings = cfg.solver.clone();
    settings.gamma = Some(0.0);
    settings.max_spikes = Some(3);
    let y = instance.train.synthesize(a.n).map_err(err)?;
    let ocfg = solver_config(&settings, a.n, 3, KernelOrder::Dirichlet, &mask, 1.0)?;
    let out = omp(&y, &mask, &ocfg).map_err(err)?;
    let omp_tau3_error = match_frequencies(&out.omegas, &instance.train)
        .ok()
        .and_then(|m| m.error_for_truth(2))
        .unwrap_or(f64::INFINITY);

    let widened = instance.widened(a.widened_n_delta).map_err(err)?;
    let mut settings = cfg.solver.clone();
    settings.gamma = None;
    settings.max_spikes = Some(6);
    let scfg = solver_config(
        &settings,
        a.n,
        3,
        KernelOrder::SquaredFejer,
        &mask,
        widened.min_amplitude(),
    )?;
    let yw = widened.synthesize(a.n).map_err(err)?;
    let res = sliding_omp(&yw, &mask, &scfg).map_err(err)?;
    let (widened_max_error, widened_recovered) = evaluate(&res.omegas, &widened);
    Ok(AdversarialReport {
        instance,
        omp_tau3_error,
        omp_omegas: out.omegas,
        widened,
        widened_max_error,
        widened_recovered,
    })
}

pub fn probe(cfg: &ExperimentConfig) -> Result<Vec<ConcentrationReport>, ExperimentError> {
    cfg.probe
        .p
        .iter()
        .map(|&p| concentration_probe(cfg.probe.n, p, cfg.probe.trials, cfg.seed).map_err(err))
        .collect()
}
