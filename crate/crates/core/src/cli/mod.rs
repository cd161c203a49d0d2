//! Command-line front end: configuration, experiment orchestration and CSV
//! emission.

pub mod config;
pub mod experiments;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use self::config::{Algorithm, ExperimentConfig, LoadError, Mode};
use self::experiments::{ExperimentError, SweepRow};
use self::io::{emit, fmt_f64, render_csv, InputError, Metadata};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RECOVERY_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sliding-omp", version, about = "Spectral super-resolution by gridded and sliding OMP")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// First seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long, global = true)]
    pub seeds: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Algorithms, comma separated: omp-a{1,2,4}, somp-a{1,2,4}.
    #[arg(long, global = true, value_delimiter = ',')]
    pub algo: Vec<Algorithm>,
    /// Restrict to one kernel order.
    #[arg(long, global = true, value_parser = parse_alpha)]
    pub alpha: Option<u32>,
    /// Explicit stopping threshold.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Observe exactly round(p (2n+1)) indices instead of Bernoulli(p).
    #[arg(long, global = true)]
    pub exact_count_mask: bool,
    /// Exit with status 1 when any recovery or check fails.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Add a wall-time column (makes output non-reproducible).
    #[arg(long, global = true)]
    pub timing: bool,
}

fn parse_alpha(s: &str) -> Result<u32, String> {
    match s {
        "1" | "2" | "4" => Ok(s.parse().expect("digit")),
        _ => Err(format!("alpha must be 1, 2 or 4, got {s:?}")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a sample file (and optionally its ground truth).
    Synth {
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Recover frequencies from a sample file.
    Recover {
        #[arg(long)]
        input: PathBuf,
        /// Smallest amplitude expected; sets gamma when --gamma is absent.
        #[arg(long)]
        amplitude_floor: Option<f64>,
    },
    /// Failure rate against the dynamic-range knob u.
    SweepDyn,
    /// Failure probability over separation and amplitude spread.
    #[command(alias = "sweep-separation")]
    SweepSep,
    /// Sampled kernels for every configured order.
    KernelTable,
    /// Envelope certificates of the squared Fejer kernel.
    Certify,
    /// Plain OMP on an adversarial three-spike instance.
    Adversarial,
    /// Monte-Carlo deviation of masked kernels.
    ProbeConcentration,
}

impl Command {
    fn mode(&self) -> Mode {
        match self {
            Command::Synth { .. } => Mode::Synth,
            Command::Recover { .. } => Mode::Recover,
            Command::SweepDyn => Mode::SweepDyn,
            Command::SweepSep => Mode::SweepSep,
            Command::KernelTable => Mode::KernelTable,
            Command::Certify => Mode::Certify,
            Command::Adversarial => Mode::Adversarial,
            Command::ProbeConcentration => Mode::ProbeConcentration,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Input(String, InputError),
    Run(String),
    /// Output was written, but a recovery or check failed under `--strict`.
    Strict(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) | CliError::Input(..) => EXIT_IO,
            CliError::Run(_) | CliError::Strict(_) => EXIT_RECOVERY_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Input(path, e) => write!(f, "{path}: {e}"),
            CliError::Run(m) => write!(f, "run failed: {m}"),
            CliError::Strict(m) => write!(f, "strict check failed: {m}"),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Run(e.0)
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("sliding-omp: {e}");
            e.exit_code()
        }
    }
}

/// Loads the config file and applies command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            LoadError::Io(m) => CliError::Io(m),
            LoadError::Invalid(m) => CliError::Config(m),
        })?,
        None => ExperimentConfig::default(),
    };
    let mode = cli.command.mode();
    if let Some(m) = cfg.mode {
        if m != mode {
            return Err(CliError::Config(format!(
                "config declares mode {} but the command is {}",
                m.as_str(),
                mode.as_str()
            )));
        }
    }
    cfg.mode = Some(mode);
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(k) = c.seeds {
        cfg.seeds = k;
    }
    if c.gamma.is_some() {
        cfg.solver.gamma = c.gamma;
    }
    if c.exact_count_mask {
        cfg.instance.exact_count = true;
    }
    if !c.algo.is_empty() {
        cfg.solver.algorithms = c.algo.clone();
    }
    if let Some(a) = c.alpha {
        cfg.solver.algorithms.retain(|x| x.alpha == a);
        cfg.kernel_table.alphas = vec![a];
        if cfg.solver.algorithms.is_empty() {
            return Err(CliError::Config(format!("no configured algorithm uses alpha = {a}")));
        }
    }
    if let Command::Recover {
        amplitude_floor: Some(f),
        ..
    } = &cli.command
    {
        cfg.solver.amplitude_floor = Some(*f);
    }
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

fn out_path<'a>(cli: &'a Cli, cfg: &'a ExperimentConfig) -> Option<&'a Path> {
    cli.common.out.as_deref().or(cfg.output.as_deref().map(Path::new))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    emit(path, bytes).map_err(|e| {
        CliError::Io(match path {
            Some(p) => format!("{}: {e}", p.display()),
            None => format!("stdout: {e}"),
        })
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    let out = out_path(cli, &cfg);
    let timing = cli.common.timing;
    let strict = cli.common.strict;
    let seeds = cfg.seed_list();
    let meta = |cmd: &str, seeds: &[u64]| Metadata::new(cmd, &cfg, seeds);

    match &cli.command {
        Command::Synth { truth } => {
            let train = experiments::make_instance(&cfg.instance, cfg.seed)?;
            let mask = experiments::make_mask(&cfg.instance, cfg.seed)?;
            let full = train.synthesize(cfg.instance.n).map_err(|e| CliError::Run(e.to_string()))?;
            let y = crate::signal::apply_mask(&full, &mask).map_err(|e| CliError::Run(e.to_string()))?;
            let m = meta("synth", &[cfg.seed]);
            write_out(out, &render_csv(&m, &io::SAMPLE_COLUMNS, &io::sample_rows(&y, &mask)))?;
            if let Some(t) = truth {
                write_out(Some(t), &render_csv(&m, &io::TRUTH_COLUMNS, &io::truth_rows(&train)))?;
            }
            Ok(())
        }
        Command::Recover { input, .. } => recover(cli, &cfg, input, out),
        Command::SweepDyn => {
            let rows = experiments::sweep_dyn(&cfg)?;
            let header = ["u", "seed", "algorithm", "max_error", "recovered", "rounds", "stop"];
            emit_rows(out, &meta("sweep-dyn", &seeds), &header, &rows, timing)?;
            strict_rows(strict, &rows)
        }
        Command::SweepSep => {
            let rows = experiments::sweep_sep(&cfg)?;
            let cells = experiments::summarize(&rows);
            let header = ["v", "n_delta", "algorithm", "trials", "failures", "failure_probability"];
            let body: Vec<Vec<String>> = cells
                .iter()
                .map(|c| {
                    vec![
                        fmt_f64(c.coords[0]),
                        fmt_f64(c.coords[1]),
                        c.algorithm.to_string(),
                        c.trials.to_string(),
                        c.failures.to_string(),
                        fmt_f64(c.failure_probability()),
                    ]
                })
                .collect();
            write_out(out, &render_csv(&meta("sweep-sep", &seeds), &header, &body))?;
            strict_rows(strict, &rows)
        }
        Command::KernelTable => {
            let k = &cfg.kernel_table;
            let rows = experiments::kernel_table(k.n, &k.alphas, k.points)?;
            let mut header = vec!["t".to_string()];
            header.extend(k.alphas.iter().map(|a| format!("alpha{a}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|(t, v)| std::iter::once(fmt_f64(*t)).chain(v.iter().map(|x| fmt_f64(*x))).collect())
                .collect();
            write_out(out, &render_csv(&meta("kernel-table", &[]), &header, &body))
        }
        Command::Certify => {
            let reports = experiments::certify(&cfg.certify.n, cfg.certify.grid)?;
            let header = ["n", "check", "range", "worst_margin", "points", "pass"];
            let mut body = Vec::new();
            for r in &reports {
                for c in &r.checks {
                    body.push(vec![
                        r.n.to_string(),
                        c.id.to_string(),
                        c.range.to_string(),
                        fmt_f64(c.worst_margin),
                        c.points.to_string(),
                        c.pass.to_string(),
                    ]);
                }
            }
            write_out(out, &render_csv(&meta("certify", &[]), &header, &body))?;
            let failed: Vec<String> = reports
                .iter()
                .flat_map(|r| r.checks.iter().filter(|c| !c.pass).map(move |c| format!("n={} {}", r.n, c.id)))
                .collect();
            if strict && !failed.is_empty() {
                return Err(CliError::Strict(failed.join(", ")));
            }
            Ok(())
        }
        Command::Adversarial => {
            let r = experiments::adversarial(&cfg)?;
            let header = ["variant", "algorithm", "n", "n_delta", "c", "l", "error", "threshold", "pass"];
            let cell = 1.0 / (2 * r.instance.n + 4) as f64;
            let body = vec![
                vec![
                    "base".into(),
                    "omp-a1".into(),
                    r.instance.n.to_string(),
                    r.instance.ell1.to_string(),
                    fmt_f64(r.instance.c),
                    fmt_f64(r.instance.l),
                    fmt_f64(r.omp_tau3_error),
                    fmt_f64(cell),
                    r.omp_fails().to_string(),
                ],
                vec![
                    "widened".into(),
                    "somp-a4".into(),
                    r.instance.n.to_string(),
                    fmt_f64(cfg.adversarial.widened_n_delta),
                    fmt_f64(r.instance.c),
                    fmt_f64(r.instance.l),
                    fmt_f64(r.widened_max_error),
                    fmt_f64(config::RECOVERY_TOLERANCE),
                    r.widened_recovered.to_string(),
                ],
            ];
            write_out(out, &render_csv(&meta("adversarial", &[]), &header, &body))?;
            if strict && !(r.omp_fails() && r.widened_recovered) {
                return Err(CliError::Strict("adversarial expectations not met".into()));
            }
            Ok(())
        }
        Command::ProbeConcentration => {
            let reports = experiments::probe(&cfg)?;
            let header = ["probe", "n", "p", "seed", "q", "deviation", "ratio"];
            let mut body = Vec::new();
            for r in &reports {
                for t in &r.trials {
                    for q in 0..3 {
                        body.push(vec![
                            "uniform-concentration".into(),
                            r.n.to_string(),
                            fmt_f64(r.p),
                            t.seed.to_string(),
                            q.to_string(),
                            fmt_f64(t.deviation[q]),
                            fmt_f64(t.ratio[q]),
                        ]);
                    }
                }
            }
            let probe_seeds: Vec<u64> = (0..cfg.probe.trials as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
            write_out(out, &render_csv(&meta("probe-concentration", &probe_seeds), &header, &body))
        }
    }
}

fn emit_rows(
    out: Option<&Path>,
    meta: &Metadata,
    header: &[&str],
    rows: &[SweepRow],
    timing: bool,
) -> Result<(), CliError> {
    let mut header: Vec<&str> = header.to_vec();
    if timing {
        header.push("wall_ms");
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v: Vec<String> = r.coords.iter().map(|c| fmt_f64(*c)).collect();
            v.extend([
                r.seed.to_string(),
                r.algorithm.to_string(),
                fmt_f64(r.max_error),
                r.recovered.to_string(),
                r.rounds.to_string(),
                r.stop.clone(),
            ]);
            if timing {
                v.push(format!("{:.3}", r.wall_ms));
            }
            v
        })
        .collect();
    write_out(out, &render_csv(meta, &header, &body))
}

fn strict_rows(strict: bool, rows: &[SweepRow]) -> Result<(), CliError> {
    let failed = rows.iter().filter(|r| !r.recovered).count();
    if strict && failed > 0 {
        return Err(CliError::Strict(format!("{failed} of {} runs did not recover", rows.len())));
    }
    Ok(())
}

#[derive(Serialize)]
struct RecoverSummary<'a> {
    input: String,
    algorithm: String,
    n: usize,
    observed: usize,
    gamma: f64,
    n_grid: usize,
    rounds: usize,
    stopped_reason: &'a str,
    residual_norm: f64,
    final_correlation: f64,
    omegas: &'a [f64],
    coeffs: Vec<[f64; 2]>,
}

fn recover(cli: &Cli, cfg: &ExperimentConfig, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input).map_err(|e| CliError::Io(format!("{}: {e}", input.display())))?;
    let (y, mask) = io::parse_samples(&text).map_err(|e| CliError::Input(input.display().to_string(), e))?;
    let algo = match cli.common.algo.first() {
        Some(a) => *a,
        None => Algorithm {
            sliding: true,
            alpha: cli.common.alpha.unwrap_or(4),
        },
    };
    let floor = match (cfg.solver.gamma, cfg.solver.amplitude_floor) {
        (Some(_), _) => 1.0,
        (None, Some(f)) => f,
        (None, None) => {
            return Err(CliError::Config(
                "recover needs --gamma or --amplitude-floor (or solver.gamma / solver.amplitude_floor)".into(),
            ))
        }
    };
    let n = y.n();
    let mut settings = cfg.solver.clone();
    if settings.n_grid.is_none() {
        settings.n_grid = Some(settings.grid_for(n));
    }
    if settings.max_spikes.is_none() {
        settings.max_spikes = Some((2 * n + 1).min(settings.grid_for(n)));
    }
    let scfg = experiments::solver_config(&settings, n, 1, algo.order(), &mask, floor).map_err(|e| CliError::Config(e.0))?;
    let res = experiments::run_algorithm(algo, &y, &mask, &scfg).map_err(|f| CliError::Run(f.to_string()))?;

    let meta = Metadata::new("recover", cfg, &[]);
    let est: Vec<Vec<String>> = res
        .omegas
        .iter()
        .zip(&res.coeffs)
        .enumerate()
        .map(|(i, (w, c))| vec![i.to_string(), fmt_f64(*w), fmt_f64(c.re), fmt_f64(c.im)])
        .collect();
    write_out(out, &render_csv(&meta, &["index", "omega", "re", "im"], &est))?;

    let summary = RecoverSummary {
        input: input.display().to_string(),
        algorithm: algo.to_string(),
        n,
        observed: mask.count(),
        gamma: scfg.gamma,
        n_grid: scfg.n_grid,
        rounds: res.trace.len(),
        stopped_reason: res.stopped_reason.as_str(),
        residual_norm: res.residual.norm(),
        final_correlation: res.trace.final_correlation,
        omegas: &res.omegas,
        coeffs: res.coeffs.iter().map(|c| [c.re, c.im]).collect(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    match out {
        Some(p) => {
            let trace: Vec<Vec<String>> = res
                .trace
                .rounds
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    let join = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ");
                    vec![
                        (k + 1).to_string(),
                        r.grid_index.to_string(),
                        fmt_f64(r.grid_frequency),
                        fmt_f64(r.correlation),
                        join(&r.pre_slide),
                        join(&r.omegas),
                        fmt_f64(r.residual_norm),
                        r.slide_steps.to_string(),
                        r.slide_fallback.to_string(),
                    ]
                })
                .collect();
            let header = [
                "round",
                "grid_index",
                "grid_frequency",
                "correlation",
                "pre_slide",
                "omegas",
                "residual_norm",
                "slide_steps",
                "slide_fallback",
            ];
            write_out(Some(&sibling(p, ".trace.csv")), &render_csv(&meta, &header, &trace))?;
            write_out(Some(&sibling(p, ".summary.json")), json.as_bytes())?;
        }
        None => eprint!("{json}"),
    }
    if cli.common.strict && res.stopped_reason != crate::solver::StopReason::Threshold {
        return Err(CliError::Strict(format!("stopped by {}", res.stopped_reason)));
    }
    Ok(())
}
