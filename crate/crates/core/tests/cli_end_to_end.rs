use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sliding_omp::cli::config::{Algorithm, ExperimentConfig};
use sliding_omp::cli::experiments::{summarize, sweep_dyn, sweep_sep, Cell};
use sliding_omp::cli::io::parse_truth;
use sliding_omp::signal::match_frequencies;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sliding-omp"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Data lines of a CSV file, after the `#` block.
fn data(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

const SMALL_SWEEP: &str = r#"
seeds = 3
[instance]
n = 64
s = 3
n_delta = 4.0
[solver]
algorithms = ["omp-a1", "somp-a4"]
[sweep]
u = [1.0, 2.0]
"#;

#[test]
fn synth_then_recover_reproduces_the_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(d, &["synth", "--seed", "7", "--out", "y.csv", "--truth", "truth.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(d, &["recover", "--input", "y.csv", "--amplitude-floor", "1", "--out", "est.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let truth = parse_truth(&std::fs::read_to_string(d.join("truth.csv")).unwrap()).unwrap();
    let rows = data(&d.join("est.csv"));
    assert_eq!(rows[0], "index,omega,re,im");
    let omegas: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(omegas.len(), truth.len());
    let m = match_frequencies(&omegas, &truth).unwrap();
    assert!(m.max_error() < 1e-6, "max error {}", m.max_error());

    assert!(d.join("est.csv.trace.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("est.csv.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rounds"], truth.len());
    assert_eq!(summary["stopped_reason"], "threshold");
}

#[test]
fn csv_outputs_carry_metadata_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(d, &["synth", "--out", "y.csv"]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(d.join("y.csv")).unwrap();
    let head: Vec<&str> = text.lines().take(5).collect();
    assert!(head[0].starts_with("# sliding-omp "));
    assert!(head[1].starts_with("# command: synth"));
    assert!(head[2].starts_with("# config-sha256: "));
    assert_eq!(head[3], "# seeds: 0");
    assert_eq!(head[4], "ell,re,im,observed");
}

#[test]
fn missing_column_names_the_column() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "bad.csv", "ell,re,observed\n-1,0,1\n0,1,1\n1,0,1\n");
    let o = run(d, &["recover", "--input", "bad.csv", "--gamma", "0.1"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("missing column `im`"), "{}", stderr(&o));
}

#[test]
fn asymmetric_mask_cites_the_symmetry_rule() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "asym.csv", "ell,re,im,observed\n-2,0,0,1\n-1,0,0,1\n0,1,0,1\n1,0,0,1\n2,0,0,0\n");
    let o = run(d, &["recover", "--input", "asym.csv", "--gamma", "0.1"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("symmetric"), "{}", stderr(&o));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(d, &["synth", "--out", "y.csv"]);
    assert_eq!(code(&o), 0);

    // no threshold given
    assert_eq!(code(&run(d, &["recover", "--input", "y.csv"])), 2);
    // unknown config key
    write(d, "bad.toml", "seeds = 2\nbogus = 1\n");
    assert_eq!(code(&run(d, &["certify", "--config", "bad.toml"])), 2);
    // unsupported alpha
    assert_eq!(code(&run(d, &["kernel-table", "--alpha", "3"])), 2);
    // missing input file
    assert_eq!(code(&run(d, &["recover", "--input", "nope.csv", "--gamma", "0.1"])), 3);
    // unwritable output
    assert_eq!(code(&run(d, &["synth", "--out", "no/such/dir/y.csv"])), 3);
    // strict with a failing run
    write(d, "hard.toml", "seeds = 1\n[solver]\nalgorithms = [\"omp-a1\"]\n[sweep]\nu = [8.0]\n");
    let o = run(d, &["sweep-dyn", "--config", "hard.toml", "--strict", "--out", "s.csv"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(d.join("s.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "small.toml", SMALL_SWEEP);
    for (cmd, extra) in [("sweep-dyn", vec![]), ("synth", vec!["--seed", "11"]), ("probe-concentration", vec![])] {
        let mut outputs = Vec::new();
        for k in 0..2 {
            let name = format!("{cmd}-{k}.csv");
            let mut args = vec![cmd, "--out", name.as_str()];
            if cmd == "sweep-dyn" {
                args.extend(["--config", "small.toml"]);
            }
            args.extend(extra.iter().copied());
            let o = run(d, &args);
            assert_eq!(code(&o), 0, "{cmd}: {}", stderr(&o));
            outputs.push(std::fs::read(d.join(&name)).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{cmd} output differs between runs");
    }
}

#[test]
fn sweep_dyn_emits_one_row_per_cell_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "small.toml", SMALL_SWEEP);
    let o = run(d, &["sweep-dyn", "--config", "small.toml", "--out", "s.csv", "--timing"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = data(&d.join("s.csv"));
    assert_eq!(rows[0], "u,seed,algorithm,max_error,recovered,rounds,stop,wall_ms");
    assert_eq!(rows.len() - 1, 2 * 3 * 2);
    for r in &rows[1..] {
        let f: Vec<&str> = r.split(',').collect();
        let err: f64 = f[3].parse().unwrap();
        assert_eq!(f[4] == "true", err < 1e-4, "{r}");
    }
}

#[test]
fn kernel_table_peaks_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "k.toml", "[kernel_table]\nn = 100\nalphas = [1, 2, 4]\npoints = 201\n");
    let o = run(d, &["kernel-table", "--config", "k.toml", "--out", "k.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = data(&d.join("k.csv"));
    assert_eq!(rows.len(), 202);
    let cols = rows[0].split(',').count();
    assert_eq!(cols, 4, "{}", rows[0]);
    let peak = rows[1..]
        .iter()
        .find(|r| r.split(',').next().unwrap().parse::<f64>().unwrap() == 0.0)
        .expect("t = 0 is sampled");
    for v in peak.split(',').skip(1) {
        assert!((v.parse::<f64>().unwrap() - 1.0).abs() < 1e-12, "{peak}");
    }
    // t = 5/n: the squared Fejer column sits below the Dirichlet one
    let row: Vec<f64> = rows[1..]
        .iter()
        .map(|r| r.split(',').map(|v| v.parse().unwrap()).collect::<Vec<f64>>())
        .min_by(|a, b| (a[0] - 0.05).abs().total_cmp(&(b[0] - 0.05).abs()))
        .unwrap();
    assert!((row[0] - 0.05).abs() < 1e-12);
    assert!(row[3].abs() < row[1].abs(), "{row:?}");
}

#[test]
fn certify_and_adversarial_pass_in_strict_mode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(d, &["certify", "--strict", "--out", "c.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(data(&d.join("c.csv"))[1..].iter().all(|r| r.ends_with(",true")));
    let o = run(d, &["adversarial", "--strict", "--out", "a.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(data(&d.join("a.csv")).len(), 3);
}

fn dyn_config(algorithms: &[&str], u: &[f64]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.solver.algorithms = algorithms.iter().map(|a| a.parse().unwrap()).collect();
    cfg.sweep.u = u.to_vec();
    cfg
}

#[test]
fn small_dynamic_range_is_recovered_by_sliding_on_every_seed() {
    let rows = sweep_dyn(&dyn_config(&["somp-a4"], &[1.0])).unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.recovered), "{rows:?}");
}

#[test]
fn large_dynamic_range_defeats_plain_omp_on_most_seeds() {
    let rows = sweep_dyn(&dyn_config(&["omp-a1"], &[8.0])).unwrap();
    assert!(rows.iter().filter(|r| !r.recovered).count() > 5);
}

fn sep_cells(algorithms: &[&str], n_delta: &[f64], v: &[f64]) -> Vec<Cell> {
    let mut cfg = ExperimentConfig::default();
    cfg.solver.algorithms = algorithms.iter().map(|a| a.parse().unwrap()).collect();
    cfg.sweep.n_delta = n_delta.to_vec();
    cfg.sweep.v = v.to_vec();
    summarize(&sweep_sep(&cfg).unwrap())
}

#[test]
fn wide_separation_is_easy_for_sliding() {
    let cells = sep_cells(&["somp-a1", "somp-a2", "somp-a4"], &[20.0], &[0.5, 1.0, 1.5]);
    assert_eq!(cells.len(), 9);
    for c in &cells {
        assert_eq!(c.trials, 10);
        assert_eq!(c.failures, 0, "{c:?}");
    }
}

#[test]
fn sliding_transitions_before_plain_omp_at_large_dynamic_range() {
    let grid: Vec<f64> = ExperimentConfig::default().sweep.n_delta;
    let cells = sep_cells(&["omp-a1", "somp-a1", "somp-a4"], &grid, &[1.5]);
    assert_eq!(cells.len(), 3 * grid.len());
    assert!(cells.iter().all(|c| c.failure_probability().is_finite()));
    // first column from which every larger separation recovers on all seeds
    let transition = |algo: &str| {
        let algo: Algorithm = algo.parse().unwrap();
        let fails: Vec<usize> = grid
            .iter()
            .map(|&nd| cells.iter().find(|c| c.algorithm == algo && c.coords[1] == nd).unwrap().failures)
            .collect();
        (0..=grid.len()).find(|&k| fails[k..].iter().all(|&f| f == 0)).unwrap()
    };
    let omp = transition("omp-a1");
    let d = transition("somp-a1");
    let sf = transition("somp-a4");
    assert!(sf < omp && d < omp, "omp {omp}, D-SOMP {d}, SF-SOMP {sf}");
    // measured: the squared Fejer run settles one column after the Dirichlet one
    assert!(sf <= d + 1, "D-SOMP {d}, SF-SOMP {sf}");
}
