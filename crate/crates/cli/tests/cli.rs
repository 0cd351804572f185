use std::fs;
use std::path::Path;
use std::process::Command;

use mfrc_cli::{build_experiment, parse_config, run_header, stats_summary, RunConfig};
use mfrc_core::experiments::{
    exp1_csv, linear_grid, rank_sum_test, read_exp1_counts, run_experiment1, run_sweep, sweep_csv, Model,
};

const SMALL: &str = r#"
n = 30
tau = 0.02
t_listen = 12.566370614359172
t_train = 25.132741228718345
t_end = 43.982297150257104
transient_skip = 6.283185307179586
sparsity = 0.1
base_seed = 99
exp1_sets = 2
exp1_trials = 3
sweep_gamma_start = 5.0
sweep_gamma_end = 15.0
sweep_gamma_step = 10.0
sweep_rho_start = 0.5
sweep_rho_end = 1.0
sweep_rho_step = 0.5
sweep_trials = 2
"#;

fn mfrc(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mfrc"))
        .args(args)
        .env("MFRC_OUTPUT_DIR", dir.join("out"))
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn setup() -> (tempfile::TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let mut cfg = parse_config(SMALL).unwrap();
    cfg.output_dir = dir.path().join("out");
    (dir, cfg)
}

#[test]
fn trial_prints_and_appends_a_row() {
    let (dir, _) = setup();
    for _ in 0..2 {
        let out = mfrc(dir.path(), &["--config", "small.toml", "trial", "--model", "errc", "--seed", "7"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert!(stdout.lines().nth(1).unwrap().starts_with("0,7,errc,1.4,5,"), "{stdout}");
    }
    let file = fs::read_to_string(dir.path().join("out/trials.csv")).unwrap();
    let lines: Vec<&str> = file.lines().collect();
    assert!(lines[0].starts_with("# config_hash="));
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[2], lines[3]);
}

#[test]
fn sweep_file_matches_direct_module_call() {
    let (dir, cfg) = setup();
    let out = mfrc(dir.path(), &["--config", "small.toml", "sweep", "--model", "ffrc"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let from_cli = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();

    let exp = build_experiment(&cfg, Model::Ffrc).unwrap();
    let gammas = linear_grid(5.0, 15.0, 10.0).unwrap();
    let rhos = linear_grid(0.5, 1.0, 0.5).unwrap();
    let cells = run_sweep(&exp, &gammas, &rhos, 2, None, &|_| {}).unwrap();
    assert_eq!(from_cli, sweep_csv(&run_header(&cfg), &cells));

    // Rerunning resumes every cell from the manifest.
    let again = mfrc(dir.path(), &["--config", "small.toml", "sweep", "--model", "ffrc"]);
    assert_eq!(again.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&again.stderr).contains("sweep ffrc gamma"));
    assert_eq!(fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap(), from_cli);
}

#[test]
fn exp1_then_stats_matches_module_calls() {
    let (dir, cfg) = setup();
    let out = mfrc(dir.path(), &["--config", "small.toml", "exp1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let header = run_header(&cfg);
    for model in [Model::Ffrc, Model::Errc] {
        let exp = build_experiment(&cfg, model).unwrap();
        let r = run_experiment1(&exp, 2, 3, cfg.gamma, cfg.rho, &|_| {}).unwrap();
        let file = fs::read_to_string(dir.path().join(format!("out/exp1_{model}.csv"))).unwrap();
        assert_eq!(file, exp1_csv(&header, &[r]));
    }

    let a = dir.path().join("out/exp1_ffrc.csv");
    let b = dir.path().join("out/exp1_errc.csv");
    let out = mfrc(dir.path(), &["--config", "small.toml", "stats", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout, stats_summary(&header, &a, &b).unwrap());
    let xa = read_exp1_counts(&fs::read_to_string(&a).unwrap(), None).unwrap();
    let xb = read_exp1_counts(&fs::read_to_string(&b).unwrap(), None).unwrap();
    let r = rank_sum_test(&xa, &xb).unwrap();
    assert!(stdout.contains(&format!("p = {}", mfrc_core::experiments::fmt_metric(r.p_value))), "{stdout}");
    assert_eq!(fs::read_to_string(dir.path().join("out/stats.txt")).unwrap(), stdout);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "tau = -1.0\n").unwrap();
    let out = mfrc(dir.path(), &["--config", "bad.toml", "dump-signal"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));

    fs::write(dir.path().join("unknown.toml"), "foo = 1\n").unwrap();
    let out = mfrc(dir.path(), &["--config", "unknown.toml", "dump-signal"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));

    let out = mfrc(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unscalable_topology_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("chain.csv"), "pre_id,post_id,synapse_count\na,b,60\nb,c,70\n").unwrap();
    fs::write(dir.path().join("chain.toml"), "model = \"ffrc\"\nconnectome = \"chain.csv\"\n").unwrap();
    let out = mfrc(dir.path(), &["--config", "chain.toml", "gen-topology"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_topology_and_signals_write_files() {
    let (dir, _) = setup();
    let out = mfrc(dir.path(), &["--config", "small.toml", "gen-topology", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let meta = fs::read_to_string(dir.path().join("out/m_errc.meta")).unwrap();
    assert!(meta.contains("spectral_radius"), "{meta}");
    let out = mfrc(dir.path(), &["--config", "small.toml", "--output-dir", "elsewhere", "dump-signal"]);
    assert_eq!(out.status.code(), Some(0));
    let signal = fs::read_to_string(dir.path().join("elsewhere/signal_b.csv")).unwrap();
    assert_eq!(signal.lines().count(), 1 + 2200);
}
