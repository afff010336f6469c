use std::path::Path;
use std::process::Command;

use spde_cli::commands::{
    cmd_blowup_demo, cmd_contractivity, cmd_convergence, cmd_paper_suite, cmd_simulate,
    SuiteOptions,
};
use spde_cli::csv::{read_records, RecordRow};
use spde_cli::parse_config;
use spde_core::SchemeKind;

const BIN: &str = env!("CARGO_BIN_EXE_spde-lab");

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn simulate_csv_round_trips() {
    let cfg = parse_config(
        "space = spectral\nN = 32\nscheme = gtem\ntau = 0.01\nT = 0.5\ntrials = 16\ninitial = constant:1\nseed = 4\n",
    )
    .unwrap();
    let out = cmd_simulate(&cfg).unwrap();
    let rows = read_records(&out.csv).unwrap();
    let expected: Vec<RecordRow> = out.summary.records.iter().map(RecordRow::from).collect();
    assert_eq!(rows, expected);
    assert_eq!(rows.len(), 51);
}

#[test]
fn zero_noise_zero_data_is_all_zero() {
    let cfg = parse_config(
        "space = fem\nN = 20\nscheme = fie\ntau = 0.1\nT = 2\ntrials = 3\ncovariance = zero\n",
    )
    .unwrap();
    for r in read_records(&cmd_simulate(&cfg).unwrap().csv).unwrap() {
        assert_eq!(
            [
                r.mean_norm,
                r.std_norm,
                r.mean_sq_norm,
                r.mean_h1_sq,
                r.mean_inf
            ],
            [0.0; 5]
        );
        assert_eq!(r.alive, 3);
    }
}

#[test]
fn sie_from_hundred_loses_every_trial() {
    let cfg = parse_config(
        "space = fem\nN = 100\nscheme = sie\ntau = 0.01\nT = 1\ntrials = 20\ninitial = constant:100\n",
    )
    .unwrap();
    let rows = read_records(&cmd_simulate(&cfg).unwrap().csv).unwrap();
    assert_eq!(rows[0].alive, 20);
    assert_eq!(rows.last().unwrap().alive, 0);
}

#[test]
fn binary_output_is_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.cfg",
        "space = fem\nN = 50\nscheme = tame-global\ntau = 0.01\nT = 1\ntrials = 150\ninitial = constant:1\n",
    );
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "3", "3"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}.csv"));
        let run = Command::new(BIN)
            .env("RAYON_NUM_THREADS", threads)
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(["--seed", "11", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(run.status.success());
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |text: &str, extra: &[&str]| {
        let cfg = write(dir.path(), "x.cfg", text);
        Command::new(BIN)
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(extra)
            .output()
            .unwrap()
    };
    let ok = run(
        "space = fem\nN = 8\nscheme = sie\ntau = 0.5\nT = 1\ntrials = 2\n",
        &[],
    );
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("t,mean_norm,"));

    let unknown = run(
        "space = fem\nN = 8\nscheme = sie\ntau = 0.5\nT = 1\ntrials = 2\nfoo = 1\n",
        &[],
    );
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("line 7"));

    let newton = run(
        "space = fem\nN = 8\nscheme = fie\ntau = 0.5\nT = 1\ntrials = 2\ninitial = constant:1000\nnewton_max_iter = 1\n",
        &[],
    );
    assert_eq!(newton.status.code(), Some(2));
}

#[test]
fn every_scheme_name_maps_to_one_scheme() {
    let mut seen = Vec::new();
    for name in spde_core::schemes::SCHEME_NAMES {
        let cfg = parse_config(&format!(
            "space = fem\nN = 8\nscheme = {name}\ntau = 0.5\nT = 1\ntrials = 1\n"
        ))
        .unwrap();
        assert_eq!(cfg.scheme.name(), name);
        assert!(!seen.contains(&cfg.scheme));
        seen.push(cfg.scheme);
    }
    assert!(seen.contains(&SchemeKind::Gyongy));
}

#[test]
fn blowup_demo_reports() {
    let hundred = parse_config(
        "space = fem\nN = 100\nscheme = sie\ntau = 0.1\nT = 5\ntrials = 20\ninitial = constant:100\n",
    )
    .unwrap();
    let r = cmd_blowup_demo(&hundred).unwrap();
    assert_eq!(r.blown_up, 20);
    assert!(r.first_blowup.is_some());
    let g = r.growth.as_ref().unwrap();
    assert!(g.passed && g.records >= 1);
    assert!(g.initial_sq_norm > r.threshold.unwrap().a0);
    assert!(r.to_string().contains("PASS"));

    let zero =
        parse_config("space = fem\nN = 100\nscheme = sie\ntau = 0.1\nT = 100\ntrials = 10\n")
            .unwrap();
    let r = cmd_blowup_demo(&zero).unwrap();
    assert_eq!(r.blown_up, 0);
    assert!(r.first_blowup.is_none());

    let spectral = parse_config(
        "space = spectral\nN = 256\nscheme = sie\ntau = 0.1\nT = 1\ntrials = 10\ninitial = constant:100\n",
    )
    .unwrap();
    let r = cmd_blowup_demo(&spectral).unwrap();
    assert_eq!(r.blown_up, 10);
    assert!(r.growth.is_none());
}

#[test]
fn convergence_in_time_and_space() {
    let time = parse_config(
        "space = fem\nN = 16\nscheme = tame-pointwise\ntau = 0.0625\nT = 0.5\ntrials = 40\n\
         initial = constant:1\ntaus = 0.125,0.0625,0.03125\ntau_ref = 0.001953125\n",
    )
    .unwrap();
    let out = cmd_convergence(&time).unwrap();
    assert_eq!(out.levels.len(), 3);
    assert!(out.final_fit.slope > 0.3, "{}", out);
    assert!(out.csv.starts_with("tau,final_error,sup_error\n"));

    let space = parse_config(
        "space = fem\nN = 64\nscheme = gtem\ntau = 0.0078125\nT = 0.25\ntrials = 20\n\
         initial = constant:1\nsizes = 4,8,16\nn_ref = 64\n",
    )
    .unwrap();
    let out = cmd_convergence(&space).unwrap();
    assert!(out.final_fit.slope > 0.75, "{}", out);
}

#[test]
fn contractivity_decays() {
    let cfg = parse_config(
        "space = fem\nN = 100\nscheme = fie\ntau = 0.001\nT = 0.5\ntrials = 1\ncovariance = zero\n\
         initial = sine:5,1\ninitial_v = sine:-3,2\n",
    )
    .unwrap();
    let out = cmd_contractivity(&cfg).unwrap();
    assert_eq!(out.series.len(), 501);
    assert!(out.decay_rate <= -8.8, "{}", out.decay_rate);
}

#[test]
fn paper_suite_zero_data_has_no_blowup() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SuiteOptions {
        trials: 4,
        seed: 0,
        out_dir: dir.path().to_path_buf(),
        t_final: Some(1.0),
    };
    let out = cmd_paper_suite("fig1", &opts).unwrap();
    assert_eq!(out.files.len(), 21);
    assert!(out.blowups.is_empty());
    for f in &out.files {
        let rows = read_records(&std::fs::read_to_string(f).unwrap()).unwrap();
        assert!(rows.iter().all(|r| r.alive == 4));
    }
    assert!(cmd_paper_suite("fig99", &opts).is_err());
}

#[test]
fn paper_suite_flags_the_gradient_caveat() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SuiteOptions {
        trials: 2,
        seed: 0,
        out_dir: dir.path().to_path_buf(),
        t_final: Some(0.1),
    };
    let out = cmd_paper_suite("fig9", &opts).unwrap();
    assert_eq!(out.caveats.len(), 1);
    assert_eq!(out.caveats[0].0, "hundred-spectral-tame-gradient");

    let listing = Command::new(BIN)
        .args(["paper-suite", "--list"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&listing.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("fig")).count(), 11);
    assert!(text.contains("hundred-spectral-tame-gradient  [note:"));
}
