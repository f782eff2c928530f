use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wlasso::experiments::ExperimentConfig;

fn wlasso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wlasso")).args(args).output().unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.cfg");
    std::fs::write(
        &path,
        "# tiny sweep\np = 150\ns = 3\nm_grid = 15,45\ntrials = 12\ntuning_trials = 12\ngamma_grid = 2.5,4\n",
    )
    .unwrap();
    path
}

#[test]
fn experiment_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let res = wlasso(&["experiment", "--config", cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        outputs.push(std::fs::read_to_string(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(outputs[0].starts_with("model,p,s,m,n,q,estimator,weight_kind,gamma_star,trials,failures,"));
    assert_eq!(outputs[0].lines().count(), 1 + 2 * 3);
}

#[test]
fn solve_smoke() {
    let args: Vec<&str> =
        "solve --model convolution --p 200 --m 20 --s 5 --gamma 4 --weights nonconstant --seed 1".split(' ').collect();
    let res = wlasso(&args);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = String::from_utf8(res.stdout).unwrap();
    for est in ["ls_oracle", "lasso_two_step", "wlasso_two_step"] {
        assert!(text.contains(&format!("estimator={est} ")), "{text}");
    }
    assert!(text.contains("kkt_residual="));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(wlasso(&[]).status.code(), Some(1));
    assert_eq!(wlasso(&["solve", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(wlasso(&["experiment", "--set", "p=abc"]).status.code(), Some(1));
    assert_eq!(wlasso(&["solve", "--instance", "/nonexistent/instance.txt"]).status.code(), Some(2));
}

#[test]
fn dumped_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let first = wlasso(&["experiment", "--config", cfg.to_str().unwrap(), "--set", "trials=9", "--dump-config"]);
    assert!(first.status.success());
    let dumped = dir.path().join("dumped.cfg");
    std::fs::write(&dumped, &first.stdout).unwrap();
    let second = wlasso(&["experiment", "--config", dumped.to_str().unwrap(), "--dump-config"]);
    assert_eq!(first.stdout, second.stdout);
    let parsed = ExperimentConfig::from_text(std::str::from_utf8(&first.stdout).unwrap()).unwrap();
    assert_eq!(parsed.trials, 9);
    assert_eq!(parsed.m_grid, vec![15, 45]);
}

#[test]
fn inputs_are_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let inst = dir.path().join("instance.txt");
    let mut args: Vec<&str> = "solve --p 60 --m 12 --s 2 --seed 3 --save-instance".split(' ').collect();
    args.push(inst.to_str().unwrap());
    let made = wlasso(&args);
    assert!(made.status.success());
    let before = (std::fs::read(&cfg).unwrap(), std::fs::read(&inst).unwrap());
    let i = inst.to_str().unwrap();
    for args in [
        vec!["solve", "--instance", i, "--gamma", "3"],
        vec!["weights", "--instance", i],
        vec!["diagnose", "--instance", i, "--gamma", "3"],
        vec!["experiment", "--config", cfg.to_str().unwrap(), "--dump-config"],
    ] {
        let res = wlasso(&args);
        assert!(res.status.success(), "{args:?}: {}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(before, (std::fs::read(&cfg).unwrap(), std::fs::read(&inst).unwrap()));
}

#[test]
fn preset_files_match_presets() {
    let cases = [
        ("desk_mse_vs_m.cfg", ExperimentConfig::desk_mse_vs_m()),
        ("desk_mse_vs_p.cfg", ExperimentConfig::desk_mse_vs_p()),
        ("full_mse_vs_m_s5.cfg", ExperimentConfig::full_mse_vs_m(5)),
        ("full_mse_vs_m_s50.cfg", ExperimentConfig::full_mse_vs_m(50)),
    ];
    for (file, preset) in cases {
        let text = std::fs::read_to_string(configs_dir().join(file)).unwrap();
        let parsed = ExperimentConfig::from_text(&text).unwrap();
        assert_eq!(parsed.dump(), preset.dump(), "{file}");
    }
}

#[test]
fn concentration_report() {
    let res = wlasso(&["concentration-test", "--draws", "2000", "--p", "40", "--m", "10", "--seed", "2"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("failure_rate="), "{text}");
}
