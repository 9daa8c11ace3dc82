use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn logts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logts"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

// Short runs that mostly stop at the budget: they exercise the plumbing only.
const QUICK: &[&str] = &[
    "run",
    "--family",
    "hard-bai",
    "--alpha",
    "0.6",
    "--trials",
    "2",
    "--budget",
    "20000",
    "--lazy-stride",
    "5",
    "--fw-iters",
    "50",
];

fn quick_run(dir: &Path, extra: &[&str]) -> Output {
    let mut args = QUICK.to_vec();
    args.extend_from_slice(&["--out", dir.to_str().unwrap()]);
    args.extend_from_slice(extra);
    logts(&args)
}

#[test]
fn run_is_reproducible_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = quick_run(a.path(), &["--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&quick_run(b.path(), &["--seed", "3", "--parallel", "2"])), 0);
    let csv_a = std::fs::read(a.path().join("results.csv")).unwrap();
    let csv_b = std::fs::read(b.path().join("results.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,algo,family,K,d,delta,seed,tau,correct,stopped_by_budget,t_star_inv,lower_bound_samples"
    );
    assert_eq!(lines.count(), 4);

    let c = tempfile::tempdir().unwrap();
    quick_run(c.path(), &["--seed", "4"]);
    assert_ne!(
        std::fs::read(c.path().join("results.csv")).unwrap(),
        std::fs::read(a.path().join("results.csv")).unwrap()
    );
}

#[test]
fn summary_json_matches_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = quick_run(dir.path(), &["--json", "--algo", "logts"]);
    assert_eq!(code(&out), 0);
    let printed = stdout_json(&out);
    let saved: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(printed["algos"], saved["algos"]);
    let algos = printed["algos"].as_object().unwrap();
    assert_eq!(algos.keys().collect::<Vec<_>>(), ["logts"]);
    let taus: Vec<f64> = std::fs::read_to_string(dir.path().join("results.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(7).unwrap().parse().unwrap())
        .collect();
    let mean_k = taus.iter().sum::<f64>() / taus.len() as f64 / 1000.0;
    assert!((algos["logts"]["mean_tau_k"].as_f64().unwrap() - mean_k).abs() < 1e-9);
    assert_eq!(printed["K"], 3);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"instance": {"generator": {"family": {"family": "hard_bai", "d": 2, "alpha": 0.6},
            "norm_theta": 1.0, "radius": null,
            "fw": {"max_iters": 50, "rel_tol": 1e-6, "floor": 1e-9, "tie_tol": 1e-9, "kink_tol": 0.01,
                   "lazy_stride": 1, "topm_direction": "difference"}}},
            "trials": 5, "budget": 20000, "lazy_stride": 5, "fw_iters": 50, "algos": ["random"]}"#,
    )
    .unwrap();
    let out = logts(&["run", "--config", cfg.to_str().unwrap(), "--trials", "1", "--json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = stdout_json(&out);
    assert_eq!(s["trials"], 1);
    assert_eq!(s["algos"]["random"]["runs"], 1);

    std::fs::write(&cfg, r#"{"trials": 2, "unknown_field": 1}"#).unwrap();
    assert_eq!(code(&logts(&["run", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&logts(&["run", "--family", "hard-bai", "--delta", "1.5"])), 2);
    assert_eq!(code(&logts(&["run"])), 2);
    assert_eq!(code(&logts(&["run", "--family", "hard-bai", "--algo", "greedy"])), 2);
    assert_eq!(code(&logts(&["design", "--family", "hard-bai", "--alpha", "2.0"])), 2);
    // p = 1/2 puts both extra arms exactly on the threshold
    assert_eq!(code(&logts(&["design", "--family", "hard-tbp", "--p", "0.5"])), 2);
    assert_eq!(code(&logts(&["design", "--instance", "/nonexistent.json"])), 2);
    assert_eq!(code(&logts(&["verify", "no_such_suite"])), 2);
    assert_eq!(code(&logts(&["frobnicate"])), 2);
}

#[test]
fn verify_passes_and_catches_a_perturbation() {
    let out = logts(&["verify", "inner_inf"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS inner_inf"));
    let out = logts(&["verify", "kl_quadratic", "--perturb", "1e-3", "--json"]);
    assert_eq!(code(&out), 1);
    assert_eq!(stdout_json(&out)[0]["passed"], false);
}

#[test]
fn gen_round_trips_through_design() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    let out = logts(&[
        "gen",
        "--family",
        "sphere-tbp",
        "--K",
        "6",
        "--seed",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let inst: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(inst["arms"].as_array().unwrap().len(), 6);
    assert_eq!(inst["problem"]["kind"], "tbp");
    for key in ["label", "d", "theta_star", "S"] {
        assert!(inst.get(key).is_some(), "missing {key}");
    }

    let again = logts(&["gen", "--family", "sphere-tbp", "--K", "6", "--seed", "2"]);
    assert_eq!(again.stdout, std::fs::read(&path).unwrap());

    let out = logts(&["design", "--instance", path.to_str().unwrap(), "--json"]);
    assert_eq!(code(&out), 0);
    let d = stdout_json(&out);
    let w: Vec<f64> = d["w_star"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(w.len(), 6);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let (inv, t) = (d["t_star_inv"].as_f64().unwrap(), d["t_star"].as_f64().unwrap());
    assert!((inv * t - 1.0).abs() < 1e-12);
}

#[test]
fn design_of_the_hard_instance() {
    let out = logts(&["design", "--family", "hard-bai", "--alpha", "0.3", "--json"]);
    assert_eq!(code(&out), 0);
    let d = stdout_json(&out);
    // e₂ separates x′ from e₁ best, so it carries most of the weight
    let w: Vec<f64> = d["w_star"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(w[1] > w[0] && w[1] > w[2]);
    assert_eq!(d["active_arm"], 2);
    let lb = d["lower_bound_samples"].as_f64().unwrap();
    let expected = (1.0f64 / (2.4 * 0.1)).ln() * d["t_star"].as_f64().unwrap();
    assert!((lb - expected).abs() < 1e-9 * expected);

    let top = logts(&["design", "--family", "sphere-bai", "--K", "5", "--m", "2", "--json"]);
    assert_eq!(code(&top), 0, "{}", String::from_utf8_lossy(&top.stderr));
    assert!(stdout_json(&top)["instance"].as_str().unwrap().ends_with("_top2"));
}

#[test]
fn sweep_writes_a_plot() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("sweep.svg");
    let mut args = QUICK.to_vec();
    args[6] = "1";
    args.extend_from_slice(&[
        "--d",
        "2,3",
        "--plot",
        svg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let out = logts(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.matches("<polyline").count() == 2);
    let rows = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2);
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["sweep"].as_array().unwrap().len(), 4);

    assert_eq!(
        code(&logts(&[
            "run",
            "--family",
            "hard-bai",
            "--plot",
            svg.to_str().unwrap()
        ])),
        2
    );
}
