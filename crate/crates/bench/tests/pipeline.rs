use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use icu_morl::ope::Metric;
use icu_morl_bench::config::{Algorithm, BenchConfig};
use icu_morl_bench::pipeline::{evaluate_seed, make_split, run_all, run_complete, train_models, Manifest, Models};
use icu_morl_bench::report::{emit_table, read_calibration, read_results};

fn tiny(out: &Path) -> BenchConfig {
    let cfg = BenchConfig::from_toml(
        "episodes = 80\nsweep_step = 0.5\nbootstrap = 100\noracle_rollouts = 100\nq_iterations = 150\n\
         cpql_iterations = 150\nbc_epochs = 2\nbehavior_epochs = 2\ndt_epochs = 1\ndt_embed_dim = 8\n\
         fqe_iterations = 3\nfqe_steps_per_iteration = 10\n",
    )
    .unwrap();
    BenchConfig { out: out.to_path_buf(), ..cfg }
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let summary = run_all(&cfg).unwrap();
    assert!(summary.failures.is_empty());
    assert!(run_complete(dir.path()));

    let rows = read_results(&dir.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), 3 * Algorithm::ALL.len() * 2);
    assert_eq!(rows, summary.results);
    for r in &rows {
        let (lo, v, hi) = (r.ci_lower.unwrap(), r.value.unwrap(), r.ci_upper.unwrap());
        assert!(lo <= v && v <= hi, "{r:?}");
        assert_eq!(r.w_mortality + r.w_los, 1.0);
    }

    let calibration = read_calibration(&dir.path().join("calibration.csv")).unwrap();
    assert_eq!(calibration.len(), rows.len() + 2);
    assert_eq!(calibration.iter().filter(|c| c.algorithm == "summary").count(), 2);

    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.config_hash, cfg.hash());
    assert_eq!(manifest.stages, ["generate", "train", "evaluate", "report", "calibrate"]);
    assert!(manifest.seeds["0"].contains_key("env"));
}

#[test]
fn missing_model_yields_na_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BenchConfig { algorithms: vec![Algorithm::Bc, Algorithm::Ddqn], ..tiny(dir.path()) };
    let split = make_split(&cfg, 0).unwrap();
    let (models, _) = train_models(&BenchConfig { algorithms: vec![Algorithm::Bc], ..cfg.clone() }, 0, &split.train).unwrap();
    let models = Models { behavior: models.behavior, learners: models.learners.into_iter().collect::<BTreeMap<_, _>>() };
    let (rows, failures) = evaluate_seed(&cfg, 0, &models, &split.test).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 2);
    assert_eq!(failures.len(), 3 * 2);
    assert!(failures.iter().all(|f| f.algorithm == Algorithm::Ddqn));
    for r in &rows {
        assert_eq!(r.value.is_none(), r.algorithm == Algorithm::Ddqn);
    }
    let table = emit_table(&rows, Metric::Wis).unwrap();
    assert!(table.lines().skip(1).all(|l| l.contains("NA")));
}

fn cli(args: &[&str], config: &Path, out: &Path) -> std::process::ExitStatus {
    Command::new(env!("CARGO_BIN_EXE_morl-bench"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .status()
        .unwrap()
}

#[test]
fn verbs_run_stage_by_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(&config, tiny(dir.path()).to_toml().unwrap()).unwrap();
    let out = dir.path().join("run");
    let subset = ["--algorithms", "bc,cql", "--metrics", "wis", "--sweep-step", "0.25", "--seed", "3"];
    for verb in ["generate", "train", "evaluate", "report", "calibrate"] {
        let mut args = vec![verb];
        args.extend(subset);
        assert!(cli(&args, &config, &out).success(), "{verb}");
    }
    assert!(run_complete(&out));
    let rows = read_results(&out.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 5 * 2);
    assert!(rows.iter().all(|r| r.seed == 3 && r.metric == Metric::Wis));
    let header = std::fs::read_to_string(out.join("table_wis.csv")).unwrap();
    assert!(header.starts_with("w_mortality,w_los,bc,"));
}

#[test]
fn bad_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(&config, "no_such_key = 1\n").unwrap();
    assert_eq!(cli(&["generate"], &config, dir.path()).code(), Some(1));
    std::fs::write(&config, "episodes = 20\n").unwrap();
    assert_eq!(cli(&["evaluate"], &config, &dir.path().join("empty")).code(), Some(1));
}
