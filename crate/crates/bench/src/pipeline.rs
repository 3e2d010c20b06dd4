//! Benchmark stages: generate → train → evaluate → report → calibrate.
//!
//! Every stage reads what the previous one wrote under the output
//! directory, so stages can run one at a time from the CLI or back to
//! back through [`run_all`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use icu_morl::baselines::{greedy_policy, train_bc, train_cql, train_ddqn, QModel, SoftmaxPolicy};
use icu_morl::cpql::{cpql_checkpoint, cpql_from_checkpoint, policy_at, train_cpql, VectorQModel};
use icu_morl::dt::{dt_policy, train_dt, DtModel};
use icu_morl::nn::checkpoint::Checkpoint;
use icu_morl::ope::{fit_behavior, fqe_estimate, wis_estimate, BehaviorModel, Metric, OpeEstimate};
use icu_morl::rng::derive_seed;
use icu_morl::synth::{generate_dataset, true_policy_value, OracleValue};
use icu_morl::{load_dataset, save_dataset, split_dataset, Dataset64, Policy, PreferenceVector};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{cell_seed, preference_label, Algorithm, BenchConfig};
use crate::report::{
    emit_plot, emit_table, read_results, with_summary, write_calibration, write_results, CalibrationRow, ResultRow,
};

pub type DynPolicy = Box<dyn Policy<f64>>;

pub fn seed_dir(cfg: &BenchConfig, seed: u64) -> PathBuf {
    cfg.out.join(format!("seed_{seed}"))
}

fn model_path(cfg: &BenchConfig, seed: u64, name: &str) -> PathBuf {
    seed_dir(cfg, seed).join("models").join(format!("{name}.json"))
}

/// Train/test halves of one seed's dataset.
pub struct Split {
    pub train: Dataset64,
    pub test: Dataset64,
}

pub fn make_split(cfg: &BenchConfig, seed: u64) -> Result<Split> {
    let data: Dataset64 = generate_dataset(&cfg.env(seed), cfg.episodes)?;
    let (train, test) = split_dataset(&data, cfg.test_fraction, derive_seed(seed, &["split"]))?;
    Ok(Split { train, test })
}

pub fn generate(cfg: &BenchConfig) -> Result<()> {
    for &seed in &cfg.seeds {
        let dir = seed_dir(cfg, seed);
        fs::create_dir_all(&dir)?;
        let split = make_split(cfg, seed)?;
        save_dataset(&split.train, dir.join("train.jsonl"))?;
        save_dataset(&split.test, dir.join("test.jsonl"))?;
        info!(
            "seed {seed}: {} train / {} test episodes",
            split.train.len(),
            split.test.len()
        );
    }
    Ok(())
}

pub fn load_split(cfg: &BenchConfig, seed: u64) -> Result<Split> {
    let dir = seed_dir(cfg, seed);
    let load = |name: &str| {
        let path = dir.join(name);
        load_dataset::<f64>(&path).with_context(|| format!("loading {} (run `generate` first)", path.display()))
    };
    Ok(Split {
        train: load("train.jsonl")?,
        test: load("test.jsonl")?,
    })
}

/// A trained learner of any family.
#[derive(Clone)]
pub enum TrainedModel {
    Bc(SoftmaxPolicy<f64>),
    Q(QModel<f64>),
    Cpql(Arc<VectorQModel<f64>>),
    Dt(Arc<DtModel<f64>>),
}

impl TrainedModel {
    /// The policy evaluated at `w`. Baselines ignore `w`.
    pub fn policy(&self, w: PreferenceVector, cfg: &BenchConfig) -> Result<DynPolicy> {
        Ok(match self {
            TrainedModel::Bc(p) => Box::new(p.clone()),
            TrainedModel::Q(q) => Box::new(greedy_policy(q.clone(), cfg.ope_epsilon)?),
            TrainedModel::Cpql(m) => Box::new(policy_at(m.clone(), w, cfg.ope_epsilon)?),
            TrainedModel::Dt(m) => Box::new(dt_policy(m.clone(), w, cfg.target_rtg_scale, cfg.ope_epsilon)?),
        })
    }
}

pub fn train_algorithm(cfg: &BenchConfig, algorithm: Algorithm, seed: u64, train: &Dataset64) -> Result<(TrainedModel, Checkpoint)> {
    Ok(match algorithm {
        Algorithm::Bc => {
            let (p, _) = train_bc(train, &cfg.bc_config(seed))?;
            let ck = p.to_checkpoint();
            (TrainedModel::Bc(p), ck)
        }
        Algorithm::Ddqn => {
            let (q, _) = train_ddqn(train, &cfg.q_config(algorithm, seed))?;
            let ck = q.to_checkpoint();
            (TrainedModel::Q(q), ck)
        }
        Algorithm::Cql => {
            let (q, report) = train_cql(train, &cfg.q_config(algorithm, seed), cfg.cql_alpha)?;
            if let Some(m) = report.min_penalty {
                if m < 0.0 {
                    bail!("negative conservatism penalty {m}");
                }
            }
            let ck = q.to_checkpoint();
            (TrainedModel::Q(q), ck)
        }
        Algorithm::CCpql | Algorithm::ApCpql => {
            let c = cfg.cpql_config(algorithm, seed)?;
            let (m, _) = train_cpql(train, &c)?;
            let ck = cpql_checkpoint(&m, &c);
            (TrainedModel::Cpql(Arc::new(m)), ck)
        }
        Algorithm::PedaDt => {
            let (m, _) = train_dt(train, &cfg.dt_config(seed))?;
            let ck = m.to_checkpoint();
            (TrainedModel::Dt(Arc::new(m)), ck)
        }
    })
}

fn model_from_checkpoint(algorithm: Algorithm, ck: &Checkpoint) -> Result<TrainedModel> {
    Ok(match algorithm {
        Algorithm::Bc => TrainedModel::Bc(SoftmaxPolicy::from_checkpoint(ck)?),
        Algorithm::Ddqn | Algorithm::Cql => TrainedModel::Q(QModel::from_checkpoint(ck)?),
        Algorithm::CCpql | Algorithm::ApCpql => TrainedModel::Cpql(Arc::new(cpql_from_checkpoint(ck)?)),
        Algorithm::PedaDt => TrainedModel::Dt(Arc::new(DtModel::from_checkpoint(ck)?)),
    })
}

/// Behavior model plus every selected learner for one seed.
pub struct Models {
    pub behavior: BehaviorModel<f64>,
    pub learners: BTreeMap<Algorithm, TrainedModel>,
}

pub fn train_models(cfg: &BenchConfig, seed: u64, train: &Dataset64) -> Result<(Models, Vec<(String, Checkpoint)>)> {
    let behavior = fit_behavior(train, cfg.p_min, &cfg.behavior_config(seed))?;
    let mut checkpoints = vec![("behavior".to_string(), behavior.to_checkpoint())];
    let mut learners = BTreeMap::new();
    for &algorithm in &cfg.algorithms {
        info!("seed {seed}: training {algorithm}");
        let (model, ck) = train_algorithm(cfg, algorithm, seed, train)?;
        checkpoints.push((algorithm.tag().to_string(), ck));
        learners.insert(algorithm, model);
    }
    Ok((Models { behavior, learners }, checkpoints))
}

pub fn train(cfg: &BenchConfig) -> Result<()> {
    for &seed in &cfg.seeds {
        let split = load_split(cfg, seed)?;
        let (_, checkpoints) = train_models(cfg, seed, &split.train)?;
        fs::create_dir_all(seed_dir(cfg, seed).join("models"))?;
        for (name, ck) in checkpoints {
            ck.save(model_path(cfg, seed, &name))?;
        }
    }
    Ok(())
}

pub fn load_models(cfg: &BenchConfig, seed: u64) -> Result<Models> {
    let load = |name: &str| {
        let path = model_path(cfg, seed, name);
        Checkpoint::load(&path).with_context(|| format!("loading {} (run `train` first)", path.display()))
    };
    let behavior = BehaviorModel::from_checkpoint(&load("behavior")?)?;
    let mut learners = BTreeMap::new();
    for &algorithm in &cfg.algorithms {
        learners.insert(algorithm, model_from_checkpoint(algorithm, &load(algorithm.tag())?)?);
    }
    Ok(Models { behavior, learners })
}

/// Scores one cell.
pub fn score_cell(
    cfg: &BenchConfig,
    policy: &dyn Policy<f64>,
    behavior: &BehaviorModel<f64>,
    test: &Dataset64,
    w: PreferenceVector,
    metric: Metric,
    seed: u64,
) -> Result<OpeEstimate> {
    Ok(match metric {
        Metric::Wis => wis_estimate(
            policy,
            test,
            behavior,
            &w,
            cfg.gamma,
            cfg.rho_clip(),
            cfg.bootstrap,
            cfg.ci_level,
            seed,
        )?,
        Metric::Fqe => fqe_estimate(
            policy,
            test,
            &w,
            cfg.gamma,
            &cfg.fqe_config(seed),
            cfg.bootstrap,
            cfg.ci_level,
            seed,
        )?,
    })
}

/// A failed cell and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub preference: String,
    pub metric: Metric,
    pub reason: String,
}

/// Scores every (preference, algorithm, metric) cell of one seed. Rows
/// come back in sweep, algorithm-list, metric-list order.
pub fn evaluate_seed(
    cfg: &BenchConfig,
    seed: u64,
    models: &Models,
    test: &Dataset64,
) -> Result<(Vec<ResultRow>, Vec<CellFailure>)> {
    let mut cells = Vec::new();
    for w in cfg.sweep()? {
        for &algorithm in &cfg.algorithms {
            for &metric in &cfg.metrics {
                cells.push((w, algorithm, metric));
            }
        }
    }
    let outcomes: Vec<(ResultRow, Option<CellFailure>)> = cells
        .par_iter()
        .map(|&(w, algorithm, metric)| {
            let result = models
                .learners
                .get(&algorithm)
                .with_context(|| format!("no trained {algorithm} model"))
                .and_then(|m| m.policy(w, cfg))
                .and_then(|p| score_cell(cfg, p.as_ref(), &models.behavior, test, w, metric, cell_seed(seed, algorithm, &w, metric)));
            let mut row = ResultRow {
                w_mortality: w.w_mortality(),
                w_los: w.w_los(),
                algorithm,
                metric,
                value: None,
                ci_lower: None,
                ci_upper: None,
                ci_width: None,
                seed,
            };
            match result {
                Ok(est) => {
                    row.value = Some(est.value);
                    row.ci_lower = Some(est.ci_lower);
                    row.ci_upper = Some(est.ci_upper);
                    row.ci_width = Some(est.ci_width());
                    (row, None)
                }
                Err(e) => {
                    let label = preference_label(&w);
                    warn!("seed {seed} {algorithm} {label} {}: {e:#}", metric.tag());
                    let failure = CellFailure {
                        seed,
                        algorithm,
                        preference: label,
                        metric,
                        reason: format!("{e:#}"),
                    };
                    (row, Some(failure))
                }
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (row, failure) in outcomes {
        rows.push(row);
        failures.extend(failure);
    }
    Ok((rows, failures))
}

pub fn results_path(cfg: &BenchConfig) -> PathBuf {
    cfg.out.join("results.csv")
}

pub fn evaluate(cfg: &BenchConfig) -> Result<(Vec<ResultRow>, Vec<CellFailure>)> {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &seed in &cfg.seeds {
        let split = load_split(cfg, seed)?;
        let models = load_models(cfg, seed)?;
        let (r, f) = evaluate_seed(cfg, seed, &models, &split.test)?;
        rows.extend(r);
        failures.extend(f);
    }
    fs::create_dir_all(&cfg.out)?;
    write_results(&results_path(cfg), &rows)?;
    Ok((rows, failures))
}

pub fn report(cfg: &BenchConfig) -> Result<()> {
    let rows = read_results(&results_path(cfg)).context("run `evaluate` first")?;
    for metric in [Metric::Wis, Metric::Fqe] {
        let tag = metric.tag();
        fs::write(cfg.out.join(format!("table_{tag}.csv")), emit_table(&rows, metric)?)?;
        fs::write(cfg.out.join(format!("plot_{tag}.csv")), emit_plot(&rows, metric)?)?;
    }
    Ok(())
}

/// Monte Carlo objective means of `policy` from the shared oracle stream.
pub fn oracle_objectives(cfg: &BenchConfig, seed: u64, policy: &dyn Policy<f64>, stats: &Dataset64) -> Result<OracleValue> {
    Ok(true_policy_value(
        &cfg.env(seed),
        policy,
        &PreferenceVector::equal(),
        cfg.gamma,
        cfg.oracle_rollouts,
        derive_seed(seed, &["oracle"]),
        &stats.normalization,
    )?)
}

/// `ωᵀ` times the per-objective oracle means.
pub fn oracle_value(o: &OracleValue, w: &PreferenceVector) -> f64 {
    w.w_mortality() * o.objective_values[0] + w.w_los() * o.objective_values[1]
}

/// Ground truth for every scored cell. Baseline policies do not depend on
/// the preference, so their rollouts are shared across the sweep.
pub fn calibrate(cfg: &BenchConfig) -> Result<Vec<CalibrationRow>> {
    let results = read_results(&results_path(cfg)).context("run `evaluate` first")?;
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let split = load_split(cfg, seed)?;
        let models = load_models(cfg, seed)?;
        let mut cache: BTreeMap<(Algorithm, String), OracleValue> = BTreeMap::new();
        for row in results.iter().filter(|r| r.seed == seed) {
            let w = PreferenceVector::new(row.w_mortality, row.w_los)?;
            let key = (
                row.algorithm,
                if row.algorithm.is_baseline() { String::new() } else { preference_label(&w) },
            );
            if !cache.contains_key(&key) {
                let model = models
                    .learners
                    .get(&row.algorithm)
                    .with_context(|| format!("results mention {} but it is not configured", row.algorithm))?;
                let policy = model.policy(w, cfg)?;
                cache.insert(key.clone(), oracle_objectives(cfg, seed, policy.as_ref(), &split.train)?);
            }
            let truth = oracle_value(&cache[&key], &w);
            out.push(CalibrationRow {
                seed,
                algorithm: row.algorithm.tag().to_string(),
                w_mortality: Some(row.w_mortality),
                w_los: Some(row.w_los),
                metric: row.metric,
                ope_value: row.value,
                oracle_value: Some(truth),
                absolute_error: row.value.map(|v| (v - truth).abs()),
            });
        }
    }
    let rows = with_summary(out, &cfg.metrics);
    write_calibration(&cfg.out.join("calibration.csv"), &rows)?;
    Ok(rows)
}

/// Seeds and hashes that pin down a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub config: BenchConfig,
    pub seeds: BTreeMap<String, BTreeMap<String, u64>>,
    pub stages: Vec<String>,
    pub failures: Vec<CellFailure>,
}

impl Manifest {
    pub fn new(cfg: &BenchConfig) -> Result<Self> {
        let mut seeds = BTreeMap::new();
        for &seed in &cfg.seeds {
            let mut derived = BTreeMap::new();
            derived.insert("env".to_string(), cfg.env(seed).seed);
            derived.insert("split".to_string(), derive_seed(seed, &["split"]));
            derived.insert("behavior".to_string(), cfg.behavior_config(seed).seed);
            derived.insert("oracle".to_string(), derive_seed(seed, &["oracle"]));
            for &a in &cfg.algorithms {
                derived.insert(format!("train.{a}"), derive_seed(seed, &["train", a.tag()]));
                for w in cfg.sweep()? {
                    for &m in &cfg.metrics {
                        derived.insert(format!("cell.{a}.{}.{}", preference_label(&w), m.tag()), cell_seed(seed, a, &w, m));
                    }
                }
            }
            seeds.insert(seed.to_string(), derived);
        }
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            config: cfg.clone(),
            seeds,
            stages: Vec::new(),
            failures: Vec::new(),
        })
    }

    pub fn path(cfg: &BenchConfig) -> PathBuf {
        cfg.out.join("manifest.json")
    }

    /// The manifest already on disk for this exact config, else a fresh one.
    pub fn load_or_new(cfg: &BenchConfig) -> Result<Self> {
        let fresh = Self::new(cfg)?;
        if let Ok(text) = fs::read_to_string(Self::path(cfg)) {
            if let Ok(existing) = serde_json::from_str::<Manifest>(&text) {
                if existing.config_hash == fresh.config_hash {
                    return Ok(existing);
                }
            }
        }
        Ok(fresh)
    }

    pub fn record(&mut self, cfg: &BenchConfig, stage: &str) -> Result<()> {
        if !self.stages.iter().any(|s| s == stage) {
            self.stages.push(stage.to_string());
        }
        fs::create_dir_all(&cfg.out)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(Self::path(cfg), text)?;
        Ok(())
    }
}

/// Outcome of a full run.
pub struct RunSummary {
    pub results: Vec<ResultRow>,
    pub calibration: Vec<CalibrationRow>,
    pub failures: Vec<CellFailure>,
}

pub fn run_all(cfg: &BenchConfig) -> Result<RunSummary> {
    let mut manifest = Manifest::new(cfg)?;
    generate(cfg)?;
    manifest.record(cfg, "generate")?;
    train(cfg)?;
    manifest.record(cfg, "train")?;
    let (results, failures) = evaluate(cfg)?;
    manifest.failures = failures.clone();
    manifest.record(cfg, "evaluate")?;
    report(cfg)?;
    manifest.record(cfg, "report")?;
    let calibration = calibrate(cfg)?;
    manifest.record(cfg, "calibrate")?;
    Ok(RunSummary {
        results,
        calibration,
        failures,
    })
}

/// Whether `dir` holds the files a complete run leaves behind.
pub fn run_complete(dir: &Path) -> bool {
    [
        "results.csv",
        "table_wis.csv",
        "table_fqe.csv",
        "plot_wis.csv",
        "plot_fqe.csv",
        "calibration.csv",
        "manifest.json",
    ]
    .iter()
    .all(|f| dir.join(f).is_file())
}
