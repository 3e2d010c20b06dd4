//! Flat key-value benchmark configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use icu_morl::baselines::{BcConfig, QLearningConfig, OPE_EPSILON};
use icu_morl::cpql::{Conditioning, CpqlConfig, PreferenceSampler};
use icu_morl::dt::DtConfig;
use icu_morl::nn::Activation;
use icu_morl::ope::{FqeConfig, Metric, DEFAULT_BOOTSTRAP, DEFAULT_P_MIN, DEFAULT_RHO_CLIP};
use icu_morl::rng::derive_seed;
use icu_morl::synth::EnvConfig;
use icu_morl::PreferenceVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Bc,
    Ddqn,
    Cql,
    CCpql,
    ApCpql,
    PedaDt,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Bc,
        Algorithm::Ddqn,
        Algorithm::Cql,
        Algorithm::CCpql,
        Algorithm::ApCpql,
        Algorithm::PedaDt,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Bc => "bc",
            Algorithm::Ddqn => "ddqn",
            Algorithm::Cql => "cql",
            Algorithm::CCpql => "c_cpql",
            Algorithm::ApCpql => "ap_cpql",
            Algorithm::PedaDt => "peda_dt",
        }
    }

    /// Trained once at a fixed preference and reused across the sweep.
    pub fn is_baseline(self) -> bool {
        matches!(self, Algorithm::Bc | Algorithm::Ddqn | Algorithm::Cql)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s.trim())
            .with_context(|| format!("unknown algorithm `{s}`"))
    }
}

pub fn parse_metric(s: &str) -> Result<Metric> {
    Metric::from_tag(s.trim()).with_context(|| format!("unknown metric `{s}`"))
}

/// Every knob of a benchmark run. Keys live at the top level of the TOML
/// document; environment parameters carry an `env_` prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub episodes: usize,
    pub test_fraction: f64,
    pub gamma: f64,
    pub sweep_step: f64,
    pub algorithms: Vec<Algorithm>,
    pub metrics: Vec<Metric>,
    pub bootstrap: usize,
    pub ci_level: f64,
    /// Per-step ratio clip; `0` disables clipping.
    pub rho_clip: f64,
    pub p_min: f64,
    pub ope_epsilon: f64,
    pub baseline_w_mortality: f64,
    pub target_rtg_scale: f64,
    pub oracle_rollouts: usize,

    pub env_d: usize,
    pub env_a: usize,
    pub env_t_max: usize,
    pub env_severity_drift: f64,
    pub env_treatment_effect: f64,
    pub env_noise_std: f64,
    pub env_complication_rate: f64,
    pub env_initial_severity_low: f64,
    pub env_initial_severity_high: f64,
    pub env_behavior_epsilon: f64,

    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub q_iterations: usize,
    pub target_sync_period: usize,
    pub cql_alpha: f64,
    pub bc_epochs: usize,

    pub behavior_epochs: usize,
    pub behavior_learning_rate: f64,
    pub behavior_batch_size: usize,

    pub cpql_alpha: f64,
    pub cpql_iterations: usize,
    pub cpql_sampler: String,
    pub cpql_sampler_step: f64,
    pub gate_hidden: usize,

    pub dt_context_length: usize,
    pub dt_embed_dim: usize,
    pub dt_layers: usize,
    pub dt_heads: usize,
    pub dt_epochs: usize,
    pub dt_batch_size: usize,
    pub dt_learning_rate: f64,
    pub dt_preference_token: bool,

    pub fqe_iterations: usize,
    pub fqe_steps_per_iteration: usize,
    pub fqe_batch_size: usize,
    pub fqe_hidden: Vec<usize>,
    pub fqe_learning_rate: f64,
    pub fqe_warm_start: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        let q = QLearningConfig::default();
        let cpql = CpqlConfig::default();
        let dt = DtConfig::default();
        let fqe = FqeConfig::default();
        Self {
            seeds: vec![0],
            out: PathBuf::from("out"),
            episodes: 2500,
            test_fraction: 0.2,
            gamma: 0.99,
            sweep_step: 0.1,
            algorithms: Algorithm::ALL.to_vec(),
            metrics: vec![Metric::Wis, Metric::Fqe],
            bootstrap: DEFAULT_BOOTSTRAP,
            ci_level: 0.95,
            rho_clip: DEFAULT_RHO_CLIP,
            p_min: DEFAULT_P_MIN,
            ope_epsilon: OPE_EPSILON,
            baseline_w_mortality: 0.5,
            target_rtg_scale: 1.0,
            oracle_rollouts: 2000,

            env_d: env.d,
            env_a: env.a,
            env_t_max: env.t_max,
            env_severity_drift: env.severity_drift,
            env_treatment_effect: env.treatment_effect,
            env_noise_std: env.noise_std,
            env_complication_rate: env.complication_rate,
            env_initial_severity_low: env.initial_severity_low,
            env_initial_severity_high: env.initial_severity_high,
            env_behavior_epsilon: env.behavior_epsilon,

            hidden: q.hidden.clone(),
            learning_rate: q.learning_rate,
            batch_size: q.batch_size,
            q_iterations: q.iterations,
            target_sync_period: q.target_sync_period,
            cql_alpha: 1.0,
            bc_epochs: BcConfig::default().epochs,

            behavior_epochs: 40,
            behavior_learning_rate: 3e-3,
            behavior_batch_size: 128,

            cpql_alpha: 0.1,
            cpql_iterations: cpql.iterations,
            cpql_sampler: "uniform".into(),
            cpql_sampler_step: 0.1,
            gate_hidden: cpql.gate_hidden,

            dt_context_length: dt.context_length,
            dt_embed_dim: dt.embed_dim,
            dt_layers: dt.num_layers,
            dt_heads: dt.num_heads,
            dt_epochs: dt.epochs,
            dt_batch_size: dt.batch_size,
            dt_learning_rate: dt.learning_rate,
            dt_preference_token: dt.preference_token,

            fqe_iterations: fqe.iterations,
            fqe_steps_per_iteration: fqe.steps_per_iteration,
            fqe_batch_size: fqe.batch_size,
            fqe_hidden: fqe.hidden.clone(),
            fqe_learning_rate: fqe.learning_rate,
            fqe_warm_start: fqe.warm_start,
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing benchmark config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            bail!("config selects no algorithm");
        }
        if self.metrics.is_empty() {
            bail!("config selects no metric");
        }
        if self.seeds.is_empty() {
            bail!("config lists no seed");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            bail!("test_fraction must lie in (0, 1), got {}", self.test_fraction);
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            bail!("gamma must lie in [0, 1], got {}", self.gamma);
        }
        if self.bootstrap < 100 {
            bail!("bootstrap needs at least 100 resamples, got {}", self.bootstrap);
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            bail!("ci_level must lie in (0, 1), got {}", self.ci_level);
        }
        if self.rho_clip != 0.0 && self.rho_clip < 1.0 {
            bail!("rho_clip must be ≥ 1 or 0 to disable, got {}", self.rho_clip);
        }
        if self.oracle_rollouts == 0 {
            bail!("oracle_rollouts must be positive");
        }
        PreferenceVector::from_mortality(self.baseline_w_mortality)?;
        self.sweep()?;
        self.sampler()?;
        self.env(0).validate()?;
        self.dt_config(0).validate()?;
        Ok(())
    }

    pub fn sweep(&self) -> Result<Vec<PreferenceVector>> {
        Ok(PreferenceVector::sweep(self.sweep_step)?)
    }

    pub fn baseline_preference(&self) -> PreferenceVector {
        PreferenceVector::from_mortality(self.baseline_w_mortality).expect("validated")
    }

    pub fn rho_clip(&self) -> Option<f64> {
        (self.rho_clip != 0.0).then_some(self.rho_clip)
    }

    /// Hex SHA-256 of the canonical TOML form, excluding the output path.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out = PathBuf::new();
        let text = canon.to_toml().expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn env(&self, seed: u64) -> EnvConfig {
        EnvConfig {
            d: self.env_d,
            a: self.env_a,
            t_max: self.env_t_max,
            severity_drift: self.env_severity_drift,
            treatment_effect: self.env_treatment_effect,
            noise_std: self.env_noise_std,
            complication_rate: self.env_complication_rate,
            initial_severity_low: self.env_initial_severity_low,
            initial_severity_high: self.env_initial_severity_high,
            behavior_epsilon: self.env_behavior_epsilon,
            seed: derive_seed(seed, &["env"]),
        }
    }

    pub fn sampler(&self) -> Result<PreferenceSampler> {
        let step = self.cpql_sampler_step;
        Ok(match self.cpql_sampler.as_str() {
            "uniform" => PreferenceSampler::Uniform { step },
            "grid" => PreferenceSampler::Grid { step },
            other => bail!("unknown cpql_sampler `{other}`"),
        })
    }

    pub fn bc_config(&self, seed: u64) -> BcConfig {
        BcConfig {
            hidden: self.hidden.clone(),
            activation: Activation::Relu,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.bc_epochs,
            seed: derive_seed(seed, &["train", "bc"]),
        }
    }

    pub fn behavior_config(&self, seed: u64) -> BcConfig {
        BcConfig {
            hidden: self.hidden.clone(),
            activation: Activation::Relu,
            learning_rate: self.behavior_learning_rate,
            batch_size: self.behavior_batch_size,
            epochs: self.behavior_epochs,
            seed: derive_seed(seed, &["behavior"]),
        }
    }

    pub fn q_config(&self, algorithm: Algorithm, seed: u64) -> QLearningConfig {
        QLearningConfig {
            preference: self.baseline_preference(),
            gamma: self.gamma,
            iterations: self.q_iterations,
            target_sync_period: self.target_sync_period,
            batch_size: self.batch_size,
            hidden: self.hidden.clone(),
            activation: Activation::Relu,
            learning_rate: self.learning_rate,
            seed: derive_seed(seed, &["train", algorithm.tag()]),
        }
    }

    pub fn cpql_config(&self, algorithm: Algorithm, seed: u64) -> Result<CpqlConfig> {
        let conditioning = match algorithm {
            Algorithm::CCpql => Conditioning::Concat,
            Algorithm::ApCpql => Conditioning::PreferenceAttention,
            other => bail!("{other} is not a conditioned Q-learner"),
        };
        Ok(CpqlConfig {
            conditioning,
            alpha: self.cpql_alpha,
            gamma: self.gamma,
            iterations: self.cpql_iterations,
            target_sync_period: self.target_sync_period,
            batch_size: self.batch_size,
            hidden: self.hidden.clone(),
            gate_hidden: self.gate_hidden,
            activation: Activation::Relu,
            learning_rate: self.learning_rate,
            sampler: self.sampler()?,
            seed: derive_seed(seed, &["train", algorithm.tag()]),
            ..CpqlConfig::default()
        })
    }

    pub fn dt_config(&self, seed: u64) -> DtConfig {
        DtConfig {
            context_length: self.dt_context_length,
            embed_dim: self.dt_embed_dim,
            num_layers: self.dt_layers,
            num_heads: self.dt_heads,
            learning_rate: self.dt_learning_rate,
            batch_size: self.dt_batch_size,
            epochs: self.dt_epochs,
            preference_token: self.dt_preference_token,
            seed: derive_seed(seed, &["train", Algorithm::PedaDt.tag()]),
        }
    }

    pub fn fqe_config(&self, cell_seed: u64) -> FqeConfig {
        FqeConfig {
            iterations: self.fqe_iterations,
            steps_per_iteration: self.fqe_steps_per_iteration,
            batch_size: self.fqe_batch_size,
            hidden: self.fqe_hidden.clone(),
            activation: Activation::Relu,
            learning_rate: self.fqe_learning_rate,
            warm_start: self.fqe_warm_start,
            seed: cell_seed,
        }
    }
}

/// Canonical text for a preference inside seeds and file rows.
pub fn preference_label(w: &PreferenceVector) -> String {
    format!("[{}, {}]", w.w_mortality(), w.w_los())
}

/// Seed of one evaluation cell.
pub fn cell_seed(seed: u64, algorithm: Algorithm, w: &PreferenceVector, metric: Metric) -> u64 {
    derive_seed(seed, &[algorithm.tag(), &preference_label(w), metric.tag()])
}
