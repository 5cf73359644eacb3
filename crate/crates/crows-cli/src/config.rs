//! One TOML file for every knob in the pipeline.
//!
//! Each section mirrors a pipeline stage and every field has a default,
//! so an empty (or absent) file runs the standard configuration. Unknown
//! keys are rejected rather than silently ignored. Sentinel zeros mean
//! "auto": a zero miner budget sweeps exhaustively, a zero ranker
//! feature_subsample picks sqrt(F), a zero top_k keeps every column.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crows_core::env::ExitRule;
use crows_core::forest::ForestHyper;
use crows_core::miner::MinerConfig;
use crows_core::trainer::PpoHyper;

use crate::error::{CliError, Result};
use crate::synth::SynthSpec;

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub stop_loss_frac: f64,
    pub target_frac: f64,
    /// Per-trade cost subtracted from each completed trade's reward.
    pub cost_frac: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            stop_loss_frac: 0.01,
            target_frac: 0.01,
            cost_frac: 0.0,
        }
    }
}

impl EnvSection {
    pub fn exit_rule(&self) -> ExitRule {
        ExitRule {
            stop_loss_frac: self.stop_loss_frac,
            target_frac: self.target_frac,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinerSection {
    pub support_threshold: f64,
    pub max_patterns: usize,
    pub min_length: usize,
    pub max_length: usize,
    /// Seed instances to draw; 0 sweeps every (episode, bar) once.
    pub budget: usize,
}

impl Default for MinerSection {
    fn default() -> Self {
        let c = MinerConfig::default();
        MinerSection {
            support_threshold: c.support_threshold,
            max_patterns: c.max_patterns,
            min_length: c.min_length,
            max_length: c.max_length,
            budget: c.budget.unwrap_or(0),
        }
    }
}

impl MinerSection {
    pub fn miner_config(&self) -> MinerConfig {
        MinerConfig {
            support_threshold: self.support_threshold,
            max_patterns: self.max_patterns,
            min_length: self.min_length,
            max_length: self.max_length,
            budget: if self.budget == 0 {
                None
            } else {
                Some(self.budget)
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankerSection {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; 0 picks sqrt(F).
    pub feature_subsample: usize,
    #[serde(default = "default_true")]
    pub bootstrap: bool,
    /// Keep only the top-k ranked columns for the agent; 0 keeps all.
    pub top_k: usize,
}

impl Default for RankerSection {
    fn default() -> Self {
        let h = ForestHyper::default();
        RankerSection {
            n_trees: h.n_trees,
            max_depth: h.max_depth,
            min_leaf: h.min_leaf,
            feature_subsample: h.feature_subsample.unwrap_or(0),
            bootstrap: h.bootstrap,
            top_k: 0,
        }
    }
}

impl RankerSection {
    pub fn forest_hyper(&self) -> ForestHyper {
        ForestHyper {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            feature_subsample: if self.feature_subsample == 0 {
                None
            } else {
                Some(self.feature_subsample)
            },
            bootstrap: self.bootstrap,
        }
    }

    pub fn top_k(&self) -> Option<usize> {
        if self.top_k == 0 {
            None
        } else {
            Some(self.top_k)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    pub clip: f64,
    pub gamma: f64,
    pub lam: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub iterations: usize,
    pub trials_per_iter: usize,
    pub tasks_per_trial: usize,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let h = PpoHyper::default();
        TrainerSection {
            clip: h.clip,
            gamma: h.gamma,
            lam: h.lam,
            epochs: h.epochs,
            learning_rate: h.learning_rate,
            value_coef: h.value_coef,
            entropy_coef: h.entropy_coef,
            iterations: h.iterations,
            trials_per_iter: h.trials_per_iter,
            tasks_per_trial: h.tasks_per_trial,
        }
    }
}

impl TrainerSection {
    pub fn ppo_hyper(&self) -> PpoHyper {
        PpoHyper {
            clip: self.clip,
            gamma: self.gamma,
            lam: self.lam,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            iterations: self.iterations,
            trials_per_iter: self.trials_per_iter,
            tasks_per_trial: self.tasks_per_trial,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub hidden_dim: usize,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection { hidden_dim: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n_symbols: Vec<usize>,
    pub m_days: Vec<usize>,
    pub modes: Vec<String>,
    pub feature_sets: Vec<String>,
    pub seeds_per_cell: usize,
    pub subsets: usize,
    pub seed: u64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n_symbols: vec![1, 3, 6],
            m_days: vec![5, 10, 15],
            modes: vec!["vanilla".to_string(), "rl2".to_string()],
            feature_sets: vec!["base".to_string()],
            seeds_per_cell: 1,
            subsets: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Base directory for relative data paths; the CROWS_DATA_DIR
    /// environment variable overrides it.
    pub dir: Option<String>,
    /// Default data file when the command line names none.
    pub file: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub env: EnvSection,
    pub miner: MinerSection,
    pub ranker: RankerSection,
    pub trainer: TrainerSection,
    pub agent: AgentSection,
    pub grid: GridSection,
    pub data: DataSection,
    pub synth: Option<SynthSpec>,
}

impl AppConfig {
    /// Reads and validates a config file; `None` yields the defaults.
    pub fn load(path: Option<&Path>) -> Result<AppConfig> {
        let cfg = match path {
            None => AppConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env
            .exit_rule()
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        if self.env.cost_frac < 0.0 {
            return Err(CliError::config("env.cost_frac must be >= 0"));
        }
        self.miner
            .miner_config()
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.ranker
            .forest_hyper()
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.trainer
            .ppo_hyper()
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        if self.agent.hidden_dim == 0 {
            return Err(CliError::config("agent.hidden_dim must be >= 1"));
        }
        let g = &self.grid;
        if g.n_symbols.is_empty()
            || g.m_days.is_empty()
            || g.modes.is_empty()
            || g.feature_sets.is_empty()
        {
            return Err(CliError::config("grid: every axis needs >= 1 entry"));
        }
        if g.n_symbols.iter().any(|&n| n == 0) || g.m_days.iter().any(|&m| m == 0) {
            return Err(CliError::config("grid: n_symbols and m_days must be >= 1"));
        }
        if g.seeds_per_cell == 0 || g.subsets == 0 {
            return Err(CliError::config("grid: seeds_per_cell and subsets must be >= 1"));
        }
        for m in &g.modes {
            crate::harness::parse_mode(m)?;
        }
        for f in &g.feature_sets {
            crate::harness::parse_feature_set(f)?;
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        Ok(())
    }

    /// Resolves the data file: explicit argument, else the configured
    /// default; relative paths are joined onto CROWS_DATA_DIR or the
    /// configured directory.
    pub fn resolve_data(&self, arg: Option<&Path>) -> Result<std::path::PathBuf> {
        self.resolve_data_from(arg, std::env::var("CROWS_DATA_DIR").ok())
    }

    pub fn resolve_data_from(
        &self,
        arg: Option<&Path>,
        env_dir: Option<String>,
    ) -> Result<std::path::PathBuf> {
        let file: std::path::PathBuf = match arg {
            Some(p) => p.to_path_buf(),
            None => self
                .data
                .file
                .as_ref()
                .map(std::path::PathBuf::from)
                .ok_or_else(|| {
                    CliError::config("no data file given (--data or [data] file)")
                })?,
        };
        if file.is_absolute() {
            return Ok(file);
        }
        let dir = env_dir.or_else(|| self.data.dir.clone());
        Ok(match dir {
            Some(d) => Path::new(&d).join(file),
            None => file,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn empty_file_is_all_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"").unwrap();
        let cfg = AppConfig::load(Some(f.path())).unwrap();
        assert_eq!(cfg, AppConfig::default());
        assert_eq!(cfg.trainer.clip, 0.2);
        assert_eq!(cfg.trainer.gamma, 0.99);
        assert_eq!(cfg.trainer.lam, 0.95);
        assert_eq!(cfg.trainer.epochs, 4);
        assert_eq!(cfg.trainer.learning_rate, 3e-4);
        assert_eq!(cfg.trainer.value_coef, 0.5);
        assert_eq!(cfg.trainer.entropy_coef, 0.01);
        assert_eq!(cfg.trainer.tasks_per_trial, 2);
        assert_eq!(cfg.trainer.trials_per_iter, 16);
        assert_eq!(cfg.miner.support_threshold, 0.05);
        assert_eq!(cfg.miner.max_patterns, 10);
        assert_eq!(cfg.miner.min_length, 3);
        assert_eq!(cfg.miner.max_length, 6);
        assert_eq!(cfg.env.stop_loss_frac, 0.01);
        assert_eq!(cfg.env.target_frac, 0.01);
        assert_eq!(cfg.agent.hidden_dim, 64);
        assert_eq!(cfg.grid.subsets, 4);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"[trainer]\nclip = 0.2\ntypo_key = 1\n").unwrap();
        let err = AppConfig::load(Some(f.path())).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn out_of_range_values_are_config_errors() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"[trainer]\nclip = 1.5\n").unwrap();
        assert!(AppConfig::load(Some(f.path())).is_err());
    }

    #[test]
    fn sentinel_zeros_mean_auto() {
        let m = MinerSection {
            budget: 0,
            ..MinerSection::default()
        };
        assert_eq!(m.miner_config().budget, None);
        let r = RankerSection {
            feature_subsample: 0,
            top_k: 0,
            ..RankerSection::default()
        };
        assert_eq!(r.forest_hyper().feature_subsample, None);
        assert_eq!(r.top_k(), None);
    }

    #[test]
    fn data_dir_env_var_overrides_config() {
        let cfg = AppConfig {
            data: DataSection {
                dir: Some("/from/config".to_string()),
                file: Some("bars.csv".to_string()),
            },
            ..AppConfig::default()
        };
        // No env var: config directory applies.
        let p = cfg.resolve_data_from(None, None).unwrap();
        assert_eq!(p, Path::new("/from/config/bars.csv"));
        // Env var wins.
        let p = cfg
            .resolve_data_from(None, Some("/from/env".to_string()))
            .unwrap();
        assert_eq!(p, Path::new("/from/env/bars.csv"));
        // Absolute argument ignores both.
        let p = cfg
            .resolve_data_from(Some(Path::new("/abs/data.csv")), None)
            .unwrap();
        assert_eq!(p, Path::new("/abs/data.csv"));
    }
}
