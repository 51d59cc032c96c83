use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::{Strategy, DEFAULT_ELL, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::graph::DEFAULT_K;
use crate::ssm::SsmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Barbell {
        clique_size: usize,
    },
    GaussianRing {
        #[serde(default = "default_ring_n")]
        n_per_cluster: usize,
        #[serde(default = "default_ring_sigma")]
        sigma: f64,
        /// Sampling seed; the experiment seed when absent.
        #[serde(default)]
        seed: Option<u64>,
    },
    GaussianBlobs {
        centers: Vec<Vec<f64>>,
        classes: Vec<usize>,
        n_per_cluster: usize,
        sigma: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    External {
        features: PathBuf,
        labels: PathBuf,
    },
}

fn default_ring_n() -> usize {
    300
}
fn default_ring_sigma() -> f64 {
    0.17
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Laplace,
    Procrustes,
    LeSsl,
    Ssm,
    SsmKl,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Laplace, Method::Procrustes, Method::LeSsl, Method::Ssm, Method::SsmKl];

    pub fn name(self) -> &'static str {
        match self {
            Method::Laplace => "laplace",
            Method::Procrustes => "procrustes",
            Method::LeSsl => "le_ssl",
            Method::Ssm => "ssm",
            Method::SsmKl => "ssm_kl",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveConfig {
    pub strategy: Strategy,
    pub budget: usize,
    #[serde(default = "one")]
    pub batch: usize,
    /// Start from this many uniformly drawn labels instead of
    /// `labels_per_class` per class.
    #[serde(default)]
    pub initial_labels: Option<usize>,
    #[serde(default)]
    pub lambda0: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_ell")]
    pub ell: usize,
}

fn one() -> usize {
    1
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_ell() -> usize {
    DEFAULT_ELL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "default_knn")]
    pub knn_k: usize,
    #[serde(default = "one")]
    pub labels_per_class: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_sweeps")]
    pub kl_sweeps: usize,
    /// Record wall-clock times; off keeps exports byte-reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub active: Option<ActiveConfig>,
    #[serde(default)]
    pub solver: SsmConfig,
}

fn default_knn() -> usize {
    DEFAULT_K
}
fn default_trials() -> usize {
    100
}
fn default_method() -> Method {
    Method::SsmKl
}
fn default_sweeps() -> usize {
    20
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetConfig) -> Self {
        ExperimentConfig {
            dataset,
            knn_k: DEFAULT_K,
            labels_per_class: 1,
            trials: 100,
            seed: 0,
            method: Method::SsmKl,
            kl_sweeps: 20,
            timing: false,
            active: None,
            solver: SsmConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative dataset paths are relative to the config file
        if let DatasetConfig::External { features, labels } = &mut cfg.dataset {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [features, labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.labels_per_class == 0 {
            return Err(Error::Config("labels_per_class must be at least 1".into()));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be at least 1".into()));
        }
        if let Some(a) = &self.active {
            if a.batch == 0 {
                return Err(Error::Config("active batch must be at least 1".into()));
            }
            if a.ell == 0 {
                return Err(Error::Config("active ell must be at least 1".into()));
            }
            if !(a.epsilon > 0.0 && a.epsilon < 1.0) {
                return Err(Error::Config("active epsilon must lie in (0, 1)".into()));
            }
            if !(a.lambda0 >= 0.0) {
                return Err(Error::Config("active lambda0 must be nonnegative".into()));
            }
            if a.initial_labels == Some(0) {
                return Err(Error::Config("initial_labels must be at least 1".into()));
            }
        }
        match &self.dataset {
            DatasetConfig::Barbell { clique_size } if *clique_size < 2 => {
                return Err(Error::Config("clique_size must be at least 2".into()))
            }
            DatasetConfig::GaussianRing { n_per_cluster: 0, .. } => {
                return Err(Error::Config("n_per_cluster must be at least 1".into()))
            }
            _ => {}
        }
        self.solver.validate()
    }
}
