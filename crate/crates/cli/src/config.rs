//! Run configuration: one TOML file, every section optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use orderclust::kernel::ou::OuHyperparams;
use orderclust::kernel::sir::SirHyperparams;
use orderclust::proposal::ProposalConfig;
use orderclust::sampler::SamplerConfig;
use orderclust::studies::EpiStudyConfig;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub simulate: SimulateConfig,
    pub data: DataConfig,
    pub ou: OuHyperparams,
    pub sir: SirHyperparams,
    pub constants: ConstantsConfig,
    pub proposal: ProposalConfig,
    pub sampler: SamplerConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    /// Ten OU series in three groups.
    #[default]
    Ts,
    /// Ten simulated epidemics in three groups.
    Epi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub study: Study,
    /// Series length of the OU study; block lengths are rescaled from 300.
    pub t: usize,
    /// OU autocorrelation used to generate the data.
    pub gamma: f64,
    pub epi: EpiStudyConfig,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            study: Study::Ts,
            t: 300,
            gamma: 0.1,
            epi: EpiStudyConfig::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    Ou,
    Sir,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub kernel: KernelKind,
    /// Standardize each OU series before fitting.
    pub standardize: bool,
    /// Number of days; required for epidemic event lists.
    pub horizon: Option<usize>,
    /// Seed of the kernel's Monte Carlo draws.
    pub eval_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Ou,
            standardize: true,
            horizon: None,
            eval_seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    /// Importance draws per series.
    pub b: usize,
    /// Change-point probability of the importance law.
    pub p: f64,
    pub seed: u64,
    /// Exact sums instead of importance sampling.
    pub exact: bool,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            b: 10_000,
            p: 0.5,
            seed: 1,
            exact: false,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner().message().trim()))
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }
}
