//! Audit configuration file (TOML).
//!
//! ```toml
//! seed = "83710294"            # may be left out until the seed ceremony
//! risk_limit = 0.05
//! inflation_factor = 1.0
//!
//! [risk_function]
//! kind = "alpha_optimal_comparison"
//! p1 = 0.0
//! p2 = 0.0001
//!
//! [error_model]
//! p1 = 0.0
//! p2 = 0.0
//!
//! [round_strategy]
//! kind = "deterministic_projection"
//!
//! [paths]
//! cvrs = [{ format = "canonical", path = "cvrs.json" }]
//! manifest = "manifest.csv"
//! state_dir = "state"
//!
//! [server]
//! port = 8080
//! auth_token = "change-me"
//!
//! [[contests]]
//! id = "mayor"
//! name = "Mayor"
//! social_choice = { kind = "plurality" }
//! candidates = ["alice", "bob"]
//! reported_winners = ["alice"]
//! cards_upper_bound = 1000
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assertions::{parse_raire, RaireEntry};
use crate::error::{Error, Result};
use crate::ingest::{parse_cvr_sources, parse_manifest, CvrFormat, ParseReport};
use crate::model::{
    AuditMode, AuditPaths, AuditSpec, BallotManifest, CardRecord, Contest, ContestStatus,
    CvrSource, RiskFunction, RoundStrategy, SocialChoice,
};
use crate::risk::ErrorModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContestConfig {
    pub id: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "plurality")]
    pub social_choice: SocialChoice,
    pub candidates: Vec<String>,
    pub reported_winners: Vec<String>,
    pub cards_upper_bound: u64,
    #[serde(default)]
    pub risk_limit: Option<f64>,
    #[serde(default)]
    pub audit_mode: Option<AuditMode>,
    #[serde(default)]
    pub raire_assertions: Option<String>,
}

fn plurality() -> SocialChoice {
    SocialChoice::Plurality
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default)]
    pub port: Option<u16>,
    #[serde(default)]
    pub auth_token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default)]
    pub seed: Option<String>,
    #[serde(default = "default_risk_limit")]
    pub risk_limit: f64,
    #[serde(default = "default_inflation")]
    pub inflation_factor: f64,
    #[serde(default)]
    pub risk_function: RiskFunction,
    #[serde(default)]
    pub error_model: ErrorModel,
    #[serde(default)]
    pub round_strategy: RoundStrategy,
    #[serde(default)]
    pub paths: AuditPaths,
    #[serde(default)]
    pub server: ServerConfig,
    pub contests: Vec<ContestConfig>,
    /// Directory of the config file; relative paths hang off it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_risk_limit() -> f64 {
    0.05
}

fn default_inflation() -> f64 {
    1.0
}

/// Everything needed to initialise an audit.
#[derive(Debug, Clone)]
pub struct AuditInputs {
    pub spec: AuditSpec,
    pub contests: Vec<Contest>,
    pub raire: BTreeMap<String, Vec<RaireEntry>>,
    pub cvrs: Vec<CardRecord>,
    pub parse_report: ParseReport,
    pub manifest: Option<BallotManifest>,
}

impl AuditConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = AuditConfig::parse(&text, &path.display().to_string())?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let config: AuditConfig =
            toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        if !(config.risk_limit > 0.0 && config.risk_limit < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "risk_limit {} must lie in (0, 1)",
                config.risk_limit
            )));
        }
        Ok(config)
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn state_dir(&self) -> Option<PathBuf> {
        self.paths.state_dir.as_deref().map(|p| self.resolve(p))
    }

    pub fn spec(&self) -> AuditSpec {
        AuditSpec {
            seed: self.seed.clone().unwrap_or_default(),
            risk_function: self.risk_function.clone(),
            audit_modes: self
                .contests
                .iter()
                .filter_map(|c| c.audit_mode.map(|m| (c.id.clone(), m)))
                .collect(),
            error_model: self.error_model,
            round_strategy: self.round_strategy.clone(),
            inflation_factor: self.inflation_factor,
            paths: self.paths.clone(),
        }
    }

    pub fn contests(&self) -> Vec<Contest> {
        self.contests
            .iter()
            .map(|c| Contest {
                id: c.id.clone(),
                name: c.name.clone().unwrap_or_else(|| c.id.clone()),
                social_choice: c.social_choice.clone(),
                candidates: c.candidates.clone(),
                reported_winners: c.reported_winners.clone(),
                cards_upper_bound: c.cards_upper_bound,
                risk_limit: c.risk_limit.unwrap_or(self.risk_limit),
                status: ContestStatus::Active,
            })
            .collect()
    }

    pub fn raire(&self) -> Result<BTreeMap<String, Vec<RaireEntry>>> {
        let mut out = BTreeMap::new();
        for c in &self.contests {
            let Some(path) = &c.raire_assertions else {
                continue;
            };
            let path = self.resolve(path);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let file = parse_raire(&bytes, &path.display().to_string())?;
            if let Some(named) = &file.contest {
                if named != &c.id {
                    return Err(Error::InvalidConfig(format!(
                        "{} holds assertions for {named}, not {}",
                        path.display(),
                        c.id
                    )));
                }
            }
            out.insert(c.id.clone(), file.assertions);
        }
        Ok(out)
    }

    pub fn cvr_sources(&self) -> Vec<(CvrFormat, PathBuf)> {
        self.paths
            .cvrs
            .iter()
            .map(|CvrSource { format, path }| (*format, self.resolve(path)))
            .collect()
    }

    /// Read every input file named by the configuration.
    pub fn inputs(&self) -> Result<AuditInputs> {
        let sources = self.cvr_sources();
        if sources.is_empty() {
            return Err(Error::InvalidConfig("no CVR files configured".into()));
        }
        let (cvrs, parse_report) =
            parse_cvr_sources(sources.iter().map(|(f, p)| (*f, p.as_path())))?;
        let manifest = match &self.paths.manifest {
            Some(p) => Some(parse_manifest(&self.resolve(p))?),
            None => None,
        };
        let spec = self.spec();
        spec.check(false)?;
        Ok(AuditInputs {
            spec,
            contests: self.contests(),
            raire: self.raire()?,
            cvrs,
            parse_report,
            manifest,
        })
    }
}
