use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::{BcConfig, RlSchedule, SacConfig};
use crate::error::{Error, Result};
use crate::scenario::{generate_suite, Scenario, ScenarioKind};
use crate::simulator::SimConfig;

/// A directory of scene files, or a generator recipe when `dir` is unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub kinds: Vec<ScenarioKind>,
    pub count: usize,
    pub seed: u64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self::generated(12, 0)
    }
}

impl SuiteSpec {
    pub fn generated(count: usize, seed: u64) -> Self {
        Self {
            dir: None,
            kinds: ScenarioKind::ALL.to_vec(),
            count,
            seed,
        }
    }

    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            ..Self::default()
        }
    }

    /// Scenes in file-name order, or the generated suite.
    pub fn load(&self) -> Result<Vec<Arc<Scenario>>> {
        match &self.dir {
            Some(dir) => load_dir(dir),
            None => {
                if self.kinds.is_empty() || self.count == 0 {
                    return Err(Error::Config(
                        "a generated suite needs kinds and a positive count".into(),
                    ));
                }
                Ok(generate_suite(&self.kinds, self.count, self.seed)
                    .into_iter()
                    .map(Arc::new)
                    .collect())
            }
        }
    }
}

/// Every `*.json` scene under `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<Arc<Scenario>>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!(
            "no scene files in {}",
            dir.display()
        )));
    }
    files
        .iter()
        .map(|p| Scenario::load(p).map(Arc::new))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointChoice {
    /// Best validation row.
    Best,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub seed: u64,
    pub parallel: bool,
    pub checkpoint: CheckpointChoice,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            parallel: true,
            checkpoint: CheckpointChoice::Best,
        }
    }
}

/// Everything a command needs; written back as `config.toml` next to its
/// outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Teacher checkpoint for RL; `<out_dir>/teacher.json` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher: Option<PathBuf>,
    /// Training and test scenes.
    pub scenarios: SuiteSpec,
    /// Scenes scored during RL for checkpoint selection.
    pub validation: SuiteSpec,
    pub sim: SimConfig,
    pub bc: BcConfig,
    pub rl: SacConfig,
    pub schedule: RlSchedule,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            teacher: None,
            scenarios: SuiteSpec::default(),
            validation: SuiteSpec::generated(6, 1000),
            sim: SimConfig::default(),
            bc: BcConfig::default(),
            rl: SacConfig::default(),
            schedule: RlSchedule::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| toml_error(text, origin, String::new(), e))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            toml_error(text, origin, field, e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.bc.validate()?;
        self.rl.resolved()?;
        Ok(())
    }

    /// Copy with the `(w_h, w_kl)` form folded into `tau` and `alpha`.
    pub fn resolved(&self) -> Result<Self> {
        self.validate()?;
        let mut c = self.clone();
        c.rl = c.rl.resolved()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs are plain data")
    }

    pub fn teacher_path(&self) -> PathBuf {
        self.teacher
            .clone()
            .unwrap_or_else(|| self.out_dir.join("teacher.json"))
    }
}

fn toml_error(text: &str, origin: &str, field: String, e: toml::de::Error) -> Error {
    let line = e.span().map_or(0, |s| {
        text[..s.start.min(text.len())].matches('\n').count() + 1
    });
    Error::Parse {
        path: origin.to_string(),
        line,
        field,
        message: e.message().to_string(),
    }
}
