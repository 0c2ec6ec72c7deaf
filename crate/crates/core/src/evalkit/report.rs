use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SceneResult;
use crate::error::{Error, Result};

/// Aggregates over scenes. `mu_*` are per-scene totals divided by the number
/// of scenes; `*_ge_*` and `failure` count scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenes: usize,
    pub mu_ade: f64,
    pub mu_d2r: f64,
    pub d2r_ge_4m: usize,
    pub mu_cl: f64,
    pub cl_ge_1: usize,
    pub mu_acc: f64,
    pub acc_ge_2: usize,
    pub failure: usize,
    pub mu_cf: f64,
    pub mu_cr: f64,
    pub mu_cs: f64,
    pub cf_ge_1: usize,
    pub cr_ge_1: usize,
    pub cs_ge_1: usize,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenes: Vec<SceneResult>,
}

impl EvalReport {
    pub fn new(scenes: Vec<SceneResult>) -> Self {
        Self { scenes }
    }

    pub fn summary(&self) -> Summary {
        let n = self.scenes.len().max(1) as f64;
        let mean = |f: &dyn Fn(&SceneResult) -> f64| self.scenes.iter().map(f).sum::<f64>() / n;
        let count = |f: &dyn Fn(&SceneResult) -> bool| self.scenes.iter().filter(|s| f(s)).count();
        Summary {
            scenes: self.scenes.len(),
            mu_ade: mean(&|s| s.ade),
            mu_d2r: mean(&|s| s.d2r_mean),
            d2r_ge_4m: count(&|s| s.d2r_event),
            mu_cl: mean(&|s| s.collision_frames as f64),
            cl_ge_1: count(&|s| s.cl_event),
            mu_acc: mean(&|s| s.discomfort_rate),
            acc_ge_2: count(&|s| s.acc_event),
            failure: count(&|s| s.failure),
            mu_cf: mean(&|s| s.front_frames as f64),
            mu_cr: mean(&|s| s.rear_frames as f64),
            mu_cs: mean(&|s| s.side_frames as f64),
            cf_ge_1: count(&|s| s.cf_event),
            cr_ge_1: count(&|s| s.cr_event),
            cs_ge_1: count(&|s| s.cs_event),
            mean_return: mean(&|s| s.episode_return),
        }
    }

    /// One row per scene, then an `aggregate` row holding the summary means
    /// and event counts.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.scenes {
            w.serialize(s)?;
        }
        if self.scenes.is_empty() {
            w.write_record(HEADER)?;
        }
        let m = self.summary();
        let row = [
            "aggregate".to_string(),
            self.scenes
                .iter()
                .map(|s| s.frames)
                .sum::<usize>()
                .to_string(),
            m.mu_ade.to_string(),
            m.mu_d2r.to_string(),
            self.scenes
                .iter()
                .map(|s| s.d2r_max)
                .fold(0.0, f64::max)
                .to_string(),
            m.d2r_ge_4m.to_string(),
            m.mu_cl.to_string(),
            m.mu_cf.to_string(),
            m.mu_cs.to_string(),
            m.mu_cr.to_string(),
            m.cl_ge_1.to_string(),
            m.cf_ge_1.to_string(),
            m.cs_ge_1.to_string(),
            m.cr_ge_1.to_string(),
            m.mu_acc.to_string(),
            m.acc_ge_2.to_string(),
            m.failure.to_string(),
            m.mean_return.to_string(),
        ];
        w.write_record(&row)?;
        let bytes = w
            .into_inner()
            .map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary()).expect("plain data");
        s.push('\n');
        s
    }

    /// Writes `report.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("report.csv");
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join("report.json");
        std::fs::write(&json_path, self.summary_json()).map_err(|e| Error::io(&json_path, e))?;
        Ok(())
    }
}

const HEADER: [&str; 18] = [
    "scene",
    "frames",
    "ade",
    "d2r_mean",
    "d2r_max",
    "d2r_event",
    "collision_frames",
    "front_frames",
    "side_frames",
    "rear_frames",
    "cl_event",
    "cf_event",
    "cs_event",
    "cr_event",
    "discomfort_rate",
    "acc_event",
    "failure",
    "episode_return",
];
