use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datagen::{Lorenz96Config, VarConfig};
use crate::error::{Error, Result};
use crate::infer::log_grid;
use crate::ingest::DatasetManifest;
use crate::model::ModelSpec;
use crate::optim::TrainConfig;

use super::presets;

/// Where the series come from. Exactly one source must be set. `standardize`
/// applies to generated data; file manifests carry their own flag.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lorenz96: Option<Lorenz96Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var3: Option<VarConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<DatasetManifest>,
    #[serde(default = "yes")]
    pub standardize: bool,
}

pub(crate) const SOURCE_KEYS: [&str; 3] = ["lorenz96", "var3", "file"];

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    /// Explicit lambda1 values; overrides `range`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    pub warm_start: bool,
}

pub const DEFAULT_GRID_POINTS: usize = 20;

impl SweepBlock {
    pub fn resolve_grid(&self) -> Result<Vec<f64>> {
        match (&self.grid, &self.range) {
            (Some(_), Some(_)) => Err(Error::Config("sweep: give either grid or range, not both".into())),
            (Some(g), None) => Ok(g.clone()),
            (None, Some([lo, hi])) => log_grid(*lo, *hi, self.count.unwrap_or(DEFAULT_GRID_POINTS))
                .map_err(|e| Error::Config(format!("sweep.range: {e}"))),
            (None, None) => Err(Error::Config("sweep: grid or range is required".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalBlock {
    pub enabled: bool,
    pub exclude_self: bool,
    /// Truth for file datasets when the manifest has none.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_path: Option<PathBuf>,
    pub anchors: bool,
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock { enabled: true, exclude_self: false, truth_path: None, anchors: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    /// Model seed; replaces `train.seed`.
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock { seed: 0, workers: 1, out_dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetBlock,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub eval: EvalBlock,
    #[serde(default)]
    pub run: RunBlock,
}

/// Command-line values that take precedence over the config document.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    /// Replaces the run seed and any generator seed.
    pub seed: Option<u64>,
}

/// Recursive JSON merge: objects merge key by key, anything else replaces.
/// Naming a dataset source in `overlay` drops the other sources of `base`.
pub fn merge(base: &mut Value, overlay: Value) {
    merge_at(base, overlay, 0, false);
}

fn merge_at(base: &mut Value, overlay: Value, depth: usize, in_dataset: bool) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            if in_dataset && SOURCE_KEYS.iter().any(|k| o.contains_key(*k)) {
                for k in SOURCE_KEYS {
                    if !o.contains_key(k) {
                        b.remove(k);
                    }
                }
            }
            for (k, v) in o {
                let child_is_dataset = depth == 0 && k == "dataset";
                match b.get_mut(&k) {
                    Some(slot) => merge_at(slot, v, depth + 1, child_is_dataset),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Builds a config from an optional preset, an optional JSON file layered
    /// on top of it, and command-line overrides. Relative paths in a file
    /// config are taken relative to that file.
    pub fn load(preset: Option<&str>, config_path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut doc = match preset {
            Some(name) => serde_json::to_value(presets::preset(name)?)?,
            None => Value::Object(Default::default()),
        };
        let mut base_dir = None;
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let overlay: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut doc, overlay);
            base_dir = path.parent().map(Path::to_path_buf);
        }
        if preset.is_none() && config_path.is_none() {
            return Err(Error::Config("give --config, --preset or both".into()));
        }
        let mut cfg: ExperimentConfig =
            serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(dir) = base_dir {
            cfg.resolve_paths(&dir);
        }
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let Some(m) = &self.dataset.file {
            self.dataset.file = Some(m.resolve(base));
        }
        if let Some(p) = &self.eval.truth_path {
            if p.is_relative() {
                self.eval.truth_path = Some(base.join(p));
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dir) = &o.out_dir {
            self.run.out_dir = dir.clone();
        }
        if let Some(w) = o.workers {
            self.run.workers = w;
        }
        if let Some(seed) = o.seed {
            self.run.seed = seed;
            if let Some(l) = &mut self.dataset.lorenz96 {
                l.seed = seed;
            }
            if let Some(v) = &mut self.dataset.var3 {
                v.seed = seed;
            }
        }
        self.train.seed = self.run.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let sources = [self.dataset.lorenz96.is_some(), self.dataset.var3.is_some(), self.dataset.file.is_some()]
            .iter()
            .filter(|&&s| s)
            .count();
        if sources != 1 {
            return Err(Error::Config(format!(
                "dataset: exactly one of lorenz96, var3, file must be given ({sources} found)"
            )));
        }
        if let Some(l) = &self.dataset.lorenz96 {
            l.validate().map_err(|e| Error::Config(format!("dataset.lorenz96: {e}")))?;
        }
        if let Some(v) = &self.dataset.var3 {
            v.validate().map_err(|e| Error::Config(format!("dataset.var3: {e}")))?;
        }
        if let Some(f) = &self.dataset.file {
            if f.series_path.as_os_str().is_empty() {
                return Err(Error::Config("dataset.file.series_path must be set".into()));
            }
        }
        self.model.validate().map_err(|e| Error::Config(format!("model: {e}")))?;
        self.train.validate().map_err(|e| Error::Config(format!("train: {e}")))?;
        if self.run.workers == 0 {
            return Err(Error::Config("run.workers must be at least 1".into()));
        }
        if self.sweep.grid.is_some() || self.sweep.range.is_some() {
            self.sweep.resolve_grid()?;
        }
        Ok(())
    }

    /// Truth file for a file dataset: `eval.truth_path`, else the manifest's.
    pub fn truth_file(&self) -> Option<&Path> {
        self.eval
            .truth_path
            .as_deref()
            .or_else(|| self.dataset.file.as_ref().and_then(|f| f.truth_path.as_deref()))
    }
}
