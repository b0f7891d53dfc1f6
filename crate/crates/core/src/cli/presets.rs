//! Tuned configurations for the standard benchmarks.
//!
//! Lorenz-96 and VAR presets simulate their data; the NetSim and DREAM-3
//! presets expect a converted CSV named by `dataset.file.series_path`.

use crate::datagen::{Lorenz96Config, VarConfig};
use crate::error::{Error, Result};
use crate::ingest::DatasetManifest;
use crate::model::{ModelKind, ModelSpec, ScaleSet};
use crate::optim::TrainConfig;

use super::config::{DatasetBlock, EvalBlock, ExperimentConfig, SweepBlock};

pub const PRESET_NAMES: [&str; 10] = [
    "lorenz_f10_esru",
    "lorenz_f40_esru",
    "var_esru",
    "netsim_esru",
    "dream3_esru",
    "lorenz_f10_sru",
    "lorenz_f40_sru",
    "var_sru",
    "netsim_sru",
    "dream3_sru",
];

struct Row {
    scales: &'static [f64],
    step_size: f64,
    ridge: f64,
    lambda1: [f64; 2],
    lambda2: f64,
    stage2_layers: usize,
    segment_length: usize,
    epochs: usize,
}

fn esru_row(name: &str) -> Option<Row> {
    const STD: &[f64] = &[0.0, 0.01, 0.1, 0.99];
    let lorenz = |ridge, lambda2| Row {
        scales: STD,
        step_size: 0.01,
        ridge,
        lambda1: [0.03162, 0.1],
        lambda2,
        stage2_layers: 2,
        segment_length: 125,
        epochs: 2000,
    };
    Some(match name {
        "lorenz_f10" => lorenz(0.001, 0.232079),
        "lorenz_f40" => lorenz(0.043088, 0.928318),
        "var" => Row { ridge: 0.021544, lambda1: [0.03162, 0.3162], lambda2: 0.464159, ..lorenz(0.0, 0.0) },
        "dream3" => Row {
            scales: &[0.05, 0.1, 0.2, 0.99],
            step_size: 0.001,
            ridge: 0.1,
            lambda1: [0.1, 3.162],
            lambda2: 1.0,
            stage2_layers: 1,
            segment_length: 21,
            epochs: 2000,
        },
        "netsim" => Row {
            scales: STD,
            step_size: 0.001,
            ridge: 0.232,
            lambda1: [0.1, 3.162],
            lambda2: 0.005,
            stage2_layers: 2,
            segment_length: 5,
            epochs: 2000,
        },
        _ => return None,
    })
}

fn sru_row(name: &str) -> Option<Row> {
    const STD: &[f64] = &[0.0, 0.01, 0.1, 0.99];
    let base = |step_size, ridge, lambda1| Row {
        scales: STD,
        step_size,
        ridge,
        lambda1,
        lambda2: 0.0,
        stage2_layers: 0,
        segment_length: 125,
        epochs: 2000,
    };
    Some(match name {
        "lorenz_f10" => base(0.005, 0.021544, [0.1, 1.0]),
        "lorenz_f40" => base(0.01, 0.464159, [0.0631, 1.0]),
        "var" => base(0.04, 0.021544, [0.001, 1.0]),
        "dream3" => Row {
            scales: &[0.0, 0.01, 0.1, 0.5, 0.99],
            segment_length: 21,
            epochs: 1000,
            ..base(0.005, 0.2, [0.01, 1.0])
        },
        "netsim" => Row { segment_length: 5, ..base(0.001, 0.464159, [0.1, 3.162]) },
        _ => return None,
    })
}

/// The named preset, or an error listing the valid names.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let unknown = || Error::Config(format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", ")));
    let (dataset, kind) = name
        .rsplit_once('_')
        .ok_or_else(unknown)?;
    let (row, kind) = match kind {
        "esru" => (esru_row(dataset), ModelKind::Esru),
        "sru" => (sru_row(dataset), ModelKind::Sru),
        _ => (None, ModelKind::Esru),
    };
    let row = row.ok_or_else(unknown)?;

    let block = match dataset {
        "lorenz_f10" | "lorenz_f40" => DatasetBlock {
            lorenz96: Some(Lorenz96Config {
                forcing: if dataset == "lorenz_f10" { 10.0 } else { 40.0 },
                samples: 500,
                ..Default::default()
            }),
            ..DatasetBlock::default()
        },
        "var" => DatasetBlock {
            var3: Some(VarConfig { samples: 1000, ..Default::default() }),
            ..DatasetBlock::default()
        },
        _ => DatasetBlock {
            file: Some(DatasetManifest::new("")),
            ..DatasetBlock::default()
        },
    };
    let block = DatasetBlock { standardize: true, ..block };

    Ok(ExperimentConfig {
        dataset: block,
        model: ModelSpec {
            kind,
            scales: ScaleSet::new(row.scales.to_vec())?,
            stage2_layers: if kind == ModelKind::Esru { row.stage2_layers } else { ModelSpec::default().stage2_layers },
            ..ModelSpec::default()
        },
        train: TrainConfig {
            lambda1: row.lambda1[0],
            lambda2: row.lambda2,
            ridge: row.ridge,
            step_size: row.step_size,
            epochs: row.epochs,
            segment_length: row.segment_length,
            ..TrainConfig::default()
        },
        sweep: SweepBlock { range: Some(row.lambda1), count: Some(super::config::DEFAULT_GRID_POINTS), ..SweepBlock::default() },
        eval: EvalBlock { exclude_self: dataset == "dream3", ..EvalBlock::default() },
        run: Default::default(),
    })
}
