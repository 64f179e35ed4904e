//! Cross-scene comparison.
//!
//! Trains the transformed and baseline pipelines on two scenes and
//! evaluates every model on both test sets, producing the rows of a
//! comparison table.

use serde::{Deserialize, Serialize};

use crate::config::{Mode, PipelineConfig};
use crate::error::Result;
use crate::metrics::{evaluate, EvalOptions, EvalReport, TableRow};
use crate::predictor::{train, TasnscModel};
use crate::synthgen::{generate, SceneSpec};
use crate::trajectory::{Dataset, Split};

/// Test splits of synthetic scenes are generated with `seed + TEST_SEED_OFFSET`.
pub const TEST_SEED_OFFSET: u64 = 1000;
pub const DEFAULT_N_TRAIN: usize = 150;
pub const DEFAULT_N_TEST: usize = 30;

/// A labelled scene: training split and test split.
#[derive(Debug, Clone)]
pub struct Scene {
    pub label: String,
    pub train: Dataset,
    pub test: Dataset,
}

impl Scene {
    /// Generates independent train and test splits for a synthetic scene.
    pub fn synthetic(spec: &SceneSpec, n_train: usize, n_test: usize, dt: f64) -> Result<Scene> {
        let mut train = generate(spec, n_train, dt)?;
        let test_spec = SceneSpec {
            seed: spec.seed.wrapping_add(TEST_SEED_OFFSET),
            ..spec.clone()
        };
        let mut test = generate(&test_spec, n_test, dt)?;
        train.split = Split::Train;
        test.split = Split::Test;
        Ok(Scene {
            label: spec.name.clone(),
            train,
            test,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareEntry {
    pub row: TableRow,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub entries: Vec<CompareEntry>,
}

impl CompareReport {
    pub fn rows(&self) -> Vec<TableRow> {
        self.entries.iter().map(|e| e.row.clone()).collect()
    }

    pub fn find(&self, algorithm: &str, train_in: &str, test_in: &str) -> Option<&CompareEntry> {
        self.entries.iter().find(|e| {
            e.row.algorithm == algorithm && e.row.train_in == train_in && e.row.test_in == test_in
        })
    }

    pub fn without_timing(&self) -> CompareReport {
        CompareReport {
            entries: self
                .entries
                .iter()
                .map(|e| CompareEntry {
                    row: TableRow { time: 0.0, ..e.row.clone() },
                    report: e.report.without_timing(),
                })
                .collect(),
        }
    }
}

pub struct TrainedScene<'a> {
    pub scene: &'a Scene,
    pub tasnsc: TasnscModel,
    pub baseline: TasnscModel,
}

pub fn train_scene<'a>(scene: &'a Scene, config: &PipelineConfig) -> Result<TrainedScene<'a>> {
    Ok(TrainedScene {
        scene,
        tasnsc: train(&scene.train, &config.with_mode(Mode::Tasnsc))?,
        baseline: train(&scene.train, &config.with_mode(Mode::Baseline))?,
    })
}

fn entry(model: &TasnscModel, train_in: &Scene, test_in: &Scene, opts: &EvalOptions) -> Result<CompareEntry> {
    let (report, _) = evaluate(model, &test_in.test, &test_in.test.frame, opts)?;
    Ok(CompareEntry {
        row: TableRow::from_report(&report, &train_in.label, &test_in.label),
        report,
    })
}

/// Six rows: for each scene, baseline and transformed in-scene, then the
/// transformed model trained on the other scene.
pub fn compare(a: &Scene, b: &Scene, config: &PipelineConfig, opts: &EvalOptions) -> Result<CompareReport> {
    let ta = train_scene(a, config)?;
    let tb = train_scene(b, config)?;
    let entries = vec![
        entry(&ta.baseline, a, a, opts)?,
        entry(&ta.tasnsc, a, a, opts)?,
        entry(&tb.tasnsc, b, a, opts)?,
        entry(&tb.baseline, b, b, opts)?,
        entry(&tb.tasnsc, b, b, opts)?,
        entry(&ta.tasnsc, a, b, opts)?,
    ];
    Ok(CompareReport { entries })
}
