//! Training and prediction.
//!
//! Training maps every trajectory into the training intersection's curbside
//! frame, learns motion primitives there, and fits one flow field per
//! observed primitive transition. Prediction maps an observation into the
//! *test* intersection's curbside frame, ranks the flow fields by
//! likelihood, integrates the best few forward, and maps the rollouts back
//! into the test intersection's local frame.
//!
//! In [`Mode::Baseline`] both maps are the identity, so everything happens
//! in the raw local coordinates.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::config::{Mode, PipelineConfig};
use crate::error::{Error, Result};
use crate::geometry::CurbsideFrame;
use crate::gp::{pattern_log_likelihood, MotionPattern};
use crate::sparse_coding::{
    build_transitions, featurize, learn_dictionary, segment, Dictionary, GridSpec, Segmentation,
    TransitionMatrix,
};
use crate::trajectory::{steps_for, velocities, Dataset, Kinematic, Sample, Trajectory};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TasnscModel {
    pub version: u32,
    pub config: PipelineConfig,
    /// Curbside frame of the training intersection.
    pub frame: CurbsideFrame,
    pub grid: GridSpec,
    pub dictionary: Dictionary,
    pub transitions: TransitionMatrix,
    pub patterns: Vec<MotionPattern>,
    /// Final sparse-coding objective.
    pub objective: f64,
}

impl TasnscModel {
    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: TasnscModel = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if model.version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion(model.version));
        }
        Ok(model)
    }

    /// Local frame → working frame for `frame`'s intersection.
    fn to_working(&self, frame: &CurbsideFrame, traj: &Trajectory) -> Trajectory {
        match self.mode() {
            Mode::Tasnsc => frame.transform_trajectory(traj),
            Mode::Baseline => traj.clone(),
        }
    }

    fn to_local(&self, frame: &CurbsideFrame, p: Point2<f64>) -> Point2<f64> {
        match self.mode() {
            Mode::Tasnsc => frame.from_curbside(p),
            Mode::Baseline => p,
        }
    }
}

/// Per-trajectory training by-products, kept for inspection.
#[derive(Debug, Clone)]
pub struct TrainingTrace {
    pub working: Vec<Trajectory>,
    pub segmentations: Vec<Segmentation>,
    pub history: Vec<f64>,
}

pub fn train(dataset: &Dataset, config: &PipelineConfig) -> Result<TasnscModel> {
    train_traced(dataset, config).map(|(m, _)| m)
}

pub fn train_traced(
    dataset: &Dataset,
    config: &PipelineConfig,
) -> Result<(TasnscModel, TrainingTrace)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.len() < 2 {
        return Err(Error::InvalidParameter(
            "training needs at least 2 trajectories".into(),
        ));
    }
    if let Some(t) = dataset.trajectories.iter().find(|t| t.len() < 2) {
        return Err(Error::TooShort {
            needed: 2,
            got: t.len(),
        });
    }
    let frame = dataset.frame;
    let working: Vec<Trajectory> = dataset
        .trajectories
        .iter()
        .map(|t| match config.mode {
            Mode::Tasnsc => frame.transform_trajectory(t),
            Mode::Baseline => t.clone(),
        })
        .collect();

    let grid = GridSpec::covering(
        working.iter().flat_map(|t| t.positions()),
        config.grid_cell,
        config.grid_margin_cells,
    )?;

    let mut usable = Vec::with_capacity(working.len());
    let mut features = Vec::with_capacity(working.len());
    for t in &working {
        match featurize(t, &grid) {
            Ok(f) => {
                features.push(f);
                usable.push(t.clone());
            }
            Err(Error::DegenerateMotion(id)) => {
                log::warn!("skipping stationary trajectory `{id}`");
            }
            Err(e) => return Err(e),
        }
    }
    if usable.len() < 2 {
        return Err(Error::InvalidParameter(
            "fewer than 2 trajectories with motion".into(),
        ));
    }

    let learned = learn_dictionary(&features, &config.sparse_coding())?;
    let dictionary = learned.dictionary;
    let segmentations = usable
        .iter()
        .map(|t| segment(t, &dictionary, &grid, config.min_segment_len))
        .collect::<Result<Vec<_>>>()?;
    let transitions = build_transitions(
        &segmentations.iter().map(|s| s.atoms()).collect::<Vec<_>>(),
        dictionary.k(),
    )?;

    let total = transitions.total() as f64;
    let mut patterns = Vec::new();
    for ((from, to), count) in transitions.nonzero() {
        let mut samples = Vec::new();
        for (traj, seg) in usable.iter().zip(&segmentations) {
            let kin = velocities(traj)?;
            for range in transition_ranges(seg, from, to) {
                samples.extend_from_slice(&kin[range.start..range.end.min(kin.len())]);
            }
        }
        let samples = stride_subsample(samples, config.max_pattern_points);
        if samples.is_empty() {
            continue;
        }
        patterns.push(MotionPattern::fit(
            from,
            to,
            count,
            count as f64 / total,
            &samples,
            config.kernel,
        )?);
    }

    let model = TasnscModel {
        version: MODEL_VERSION,
        config: *config,
        frame,
        grid,
        dictionary,
        transitions,
        patterns,
        objective: learned.objective,
    };
    let trace = TrainingTrace {
        working: usable,
        segmentations,
        history: learned.history,
    };
    Ok((model, trace))
}

/// Point ranges covering each occurrence of `from → to` (or the whole
/// trajectory for a single-segment self transition).
fn transition_ranges(seg: &Segmentation, from: usize, to: usize) -> Vec<std::ops::Range<usize>> {
    let s = &seg.segments;
    if s.len() == 1 {
        return if from == to && s[0].atom == from {
            std::iter::once(s[0].start..s[0].end).collect()
        } else {
            vec![]
        };
    }
    s.windows(2)
        .filter(|w| w[0].atom == from && w[1].atom == to)
        .map(|w| w[0].start..w[1].end)
        .collect()
}

fn stride_subsample(samples: Vec<Kinematic>, cap: usize) -> Vec<Kinematic> {
    if samples.len() <= cap {
        return samples;
    }
    let n = samples.len();
    (0..cap).map(|i| samples[i * n / cap]).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub pattern: (usize, usize),
    pub log_likelihood: f64,
    /// Normalized over the retained candidates.
    pub likelihood: f64,
    /// Rollout in the test intersection's local frame.
    pub trajectory: Trajectory,
    /// Posterior velocity variance (x, y) at each rollout step.
    pub variance: Vec<[f64; 2]>,
    /// The rollout left the divergence box and was held in place.
    pub diverged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionSet {
    /// Sorted by decreasing likelihood.
    pub candidates: Vec<Candidate>,
}

impl PredictionSet {
    pub fn top(&self) -> &Candidate {
        &self.candidates[0]
    }
}

/// Predicts the next `t_pred` seconds after `observed`, which is expressed in
/// the local frame of the intersection described by `test_frame`.
pub fn predict(
    model: &TasnscModel,
    test_frame: &CurbsideFrame,
    observed: &Trajectory,
) -> Result<PredictionSet> {
    let cfg = &model.config;
    if model.patterns.is_empty() {
        return Err(Error::NoPatterns);
    }
    if observed.len() < 2 || observed.duration() + 1e-9 < 2.0 * observed.dt() {
        return Err(Error::TooShort {
            needed: 3,
            got: observed.len(),
        });
    }
    let working = model.to_working(test_frame, observed);
    let kin = velocities(&working)?;

    let mut scored: Vec<(usize, f64)> = model
        .patterns
        .iter()
        .enumerate()
        .map(|(i, p)| (i, pattern_log_likelihood(p, &kin)))
        .collect();
    // Highest first; NaN last; ties keep pattern order.
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or_else(|| a.1.is_nan().cmp(&b.1.is_nan()))
            .then(a.0.cmp(&b.0))
    });
    scored.truncate(cfg.top_m.min(scored.len()));
    let best = scored[0].1;
    let weights: Vec<f64> = scored.iter().map(|(_, s)| (s - best).exp()).collect();
    let norm: f64 = weights.iter().sum();

    let dt = observed.dt();
    let steps = steps_for(cfg.t_pred, dt);
    let last = *working.last().expect("non-empty observation");
    let last_t = observed.last().expect("non-empty observation").t;
    let (lo, hi) = divergence_box(&model.grid, cfg.divergence_scale);

    let candidates = scored
        .iter()
        .zip(&weights)
        .enumerate()
        .map(|(rank, (&(idx, ll), &w))| {
            let pattern = &model.patterns[idx];
            let rollout = roll_out(pattern, last.pos, dt, steps, lo, hi);
            let points = rollout
                .positions
                .iter()
                .enumerate()
                .map(|(k, &p)| Sample {
                    t: last_t + (k + 1) as f64 * dt,
                    pos: model.to_local(test_frame, p),
                })
                .collect();
            let trajectory =
                Trajectory::new(format!("{}#{rank}", observed.id()), dt, points)?;
            Ok(Candidate {
                pattern: (pattern.from, pattern.to),
                log_likelihood: ll,
                likelihood: w / norm,
                trajectory,
                variance: rollout.variance,
                diverged: rollout.diverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSet { candidates })
}

fn divergence_box(grid: &GridSpec, scale: f64) -> (Point2<f64>, Point2<f64>) {
    let center = Point2::new(0.5 * (grid.x_min + grid.x_max), 0.5 * (grid.y_min + grid.y_max));
    let half = Vector2::new(grid.x_max - grid.x_min, grid.y_max - grid.y_min) * (0.5 * scale);
    (center - half, center + half)
}

struct Rollout {
    positions: Vec<Point2<f64>>,
    variance: Vec<[f64; 2]>,
    diverged: bool,
}

/// Euler integration of the pattern's posterior-mean flow.
fn roll_out(
    pattern: &MotionPattern,
    start: Point2<f64>,
    dt: f64,
    steps: usize,
    lo: Point2<f64>,
    hi: Point2<f64>,
) -> Rollout {
    let mut positions = Vec::with_capacity(steps);
    let mut variance = Vec::with_capacity(steps);
    let mut p = start;
    let mut diverged = false;
    for _ in 0..steps {
        if !diverged {
            let (mean, var) = pattern.velocity_posterior(p);
            let next = p + mean * dt;
            let inside = next.x >= lo.x && next.x <= hi.x && next.y >= lo.y && next.y <= hi.y;
            if inside && next.x.is_finite() && next.y.is_finite() {
                p = next;
                variance.push([var.x, var.y]);
            } else {
                diverged = true;
            }
        }
        if diverged {
            let prior = pattern.gp_x.kernel().prior_variance();
            variance.push([prior, prior]);
        }
        positions.push(p);
    }
    Rollout {
        positions,
        variance,
        diverged,
    }
}
