//! Trajectory data model and dataset I/O.
//!
//! Datasets are stored as JSON lines, one trajectory per line:
//! `{"id":"...","dt":0.5,"points":[[t,x,y],...]}`. Synthetic data adds an
//! optional `"intent"` tag.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CurbsideFrame;

/// Allowed deviation of a timestamp gap from `dt`.
pub const DT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub pos: Point2<f64>,
}

impl Sample {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Sample {
            t,
            pos: Point2::new(x, y),
        }
    }
}

/// Position and forward-difference velocity at one trajectory point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematic {
    pub pos: Point2<f64>,
    pub vel: Vector2<f64>,
}

/// A timestamped 2-D track with nominal sampling interval `dt`.
///
/// Timestamps are always strictly increasing. Uniform spacing is checked
/// separately by [`Trajectory::check_uniform`], since raw input may need
/// [`resample`] first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryRecord", into = "TrajectoryRecord")]
pub struct Trajectory {
    id: String,
    dt: f64,
    points: Vec<Sample>,
    intent: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajectoryRecord {
    id: String,
    dt: f64,
    points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intent: Option<String>,
}

impl TryFrom<TrajectoryRecord> for Trajectory {
    type Error = Error;

    fn try_from(rec: TrajectoryRecord) -> Result<Self> {
        let points = rec
            .points
            .iter()
            .map(|&[t, x, y]| Sample::new(t, x, y))
            .collect();
        let traj = Trajectory::new(rec.id, rec.dt, points)?;
        Ok(traj.with_intent(rec.intent))
    }
}

impl From<Trajectory> for TrajectoryRecord {
    fn from(traj: Trajectory) -> Self {
        TrajectoryRecord {
            points: traj
                .points
                .iter()
                .map(|s| [s.t, s.pos.x, s.pos.y])
                .collect(),
            id: traj.id,
            dt: traj.dt,
            intent: traj.intent,
        }
    }
}

impl Trajectory {
    pub fn new(id: impl Into<String>, dt: f64, points: Vec<Sample>) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: String| Error::InvalidTrajectory {
            id: id.clone(),
            reason,
        };
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        for s in &points {
            if !(s.t.is_finite() && s.pos.x.is_finite() && s.pos.y.is_finite()) {
                return Err(invalid("non-finite sample".into()));
            }
        }
        if let Some(w) = points.windows(2).find(|w| w[1].t <= w[0].t) {
            return Err(invalid(format!(
                "timestamps not strictly increasing at t={}",
                w[1].t
            )));
        }
        Ok(Trajectory {
            id,
            dt,
            points,
            intent: None,
        })
    }

    /// Uniformly sampled track starting at `t0`.
    pub fn from_positions(
        id: impl Into<String>,
        dt: f64,
        t0: f64,
        positions: impl IntoIterator<Item = Point2<f64>>,
    ) -> Result<Self> {
        let points = positions
            .into_iter()
            .enumerate()
            .map(|(k, pos)| Sample {
                t: t0 + k as f64 * dt,
                pos,
            })
            .collect();
        Self::new(id, dt, points)
    }

    pub fn with_intent(mut self, intent: Option<String>) -> Self {
        self.intent = intent;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn intent(&self) -> Option<&str> {
        self.intent.as_deref()
    }

    pub fn points(&self) -> &[Sample] {
        &self.points
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = Point2<f64>> + '_ {
        self.points.iter().map(|s| s.pos)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Option<&Sample> {
        self.points.first()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.points.last()
    }

    /// Time from first to last sample; zero for fewer than two points.
    pub fn duration(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn check_uniform(&self) -> Result<()> {
        for w in self.points.windows(2) {
            let gap = w[1].t - w[0].t;
            if (gap - self.dt).abs() > DT_TOLERANCE {
                return Err(Error::InvalidTrajectory {
                    id: self.id.clone(),
                    reason: format!("gap {gap} at t={} differs from dt={}", w[0].t, self.dt),
                });
            }
        }
        Ok(())
    }

    /// Same timestamps and metadata, positions passed through `f`.
    pub fn map_positions(&self, mut f: impl FnMut(Point2<f64>) -> Point2<f64>) -> Trajectory {
        Trajectory {
            id: self.id.clone(),
            dt: self.dt,
            points: self
                .points
                .iter()
                .map(|s| Sample { t: s.t, pos: f(s.pos) })
                .collect(),
            intent: self.intent.clone(),
        }
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Trajectory {
        Trajectory {
            id: self.id.clone(),
            dt: self.dt,
            points: self.points[range].to_vec(),
            intent: self.intent.clone(),
        }
    }
}

/// Linear interpolation onto `t0, t0+dt, ...`, dropping any final partial step.
pub fn resample(traj: &Trajectory, dt: f64) -> Result<Trajectory> {
    if traj.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: traj.len(),
        });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let pts = traj.points();
    let t0 = pts[0].t;
    let steps = ((traj.duration() + 1e-9) / dt).floor() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut seg = 0;
    for k in 0..=steps {
        let t = t0 + k as f64 * dt;
        while seg + 2 < pts.len() && pts[seg + 1].t < t {
            seg += 1;
        }
        let (a, b) = (pts[seg], pts[seg + 1]);
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let pos = if w == 0.0 {
            a.pos
        } else if w == 1.0 {
            b.pos
        } else {
            a.pos + (b.pos - a.pos) * w
        };
        out.push(Sample { t, pos });
    }
    Trajectory::new(traj.id.clone(), dt, out).map(|t| t.with_intent(traj.intent.clone()))
}

/// Forward differences `v_k = (p_{k+1} - p_k) / dt` at the first `n - 1` points.
pub fn velocities(traj: &Trajectory) -> Result<Vec<Kinematic>> {
    if traj.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: traj.len(),
        });
    }
    let dt = traj.dt();
    Ok(traj
        .points()
        .windows(2)
        .map(|w| Kinematic {
            pos: w[0].pos,
            vel: (w[1].pos - w[0].pos) / dt,
        })
        .collect())
}

/// Number of samples spanning `seconds` at interval `dt`.
pub fn steps_for(seconds: f64, dt: f64) -> usize {
    (seconds / dt).round().max(0.0) as usize
}

/// Splits off the first `t_obs` seconds as observation and the following
/// `t_pred` seconds as ground truth.
///
/// The observation holds `round(t_obs/dt)` points and the future the next
/// `round(t_pred/dt)` points.
pub fn split_horizon(
    traj: &Trajectory,
    t_obs: f64,
    t_pred: f64,
) -> Result<(Trajectory, Trajectory)> {
    if !(t_obs >= 0.0 && t_pred > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizons must satisfy t_obs >= 0 and t_pred > 0 (got {t_obs}, {t_pred})"
        )));
    }
    let n_obs = steps_for(t_obs, traj.dt());
    let n_pred = steps_for(t_pred, traj.dt());
    let needed = t_obs + t_pred;
    if traj.duration() + DT_TOLERANCE < needed || n_obs + n_pred > traj.len() {
        return Err(Error::InsufficientDuration {
            needed,
            got: traj.duration(),
        });
    }
    Ok((traj.slice(0..n_obs), traj.slice(n_obs..n_obs + n_pred)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Trajectories recorded at one intersection, all sharing `dt`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub frame: CurbsideFrame,
    pub trajectories: Vec<Trajectory>,
    pub split: Split,
}

impl Dataset {
    pub fn new(frame: CurbsideFrame, trajectories: Vec<Trajectory>, split: Split) -> Result<Self> {
        if let Some(first) = trajectories.first() {
            let dt = first.dt();
            for t in &trajectories {
                if (t.dt() - dt).abs() > DT_TOLERANCE {
                    return Err(Error::InvalidTrajectory {
                        id: t.id().to_string(),
                        reason: format!("dt {} differs from dataset dt {dt}", t.dt()),
                    });
                }
                t.check_uniform()?;
            }
        }
        Ok(Dataset {
            frame,
            trajectories,
            split,
        })
    }

    pub fn dt(&self) -> Option<f64> {
        self.trajectories.first().map(|t| t.dt())
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    read_jsonl_from(BufReader::new(File::open(path)?))
}

pub fn read_jsonl_from(reader: impl BufRead) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl_to(&mut w, trajectories)?;
    w.flush()?;
    Ok(())
}

pub fn write_jsonl_to(mut w: impl Write, trajectories: &[Trajectory]) -> Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
