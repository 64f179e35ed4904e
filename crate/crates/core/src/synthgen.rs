//! Synthetic intersection scenes.
//!
//! A scene is one street corner. Pedestrians walk along the sidewalk beside
//! the second curb towards the corner, then either
//!
//! * `continue-straight`: keep going and cross the street beyond the first curb,
//! * `cross-left`: turn left around the corner onto the first curb's sidewalk,
//! * `cross-right`: turn right and cross the street beyond the second curb.
//!
//! Each intent keeps its own lateral distance from the curb while
//! approaching, so the observed part of a track carries some evidence of
//! where it is headed. Paths are piecewise linear with blended corners;
//! positions are sampled at a constant per-pedestrian speed and jittered
//! with independent Gaussian noise.

use std::path::Path;

use nalgebra::{Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CurbsideFrame;
use crate::trajectory::{Dataset, Split, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Intent {
    #[serde(rename = "continue-straight")]
    Straight,
    #[serde(rename = "cross-left")]
    Left,
    #[serde(rename = "cross-right")]
    Right,
}

impl Intent {
    pub const ALL: [Intent; 3] = [Intent::Straight, Intent::Left, Intent::Right];

    pub fn name(&self) -> &'static str {
        match self {
            Intent::Straight => "continue-straight",
            Intent::Left => "cross-left",
            Intent::Right => "cross-right",
        }
    }

    pub fn from_name(s: &str) -> Option<Intent> {
        Intent::ALL.into_iter().find(|i| i.name() == s)
    }
}

/// One value per intent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerIntent {
    #[serde(rename = "continue-straight")]
    pub straight: f64,
    #[serde(rename = "cross-left")]
    pub left: f64,
    #[serde(rename = "cross-right")]
    pub right: f64,
}

impl PerIntent {
    pub fn get(&self, intent: Intent) -> f64 {
        match intent {
            Intent::Straight => self.straight,
            Intent::Left => self.left,
            Intent::Right => self.right,
        }
    }
}

/// How crosswalks run across the street.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrosswalkStyle {
    /// Continue the approach direction, parallel to the other curb.
    #[default]
    AlongCurb,
    /// Cross at right angles to the curb being crossed.
    Perpendicular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default = "default_name")]
    pub name: String,
    /// Corner position in the local frame, meters.
    pub corner: [f64; 2],
    /// Direction of the first curb, degrees counter-clockwise from local +x.
    pub curb1_heading_deg: f64,
    /// Angle from the first curb to the second, degrees.
    pub alpha_deg: f64,
    /// Nominal walking distance from the curb, meters.
    #[serde(default = "default_offset")]
    pub sidewalk_offset: f64,
    /// Approach-lane distance from the curb per intent, as multiples of `sidewalk_offset`.
    #[serde(default = "default_lanes")]
    pub intent_lanes: PerIntent,
    #[serde(default)]
    pub crosswalks: CrosswalkStyle,
    /// Range of the distance walked before reaching the turning point, meters.
    #[serde(default = "default_approach")]
    pub approach_length: [f64; 2],
    /// Distance walked after the last turn, meters.
    #[serde(default = "default_exit")]
    pub exit_length: f64,
    /// Path length replaced by a smooth curve at each turn, meters.
    #[serde(default = "default_blend")]
    pub corner_blend: f64,
    pub intent_mix: PerIntent,
    #[serde(default = "default_speed_mean")]
    pub speed_mean: f64,
    #[serde(default = "default_speed_sd")]
    pub speed_sd: f64,
    #[serde(default = "default_noise")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "scene".into()
}
fn default_offset() -> f64 {
    1.5
}
fn default_lanes() -> PerIntent {
    PerIntent {
        straight: 1.0,
        left: 1.6,
        right: 0.5,
    }
}
fn default_approach() -> [f64; 2] {
    [4.0, 5.0]
}
fn default_exit() -> f64 {
    14.0
}
fn default_blend() -> f64 {
    2.0
}
fn default_speed_mean() -> f64 {
    1.4
}
fn default_speed_sd() -> f64 {
    0.2
}
fn default_noise() -> f64 {
    0.15
}

const MIN_SPEED: f64 = 0.3;

impl SceneSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec: SceneSpec = serde_json::from_reader(std::fs::File::open(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let mix = [self.intent_mix.straight, self.intent_mix.left, self.intent_mix.right];
        if mix.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad(format!("intent proportions must be non-negative: {mix:?}"));
        }
        if (mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("intent proportions must sum to 1: {mix:?}"));
        }
        if !(self.alpha_deg > 0.0 && self.alpha_deg < 180.0) {
            return bad(format!("alpha must lie in (0, 180) degrees, got {}", self.alpha_deg));
        }
        if !(self.speed_mean > 0.0 && self.speed_sd >= 0.0) {
            return bad("speed mean must be positive and sd non-negative".into());
        }
        if !(self.noise_sd >= 0.0 && self.sidewalk_offset > 0.0) {
            return bad("noise must be non-negative and sidewalk offset positive".into());
        }
        let lanes = [self.intent_lanes.straight, self.intent_lanes.left, self.intent_lanes.right];
        if lanes.iter().any(|l| l.is_nan() || *l <= 0.0) {
            return bad("intent lanes must be positive".into());
        }
        let [lo, hi] = self.approach_length;
        if !(lo > 0.0 && hi >= lo && self.exit_length > 0.0 && self.corner_blend >= 0.0) {
            return bad("path lengths must be positive".into());
        }
        self.frame().map(|_| ())
    }

    pub fn frame(&self) -> Result<CurbsideFrame> {
        CurbsideFrame::from_heading(
            Point2::from(self.corner),
            self.curb1_heading_deg.to_radians(),
            self.alpha_deg.to_radians(),
        )
    }

    /// Waypoints (before corner blending) for an intent, given the
    /// approach length.
    pub fn waypoints(&self, intent: Intent, approach: f64) -> Result<Vec<Point2<f64>>> {
        let f = self.frame()?;
        let sin = f.alpha().sin();
        let (e1, e2) = (f.e1(), f.e2());
        // Unit normals pointing from each curb into the sidewalk.
        let n1 = (e2 - e1 * e1.dot(&e2)).normalize();
        let n2 = (e1 - e2 * e2.dot(&e1)).normalize();
        // Contravariant coordinate of a lane at metric distance d from a curb.
        let lane = self.sidewalk_offset * self.intent_lanes.get(intent) / sin;
        let turn = self.sidewalk_offset / sin;
        let at = |u: f64, w: f64| f.from_curbside(Point2::new(u, w));
        let start = at(lane, turn + approach);
        let exit = self.exit_length;
        let pts = match intent {
            Intent::Straight => {
                let curb = at(lane, 0.0);
                let dir = match self.crosswalks {
                    CrosswalkStyle::AlongCurb => -e2,
                    CrosswalkStyle::Perpendicular => -n1,
                };
                vec![start, curb, curb + dir * exit]
            }
            Intent::Left => {
                let corner = at(lane, turn);
                vec![start, corner, corner + e1 * exit]
            }
            Intent::Right => {
                let corner = at(lane, turn);
                let curb = at(0.0, turn);
                let dir = match self.crosswalks {
                    CrosswalkStyle::AlongCurb => -e1,
                    CrosswalkStyle::Perpendicular => -n2,
                };
                vec![start, corner, curb, curb + dir * exit]
            }
        };
        Ok(pts)
    }
}

/// Replaces each interior vertex by a quadratic Bézier spanning up to
/// `blend` meters of path, returning a dense polyline.
pub fn blend_corners(vertices: &[Point2<f64>], blend: f64) -> Vec<Point2<f64>> {
    const SUBDIV: usize = 12;
    if vertices.len() < 3 || blend <= 0.0 {
        return vertices.to_vec();
    }
    let mut out = vec![vertices[0]];
    for i in 1..vertices.len() - 1 {
        let (a, v, b) = (vertices[i - 1], vertices[i], vertices[i + 1]);
        let (la, lb) = ((a - v).norm(), (b - v).norm());
        let cut = (0.5 * blend).min(0.5 * la).min(0.5 * lb);
        if cut <= 0.0 {
            out.push(v);
            continue;
        }
        let q0 = v + (a - v) * (cut / la);
        let q1 = v + (b - v) * (cut / lb);
        for k in 0..=SUBDIV {
            let s = k as f64 / SUBDIV as f64;
            let p = q0.coords * (1.0 - s).powi(2) + v.coords * (2.0 * s * (1.0 - s)) + q1.coords * s * s;
            out.push(Point2::from(p));
        }
    }
    out.push(*vertices.last().expect("at least 3 vertices"));
    out
}

/// Piecewise-linear path parameterized by arc length.
#[derive(Debug, Clone)]
pub struct Path2 {
    points: Vec<Point2<f64>>,
    cumulative: Vec<f64>,
}

impl Path2 {
    pub fn new(points: Vec<Point2<f64>>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                acc += (p - points[i - 1]).norm();
            }
            cumulative.push(acc);
        }
        Path2 { points, cumulative }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    pub fn at(&self, s: f64) -> Point2<f64> {
        let s = s.clamp(0.0, self.length());
        let i = self.cumulative.partition_point(|&c| c < s).clamp(1, self.points.len() - 1);
        let (c0, c1) = (self.cumulative[i - 1], self.cumulative[i]);
        let w = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
        self.points[i - 1] + (self.points[i] - self.points[i - 1]) * w
    }

    /// Euclidean distance from `p` to the nearest point of the path.
    pub fn distance(&self, p: Point2<f64>) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                let len2 = d.norm_squared();
                let t = if len2 > 0.0 {
                    ((p - w[0]).dot(&d) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (p - (w[0] + d * t)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// A generated track with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticTrack {
    pub trajectory: Trajectory,
    pub intent: Intent,
    pub path: Path2,
}

fn track_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample_intent(mix: &PerIntent, u: f64) -> Intent {
    let mut acc = 0.0;
    for intent in Intent::ALL {
        acc += mix.get(intent);
        if u < acc {
            return intent;
        }
    }
    // Rounding at the top end: last intent with positive weight.
    Intent::ALL
        .into_iter()
        .rev()
        .find(|i| mix.get(*i) > 0.0)
        .unwrap_or(Intent::Straight)
}

/// Generates `n` tracks with ground truth. Track `i` depends only on
/// `(scene, scene.seed, i, dt)`.
pub fn generate_tracks(scene: &SceneSpec, n: usize, dt: f64) -> Result<Vec<SyntheticTrack>> {
    scene.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let speed = Normal::new(scene.speed_mean, scene.speed_sd)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let noise = Normal::new(0.0, scene.noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(track_seed(scene.seed, i as u64));
            let intent = sample_intent(&scene.intent_mix, rng.random::<f64>());
            let [lo, hi] = scene.approach_length;
            let approach = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let v = speed.sample(&mut rng).max(MIN_SPEED);
            let path = Path2::new(blend_corners(
                &scene.waypoints(intent, approach)?,
                scene.corner_blend,
            ));
            let steps = (path.length() / (v * dt)).floor() as usize;
            let positions: Vec<Point2<f64>> = (0..=steps)
                .map(|k| {
                    let p = path.at(k as f64 * v * dt);
                    p + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng))
                })
                .collect();
            let id = format!("{}-{}-{:04}", scene.name, scene.seed, i);
            let trajectory = Trajectory::from_positions(id, dt, 0.0, positions)?
                .with_intent(Some(intent.name().to_string()));
            Ok(SyntheticTrack {
                trajectory,
                intent,
                path,
            })
        })
        .collect()
}

pub fn generate(scene: &SceneSpec, n: usize, dt: f64) -> Result<Dataset> {
    let tracks = generate_tracks(scene, n, dt)?;
    Dataset::new(
        scene.frame()?,
        tracks.into_iter().map(|t| t.trajectory).collect(),
        Split::Train,
    )
}

/// Built-in scene with orthogonal curbs.
pub fn scene_a() -> SceneSpec {
    SceneSpec {
        name: "A".into(),
        corner: [6.0, 4.0],
        curb1_heading_deg: 35.0,
        alpha_deg: 90.0,
        sidewalk_offset: default_offset(),
        intent_lanes: default_lanes(),
        crosswalks: CrosswalkStyle::AlongCurb,
        approach_length: default_approach(),
        exit_length: default_exit(),
        corner_blend: default_blend(),
        intent_mix: PerIntent {
            straight: 0.4,
            left: 0.3,
            right: 0.3,
        },
        speed_mean: default_speed_mean(),
        speed_sd: default_speed_sd(),
        noise_sd: default_noise(),
        seed: 1,
    }
}

/// Built-in scene with a 60° corner.
pub fn scene_b() -> SceneSpec {
    SceneSpec {
        name: "B".into(),
        corner: [-5.0, 8.0],
        curb1_heading_deg: 110.0,
        alpha_deg: 60.0,
        intent_mix: PerIntent {
            straight: 0.35,
            left: 0.35,
            right: 0.3,
        },
        seed: 2,
        ..scene_a()
    }
}
