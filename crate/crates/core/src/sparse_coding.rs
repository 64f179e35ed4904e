//! Motion primitives by semi-nonnegative sparse coding.
//!
//! Each trajectory is summarized as a histogram over grid cells and four
//! motion directions. A dictionary of `K` real-valued atoms is learned with
//! nonnegative codes by alternating minimization of
//!
//! ```text
//! ½‖X − D·A‖²_F + λ·ΣA    subject to A ≥ 0, ‖d_k‖ ≤ 1
//! ```
//!
//! Codes are updated by one pass of nonnegative coordinate descent, atoms by
//! block-coordinate least squares projected onto the unit ball. Both steps
//! are exact minimizations over their block, so the objective never
//! increases. Atoms are rescaled to unit norm at the end (the codes absorb
//! the scale).
//!
//! Learned atoms then split trajectories into contiguous segments, and
//! adjacent segment pairs populate the transition matrix.

use nalgebra::{DMatrix, DVector, Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

pub const CHANNELS: usize = 4;

/// Dominant motion direction of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    PosX = 0,
    NegX = 1,
    PosY = 2,
    NegY = 3,
}

impl Channel {
    /// `None` for a zero step. Ties between |vx| and |vy| go to x.
    pub fn of(v: Vector2<f64>) -> Option<Channel> {
        if v.x == 0.0 && v.y == 0.0 {
            return None;
        }
        Some(if v.x.abs() >= v.y.abs() {
            if v.x > 0.0 {
                Channel::PosX
            } else {
                Channel::NegX
            }
        } else if v.y > 0.0 {
            Channel::PosY
        } else {
            Channel::NegY
        })
    }
}

/// Axis-aligned grid discretizing the working frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell: f64,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, cell: f64) -> Result<Self> {
        let g = GridSpec {
            x_min,
            x_max,
            y_min,
            y_max,
            cell,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max, self.cell]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.cell <= 0.0 || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::InvalidParameter(format!("invalid grid {self:?}")));
        }
        Ok(())
    }

    /// Smallest cell-aligned grid covering `points`, padded by `margin_cells` on every side.
    pub fn covering(
        points: impl IntoIterator<Item = Point2<f64>>,
        cell: f64,
        margin_cells: usize,
    ) -> Result<Self> {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        if !(lo.x.is_finite() && hi.x.is_finite()) {
            return Err(Error::EmptyDataset);
        }
        let pad = margin_cells as f64 * cell;
        let x_min = (lo.x / cell).floor() * cell - pad;
        let y_min = (lo.y / cell).floor() * cell - pad;
        let x_max = ((hi.x / cell).floor() + 1.0) * cell + pad;
        let y_max = ((hi.y / cell).floor() + 1.0) * cell + pad;
        GridSpec::new(x_min, x_max, y_min, y_max, cell)
    }

    pub fn nx(&self) -> usize {
        ((self.x_max - self.x_min) / self.cell).ceil().max(1.0) as usize
    }

    pub fn ny(&self) -> usize {
        ((self.y_max - self.y_min) / self.cell).ceil().max(1.0) as usize
    }

    pub fn dim(&self) -> usize {
        self.nx() * self.ny() * CHANNELS
    }

    pub fn contains(&self, p: Point2<f64>) -> bool {
        p.x >= self.x_min && p.x < self.x_max && p.y >= self.y_min && p.y < self.y_max
    }

    /// Cell of `p`, clamped onto the grid.
    pub fn cell_of(&self, p: Point2<f64>) -> (usize, usize) {
        let ix = ((p.x - self.x_min) / self.cell).floor();
        let iy = ((p.y - self.y_min) / self.cell).floor();
        (
            ix.clamp(0.0, (self.nx() - 1) as f64) as usize,
            iy.clamp(0.0, (self.ny() - 1) as f64) as usize,
        )
    }

    pub fn feature_index(&self, cell: (usize, usize), channel: Channel) -> usize {
        (cell.1 * self.nx() + cell.0) * CHANNELS + channel as usize
    }
}

/// Feature index hit by each step of `traj`; `None` for zero-length steps.
///
/// Also returns the number of step midpoints that fell outside the grid.
fn step_features(traj: &Trajectory, grid: &GridSpec) -> (Vec<Option<usize>>, usize) {
    let mut clipped = 0;
    let hits = traj
        .points()
        .windows(2)
        .map(|w| {
            let mid = Point2::from((w[0].pos.coords + w[1].pos.coords) * 0.5);
            if !grid.contains(mid) {
                clipped += 1;
            }
            Channel::of(w[1].pos - w[0].pos).map(|ch| grid.feature_index(grid.cell_of(mid), ch))
        })
        .collect();
    (hits, clipped)
}

/// Unit-norm cell/direction histogram of a trajectory.
pub fn featurize(traj: &Trajectory, grid: &GridSpec) -> Result<DVector<f64>> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let (hits, clipped) = step_features(traj, grid);
    if clipped > 0 {
        log::warn!(
            "trajectory `{}`: {clipped} step(s) outside the grid were clipped",
            traj.id()
        );
    }
    let mut v = DVector::<f64>::zeros(grid.dim());
    for idx in hits.into_iter().flatten() {
        v[idx] += 1.0;
    }
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateMotion(traj.id().to_string()));
    }
    Ok(v / norm)
}

/// `K` motion-primitive atoms stored as the columns of a `dim × K` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DictionaryRecord", into = "DictionaryRecord")]
pub struct Dictionary {
    atoms: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct DictionaryRecord {
    k: usize,
    dim: usize,
    atoms: Vec<Vec<f64>>,
}

impl TryFrom<DictionaryRecord> for Dictionary {
    type Error = Error;

    fn try_from(rec: DictionaryRecord) -> Result<Self> {
        if rec.atoms.len() != rec.k {
            return Err(Error::DimensionMismatch {
                expected: rec.k,
                got: rec.atoms.len(),
            });
        }
        for a in &rec.atoms {
            if a.len() != rec.dim {
                return Err(Error::DimensionMismatch {
                    expected: rec.dim,
                    got: a.len(),
                });
            }
        }
        let atoms = DMatrix::from_fn(rec.dim, rec.k, |r, c| rec.atoms[c][r]);
        Dictionary::new(atoms)
    }
}

impl From<Dictionary> for DictionaryRecord {
    fn from(d: Dictionary) -> Self {
        DictionaryRecord {
            k: d.k(),
            dim: d.dim(),
            atoms: d
                .atoms
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
        }
    }
}

impl Dictionary {
    pub fn new(atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.ncols() == 0 {
            return Err(Error::InvalidParameter("dictionary needs at least one atom".into()));
        }
        if let Some(k) = atoms.column_iter().position(|c| c.norm() == 0.0) {
            return Err(Error::InvalidParameter(format!("atom {k} is the zero vector")));
        }
        Ok(Dictionary { atoms })
    }

    pub fn k(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn atom(&self, k: usize) -> DVector<f64> {
        self.atoms.column(k).into_owned()
    }
}

/// Nonnegative `K × n` code matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodes(pub DMatrix<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseCodingParams {
    pub k: usize,
    pub lambda: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for SparseCodingParams {
    fn default() -> Self {
        SparseCodingParams {
            k: 12,
            lambda: 0.1,
            iters: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnedDictionary {
    pub dictionary: Dictionary,
    pub codes: SparseCodes,
    /// Objective before the first sweep, then after each sweep.
    pub history: Vec<f64>,
    /// Objective of the returned (unit-norm) dictionary and codes.
    pub objective: f64,
}

/// `½‖X − D·A‖²_F + λ·ΣA`.
pub fn objective(x: &DMatrix<f64>, d: &DMatrix<f64>, a: &DMatrix<f64>, lambda: f64) -> f64 {
    0.5 * (x - d * a).norm_squared() + lambda * a.sum()
}

/// Alternating minimization; `features` are the columns of `X`.
pub fn learn_dictionary(
    features: &[DVector<f64>],
    params: &SparseCodingParams,
) -> Result<LearnedDictionary> {
    let SparseCodingParams {
        k,
        lambda,
        iters,
        seed,
    } = *params;
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let dim = features[0].len();
    if let Some(f) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: f.len(),
        });
    }
    if k > dim {
        log::warn!("K = {k} exceeds feature dimension {dim}");
    }
    let n = features.len();
    let x = DMatrix::from_columns(features);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = init_atoms(&x, k, &mut rng);
    let mut a = DMatrix::zeros(k, n);

    let mut history = Vec::with_capacity(iters + 1);
    history.push(objective(&x, &d, &a, lambda));
    for _ in 0..iters {
        update_codes(&x, &d, &mut a, lambda);
        update_atoms(&x, &mut d, &a);
        history.push(objective(&x, &d, &a, lambda));
    }

    // Unit-norm atoms; scaling codes down by the same factor keeps D·A and
    // can only lower λ·ΣA since every norm is ≤ 1 here.
    for j in 0..k {
        let norm = d.column(j).norm();
        if norm > 0.0 {
            d.column_mut(j).unscale_mut(norm);
            a.row_mut(j).scale_mut(norm);
        }
    }
    let objective = objective(&x, &d, &a, lambda);
    Ok(LearnedDictionary {
        dictionary: Dictionary::new(d)?,
        codes: SparseCodes(a),
        history,
        objective,
    })
}

/// Seeds atoms from data columns, k-means++ style on `1 − cos²`.
fn init_atoms(x: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (dim, n) = x.shape();
    let unit: Vec<DVector<f64>> = x
        .column_iter()
        .map(|c| {
            let norm = c.norm();
            if norm > 0.0 {
                c / norm
            } else {
                c.into_owned()
            }
        })
        .collect();
    let mut d = DMatrix::zeros(dim, k);
    let mut chosen = Vec::with_capacity(k);
    let mut dist = vec![1.0; n];
    for j in 0..k {
        let total: f64 = dist
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i) && unit[*i].norm() > 0.0)
            .map(|(_, w)| *w)
            .sum();
        let pick = if total > 1e-12 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, w) in dist.iter().enumerate() {
                if chosen.contains(&i) || unit[i].norm() == 0.0 {
                    continue;
                }
                pick = Some(i);
                target -= w;
                if target <= 0.0 {
                    break;
                }
            }
            pick
        } else {
            None
        };
        match pick {
            Some(i) => {
                chosen.push(i);
                d.set_column(j, &unit[i]);
                for (m, u) in unit.iter().enumerate() {
                    let c = u.dot(&unit[i]);
                    dist[m] = dist[m].min(1.0 - c * c).max(0.0);
                }
            }
            None => {
                let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                d.set_column(j, &(&v / v.norm()));
            }
        }
    }
    d
}

/// One pass of nonnegative coordinate descent over every code entry.
fn update_codes(x: &DMatrix<f64>, d: &DMatrix<f64>, a: &mut DMatrix<f64>, lambda: f64) {
    let gram = d.transpose() * d;
    let corr = d.transpose() * x;
    let k = d.ncols();
    for col in 0..x.ncols() {
        for row in 0..k {
            let g = gram[(row, row)];
            if g <= 0.0 {
                a[(row, col)] = 0.0;
                continue;
            }
            let mut r = corr[(row, col)];
            for l in 0..k {
                if l != row {
                    r -= gram[(row, l)] * a[(l, col)];
                }
            }
            a[(row, col)] = ((r - lambda) / g).max(0.0);
        }
    }
}

/// Block-coordinate atom update, each atom projected onto the unit ball.
/// Unused atoms are re-seeded with the worst-reconstructed sample.
fn update_atoms(x: &DMatrix<f64>, d: &mut DMatrix<f64>, a: &DMatrix<f64>) {
    let xa = x * a.transpose();
    let aa = a * a.transpose();
    for j in 0..d.ncols() {
        let m = aa[(j, j)];
        if m <= 1e-300 {
            reseed_atom(x, d, a, j);
            continue;
        }
        let mut u = xa.column(j) - &*d * aa.column(j) + d.column(j) * m;
        u.unscale_mut(m);
        let norm = u.norm();
        if norm > 1.0 {
            u.unscale_mut(norm);
        }
        if norm == 0.0 {
            reseed_atom(x, d, a, j);
        } else {
            d.set_column(j, &u);
        }
    }
}

fn reseed_atom(x: &DMatrix<f64>, d: &mut DMatrix<f64>, a: &DMatrix<f64>, j: usize) {
    let residual = x - &*d * a;
    let worst = residual
        .column_iter()
        .enumerate()
        .fold((0, -1.0), |best, (i, c)| {
            let e = c.norm_squared();
            if e > best.1 {
                (i, e)
            } else {
                best
            }
        })
        .0;
    let r = residual.column(worst);
    let norm = r.norm();
    if norm > 1e-12 {
        d.set_column(j, &(r / norm));
    } else if d.column(j).norm() == 0.0 {
        let c = x.column(worst);
        d.set_column(j, &(c / c.norm().max(1e-300)));
    }
}

/// A contiguous run of trajectory points explained by one atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub atom: usize,
    /// First point index.
    pub start: usize,
    /// One past the last point index.
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    /// No point of the trajectory had positive support under any atom.
    pub low_confidence: bool,
}

impl Segmentation {
    pub fn atoms(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.atom).collect()
    }
}

fn argmax_lowest(scores: impl Iterator<Item = f64>) -> (usize, f64) {
    scores
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, s)| {
            if s > best.1 {
                (i, s)
            } else {
                best
            }
        })
}

/// Splits a trajectory into runs labelled by their best-scoring atom.
///
/// Each point is scored by the atoms' weights at its own step's cell and
/// direction (the last point reuses the final step). Zero-length steps take
/// the label of the preceding point. Runs shorter than `min_len` are folded
/// into whichever neighbour's atom scores higher over the run.
pub fn segment(
    traj: &Trajectory,
    dict: &Dictionary,
    grid: &GridSpec,
    min_len: usize,
) -> Result<Segmentation> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if dict.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: dict.dim(),
        });
    }
    let n = traj.len();
    let (steps, _) = step_features(traj, grid);
    let point_feature: Vec<Option<usize>> = (0..n)
        .map(|i| steps.get(i.min(n.saturating_sub(2))).copied().flatten())
        .collect();

    let atoms = dict.atoms();
    let mut labels: Vec<Option<usize>> = Vec::with_capacity(n);
    let mut supported = false;
    for f in &point_feature {
        labels.push(f.map(|idx| {
            let (best, score) = argmax_lowest(atoms.row(idx).iter().copied());
            supported |= score > 0.0;
            best
        }));
    }
    // Fill unscored points from the previous label, leading ones from the next.
    let first = labels.iter().flatten().next().copied().unwrap_or(0);
    let mut prev = first;
    let labels: Vec<usize> = labels
        .into_iter()
        .map(|l| {
            if let Some(l) = l {
                prev = l;
            }
            prev
        })
        .collect();

    let mut runs = runs_of(&labels);
    let score = |atom: usize, run: &Segment| -> f64 {
        (run.start..run.end)
            .filter_map(|i| point_feature[i])
            .map(|idx| atoms[(idx, atom)])
            .sum()
    };
    while runs.len() > 1 {
        let Some((pos, _)) = runs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.len() < min_len)
            .min_by_key(|(i, r)| (r.len(), *i))
        else {
            break;
        };
        let run = runs[pos];
        let left = pos.checked_sub(1).map(|i| runs[i].atom);
        let right = runs.get(pos + 1).map(|r| r.atom);
        let target = match (left, right) {
            (Some(l), Some(r)) => {
                let (sl, sr) = (score(l, &run), score(r, &run));
                if sl > sr || (sl == sr && l < r) {
                    l
                } else {
                    r
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!(),
        };
        runs[pos].atom = target;
        runs = coalesce(&runs);
    }
    Ok(Segmentation {
        segments: runs,
        low_confidence: !supported,
    })
}

fn runs_of(labels: &[usize]) -> Vec<Segment> {
    let mut runs: Vec<Segment> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.atom == l => r.end = i + 1,
            _ => runs.push(Segment {
                atom: l,
                start: i,
                end: i + 1,
            }),
        }
    }
    runs
}

fn coalesce(runs: &[Segment]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(runs.len());
    for r in runs {
        match out.last_mut() {
            Some(last) if last.atom == r.atom => last.end = r.end,
            _ => out.push(*r),
        }
    }
    out
}

/// `K × K` counts of trajectories exhibiting each atom-to-atom transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl TransitionMatrix {
    pub fn zeros(k: usize) -> Self {
        TransitionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.k + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Nonzero entries in row-major order.
    pub fn nonzero(&self) -> impl Iterator<Item = ((usize, usize), u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(idx, &c)| ((idx / self.k, idx % self.k), c))
    }
}

/// Transitions `i → j` a segmentation exhibits, each listed once.
/// A single-segment trajectory yields its self-pair.
pub fn distinct_transitions(atoms: &[usize]) -> Vec<(usize, usize)> {
    if atoms.len() == 1 {
        return vec![(atoms[0], atoms[0])];
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for w in atoms.windows(2) {
        if !pairs.contains(&(w[0], w[1])) {
            pairs.push((w[0], w[1]));
        }
    }
    pairs
}

/// Counts, per transition, the trajectories exhibiting it.
pub fn build_transitions(segmentations: &[Vec<usize>], k: usize) -> Result<TransitionMatrix> {
    let mut t = TransitionMatrix::zeros(k);
    for atoms in segmentations {
        if let Some(&bad) = atoms.iter().find(|&&a| a >= k) {
            return Err(Error::InvalidParameter(format!("atom index {bad} >= K = {k}")));
        }
        for (i, j) in distinct_transitions(atoms) {
            t.counts[i * k + j] += 1;
        }
    }
    Ok(t)
}
