//! Evaluation metrics and reports.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CurbsideFrame;
use crate::predictor::{predict, PredictionSet, TasnscModel};
use crate::trajectory::{split_horizon, Dataset, Trajectory};

/// Mean distance from each point of `a` to its nearest point of `b`.
fn directed_mean_distance(a: &[Point2<f64>], b: &[Point2<f64>]) -> f64 {
    let total: f64 = a
        .iter()
        .map(|p| {
            b.iter()
                .map(|q| (p - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / a.len() as f64
}

/// Modified Hausdorff distance: the larger of the two directed mean
/// nearest-neighbour distances.
pub fn mhd(a: &[Point2<f64>], b: &[Point2<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(directed_mean_distance(a, b).max(directed_mean_distance(b, a)))
}

/// Unsigned angle in degrees between the endpoint displacements of
/// `predicted` and `truth`, both measured from `anchor`.
pub fn angular_deviation(
    predicted: &Trajectory,
    truth: &Trajectory,
    anchor: Point2<f64>,
) -> Result<f64> {
    let p_end = predicted.last().ok_or(Error::EmptySequence)?.pos;
    let t_end = truth.last().ok_or(Error::EmptySequence)?.pos;
    displacement_angle(p_end - anchor, t_end - anchor)
}

pub fn displacement_angle(a: nalgebra::Vector2<f64>, b: nalgebra::Vector2<f64>) -> Result<f64> {
    if a.norm() < 1e-9 {
        return Err(Error::ZeroDisplacement("predicted"));
    }
    if b.norm() < 1e-9 {
        return Err(Error::ZeroDisplacement("ground truth"));
    }
    Ok(a.perp(&b).abs().atan2(a.dot(&b)).to_degrees())
}

/// One prediction together with what actually happened.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub prediction: PredictionSet,
    pub truth: Trajectory,
    /// Last observed point.
    pub anchor: Point2<f64>,
}

/// Likelihood-weighted share of correct candidates, in percent, pooled over
/// every candidate of every outcome.
///
/// A candidate is correct when its angular deviation is at most
/// `threshold_deg`. Candidates whose deviation is undefined (zero
/// displacement) count as incorrect.
pub fn classification_accuracy(results: &[Outcome], threshold_deg: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut correct = 0.0;
    let mut total = 0.0;
    for r in results {
        for c in &r.prediction.candidates {
            total += c.likelihood;
            if let Ok(dev) = angular_deviation(&c.trajectory, &r.truth, r.anchor) {
                if dev <= threshold_deg {
                    correct += c.likelihood;
                }
            }
        }
    }
    if total <= 0.0 {
        return Err(Error::InvalidParameter("candidate likelihoods sum to zero".into()));
    }
    Ok(100.0 * correct / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub threshold_deg: f64,
    /// Report the likelihood-weighted mean MHD over candidates instead of the top-1 MHD.
    pub weighted_mhd: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold_deg: 40.0,
            weighted_mhd: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
    pub top_pattern: (usize, usize),
    pub top_likelihood: f64,
    pub top_deviation_deg: Option<f64>,
    /// Likelihood mass of the correct candidates.
    pub correct_mass: f64,
    pub mhd: f64,
    pub predict_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub threshold_deg: f64,
    pub classification_accuracy: f64,
    pub mean_mhd: f64,
    pub mean_predict_time: f64,
    pub rows: Vec<EvalRow>,
    /// Test trajectories shorter than the observation plus prediction horizon.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

impl EvalReport {
    /// Copy with every wall-clock field zeroed.
    pub fn without_timing(&self) -> EvalReport {
        let mut r = self.clone();
        r.mean_predict_time = 0.0;
        for row in &mut r.rows {
            row.predict_time = 0.0;
        }
        r
    }
}

/// An evaluated test trajectory: the observation plus its outcome.
#[derive(Debug, Clone)]
pub struct EvaluatedTrajectory {
    pub observed: Trajectory,
    pub outcome: Outcome,
}

/// Splits each test trajectory into observation and ground truth using the
/// model's horizons, predicts, and scores the predictions.
pub fn evaluate(
    model: &TasnscModel,
    test: &Dataset,
    test_frame: &CurbsideFrame,
    opts: &EvalOptions,
) -> Result<(EvalReport, Vec<EvaluatedTrajectory>)> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cfg = &model.config;
    let mut rows = Vec::with_capacity(test.len());
    let mut evaluated = Vec::with_capacity(test.len());
    let mut skipped = Vec::new();
    for traj in &test.trajectories {
        let (observed, truth) = match split_horizon(traj, cfg.t_obs, cfg.t_pred) {
            Ok(parts) => parts,
            Err(Error::InsufficientDuration { needed, got }) => {
                log::warn!("skipping `{}`: {got:.2} s recorded, {needed:.2} s needed", traj.id());
                skipped.push(traj.id().to_string());
                continue;
            }
            Err(e) => return Err(e),
        };
        let anchor = observed.last().ok_or(Error::EmptySequence)?.pos;
        let start = Instant::now();
        let prediction = predict(model, test_frame, &observed)?;
        let predict_time = start.elapsed().as_secs_f64();

        let truth_pts: Vec<_> = truth.positions().collect();
        let mhd_of = |t: &Trajectory| mhd(&t.positions().collect::<Vec<_>>(), &truth_pts);
        let row_mhd = if opts.weighted_mhd {
            let mut acc = 0.0;
            for c in &prediction.candidates {
                acc += c.likelihood * mhd_of(&c.trajectory)?;
            }
            acc
        } else {
            mhd_of(&prediction.top().trajectory)?
        };
        let outcome = Outcome {
            prediction,
            truth,
            anchor,
        };
        let correct_mass = classification_accuracy(std::slice::from_ref(&outcome), opts.threshold_deg)?
            / 100.0;
        let top = outcome.prediction.top();
        rows.push(EvalRow {
            id: traj.id().to_string(),
            intent: traj.intent().map(str::to_string),
            top_pattern: top.pattern,
            top_likelihood: top.likelihood,
            top_deviation_deg: angular_deviation(&top.trajectory, &outcome.truth, anchor).ok(),
            correct_mass,
            mhd: row_mhd,
            predict_time,
        });
        evaluated.push(EvaluatedTrajectory { observed, outcome });
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let outcomes: Vec<Outcome> = evaluated.iter().map(|e| e.outcome.clone()).collect();
    let n = rows.len() as f64;
    let report = EvalReport {
        mode: model.mode().label().to_string(),
        threshold_deg: opts.threshold_deg,
        classification_accuracy: classification_accuracy(&outcomes, opts.threshold_deg)?,
        mean_mhd: rows.iter().map(|r| r.mhd).sum::<f64>() / n,
        mean_predict_time: rows.iter().map(|r| r.predict_time).sum::<f64>() / n,
        rows,
        skipped,
    };
    Ok((report, evaluated))
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub algorithm: String,
    pub accuracy: f64,
    pub mhd: f64,
    pub time: f64,
    pub train_in: String,
    pub test_in: String,
}

impl TableRow {
    pub fn from_report(report: &EvalReport, train_in: &str, test_in: &str) -> Self {
        TableRow {
            algorithm: report.mode.clone(),
            accuracy: report.classification_accuracy,
            mhd: report.mean_mhd,
            time: report.mean_predict_time,
            train_in: train_in.to_string(),
            test_in: test_in.to_string(),
        }
    }
}

/// Aligned text table: algorithm, accuracy, MHD, time, train/test intersection.
pub fn format_table(rows: &[TableRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>14} {:>9} {:>10} {:>8} {:>8}",
        "Algorithm", "Accuracy (%)", "MHD (m)", "Time (s)", "Train In", "Test In"
    );
    let _ = writeln!(out, "{}", "-".repeat(64));
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10} {:>14.2} {:>9.3} {:>10.4} {:>8} {:>8}",
            r.algorithm, r.accuracy, r.mhd, r.time, r.train_in, r.test_in
        );
    }
    out
}

pub fn write_rows_csv(path: impl AsRef<Path>, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "id",
        "intent",
        "top_from",
        "top_to",
        "top_likelihood",
        "top_deviation_deg",
        "correct_mass",
        "mhd",
        "predict_time",
    ])?;
    for r in rows {
        w.write_record([
            r.id.clone(),
            r.intent.clone().unwrap_or_default(),
            r.top_pattern.0.to_string(),
            r.top_pattern.1.to_string(),
            r.top_likelihood.to_string(),
            r.top_deviation_deg.map(|d| d.to_string()).unwrap_or_default(),
            r.correct_mass.to_string(),
            r.mhd.to_string(),
            r.predict_time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot data for one trajectory: observed track, ground truth, and every
/// candidate with its likelihood, as `series,candidate,likelihood,t,x,y` rows.
pub fn write_plot_csv(out: impl Write, e: &EvaluatedTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "candidate", "likelihood", "t", "x", "y"])?;
    let mut series = |name: &str, idx: &str, lik: &str, t: &Trajectory| -> Result<()> {
        for s in t.points() {
            w.write_record([
                name,
                idx,
                lik,
                &s.t.to_string(),
                &s.pos.x.to_string(),
                &s.pos.y.to_string(),
            ])?;
        }
        Ok(())
    };
    series("observed", "", "", &e.observed)?;
    series("truth", "", "", &e.outcome.truth)?;
    for (i, c) in e.outcome.prediction.candidates.iter().enumerate() {
        series("candidate", &i.to_string(), &c.likelihood.to_string(), &c.trajectory)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::Candidate;

    fn pts(v: &[(f64, f64)]) -> Vec<Point2<f64>> {
        v.iter().map(|&(x, y)| Point2::new(x, y)).collect()
    }

    fn track(v: &[(f64, f64)]) -> Trajectory {
        Trajectory::from_positions("c", 0.5, 0.0, pts(v)).unwrap()
    }

    #[test]
    fn mhd_examples() {
        let a = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(mhd(&a, &a).unwrap(), 0.0);
        let b = pts(&[(0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(mhd(&a, &b).unwrap(), 1.0);
        assert_eq!(mhd(&pts(&[(0.0, 0.0)]), &pts(&[(3.0, 4.0)])).unwrap(), 5.0);
        assert!(mhd(&[], &a).is_err());
    }

    #[test]
    fn deviation_examples() {
        let anchor = Point2::origin();
        let east = track(&[(0.5, 0.0), (1.0, 0.0)]);
        let north = track(&[(0.0, 0.5), (0.0, 1.0)]);
        let diag = track(&[(0.5, 0.5), (1.0, 1.0)]);
        assert_eq!(angular_deviation(&east, &east, anchor).unwrap(), 0.0);
        assert!((angular_deviation(&east, &north, anchor).unwrap() - 90.0).abs() < 1e-12);
        assert!((angular_deviation(&east, &diag, anchor).unwrap() - 45.0).abs() < 1e-12);
        let still = track(&[(0.0, 0.0)]);
        assert!(matches!(
            angular_deviation(&still, &east, anchor),
            Err(Error::ZeroDisplacement(_))
        ));
    }

    fn candidate(end: (f64, f64), likelihood: f64) -> Candidate {
        Candidate {
            pattern: (0, 0),
            log_likelihood: likelihood.ln(),
            likelihood,
            trajectory: track(&[end]),
            variance: vec![[0.0, 0.0]],
            diverged: false,
        }
    }

    fn outcome(cands: Vec<Candidate>, truth_end: (f64, f64)) -> Outcome {
        Outcome {
            prediction: PredictionSet { candidates: cands },
            truth: track(&[truth_end]),
            anchor: Point2::origin(),
        }
    }

    #[test]
    fn weighted_accuracy_by_hand() {
        let o = outcome(
            vec![candidate((1.0, 0.1), 0.7), candidate((-1.0, 0.0), 0.3)],
            (1.0, 0.0),
        );
        let acc = classification_accuracy(std::slice::from_ref(&o), 40.0).unwrap();
        assert!((acc - 70.0).abs() < 1e-12);
        assert_eq!(classification_accuracy(std::slice::from_ref(&o), 180.0).unwrap(), 100.0);
        assert!(classification_accuracy(&[], 40.0).is_err());
    }

    #[test]
    fn uniform_likelihoods_reduce_to_fraction_correct() {
        let o1 = outcome(
            vec![candidate((1.0, 0.0), 0.5), candidate((0.0, 1.0), 0.5)],
            (1.0, 0.0),
        );
        let o2 = outcome(
            vec![candidate((1.0, 0.0), 0.5), candidate((1.0, 0.2), 0.5)],
            (1.0, 0.0),
        );
        // 3 of 4 candidates within 40°.
        let acc = classification_accuracy(&[o1, o2], 40.0).unwrap();
        assert!((acc - 75.0).abs() < 1e-12);
    }

    #[test]
    fn stalled_candidate_counts_as_incorrect() {
        let o = outcome(
            vec![candidate((0.0, 0.0), 0.4), candidate((2.0, 0.0), 0.6)],
            (1.0, 0.0),
        );
        assert!((classification_accuracy(&[o], 40.0).unwrap() - 60.0).abs() < 1e-12);
    }

    #[test]
    fn table_has_one_line_per_row() {
        let rows = vec![
            TableRow {
                algorithm: "ASNSC".into(),
                accuracy: 84.39,
                mhd: 2.267,
                time: 0.0625,
                train_in: "A".into(),
                test_in: "A".into(),
            };
            2
        ];
        let t = format_table(&rows);
        assert_eq!(t.lines().count(), 4);
        assert!(t.contains("84.39"));
    }
}
