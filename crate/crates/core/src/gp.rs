//! Exact Gaussian-process regression of velocity over position.
//!
//! Each motion pattern is a flow field made of two independent GPs, one per
//! velocity component, sharing an axis-separable squared-exponential kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Kinematic;

/// Negative posterior variances above this are rounding noise and clamp to 0.
pub const VARIANCE_CLAMP: f64 = 1e-10;

/// Squared-exponential kernel `σ²·exp(−Δx²/2ℓx² − Δy²/2ℓy²)` plus white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub length_x: f64,
    pub length_y: f64,
    pub signal_sd: f64,
    pub noise_sd: f64,
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel {
            length_x: 2.0,
            length_y: 2.0,
            signal_sd: 1.0,
            noise_sd: 0.1,
        }
    }
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.length_x, self.length_y, self.signal_sd, self.noise_sd]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "kernel parameters must be positive: {self:?}"
            )))
        }
    }

    pub fn eval(&self, p: Point2<f64>, q: Point2<f64>) -> f64 {
        let dx = (p.x - q.x) / self.length_x;
        let dy = (p.y - q.y) / self.length_y;
        self.signal_sd * self.signal_sd * (-0.5 * (dx * dx + dy * dy)).exp()
    }

    pub fn prior_variance(&self) -> f64 {
        self.signal_sd * self.signal_sd
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_sd * self.noise_sd
    }
}

/// A fitted GP with its Cholesky factor of `K + σn²·I` cached.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: Kernel,
    inputs: Vec<Point2<f64>>,
    targets: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
}

impl GpModel {
    pub fn fit(inputs: Vec<Point2<f64>>, targets: Vec<f64>, kernel: Kernel) -> Result<Self> {
        kernel.validate()?;
        if inputs.is_empty() {
            return Err(Error::EmptySequence);
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        let finite = inputs.iter().all(|p| p.x.is_finite() && p.y.is_finite())
            && targets.iter().all(|t| t.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite GP training data".into()));
        }
        let n = inputs.len();
        let noise = kernel.noise_variance();
        let gram = DMatrix::from_fn(n, n, |i, j| {
            kernel.eval(inputs[i], inputs[j]) + if i == j { noise } else { 0.0 }
        });
        let chol = Cholesky::new(gram).ok_or(Error::NotPositiveDefinite)?;
        let targets = DVector::from_vec(targets);
        let weights = chol.solve(&targets);
        Ok(GpModel {
            kernel,
            inputs,
            targets,
            chol,
            weights,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn inputs(&self) -> &[Point2<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    fn cross_covariance(&self, q: Point2<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|&p| self.kernel.eval(p, q)),
        )
    }

    /// Posterior mean only; `O(n)`.
    pub fn mean(&self, q: Point2<f64>) -> f64 {
        self.inputs
            .iter()
            .zip(self.weights.iter())
            .map(|(&p, w)| self.kernel.eval(p, q) * w)
            .sum()
    }

    /// Posterior mean and latent variance at `q`.
    pub fn posterior(&self, q: Point2<f64>) -> (f64, f64) {
        let (mean, var) = self.posterior_raw(q);
        let var = if var < 0.0 && var > -VARIANCE_CLAMP {
            0.0
        } else {
            var.max(0.0)
        };
        (mean, var)
    }

    /// Posterior with the variance left unclamped.
    pub fn posterior_raw(&self, q: Point2<f64>) -> (f64, f64) {
        let ks = self.cross_covariance(q);
        let mean = ks.dot(&self.weights);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("cholesky factor has a nonzero diagonal");
        let var = self.kernel.prior_variance() - v.norm_squared();
        (mean, var)
    }
}

#[derive(Serialize, Deserialize)]
struct GpRecord {
    kernel: Kernel,
    inputs: Vec<[f64; 2]>,
    targets: Vec<f64>,
}

impl Serialize for GpModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GpRecord {
            kernel: self.kernel,
            inputs: self.inputs.iter().map(|p| [p.x, p.y]).collect(),
            targets: self.targets.iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GpModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = GpRecord::deserialize(d)?;
        GpModel::fit(
            rec.inputs.into_iter().map(Point2::from).collect(),
            rec.targets,
            rec.kernel,
        )
        .map_err(serde::de::Error::custom)
    }
}

/// A transition `from → to` between two atoms, modelled as a velocity flow field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionPattern {
    pub from: usize,
    pub to: usize,
    /// Trajectory count behind this transition.
    pub count: u64,
    /// `count` normalized over all patterns of the model.
    pub prior_weight: f64,
    pub gp_x: GpModel,
    pub gp_y: GpModel,
}

impl MotionPattern {
    /// Fits both velocity GPs on the same positions.
    pub fn fit(
        from: usize,
        to: usize,
        count: u64,
        prior_weight: f64,
        samples: &[Kinematic],
        kernel: Kernel,
    ) -> Result<Self> {
        if !(prior_weight > 0.0 && prior_weight <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "prior weight must lie in (0, 1], got {prior_weight}"
            )));
        }
        let inputs: Vec<Point2<f64>> = samples.iter().map(|k| k.pos).collect();
        let gp_x = GpModel::fit(inputs.clone(), samples.iter().map(|k| k.vel.x).collect(), kernel)?;
        let gp_y = GpModel::fit(inputs, samples.iter().map(|k| k.vel.y).collect(), kernel)?;
        Ok(MotionPattern {
            from,
            to,
            count,
            prior_weight,
            gp_x,
            gp_y,
        })
    }

    pub fn mean_velocity(&self, p: Point2<f64>) -> Vector2<f64> {
        Vector2::new(self.gp_x.mean(p), self.gp_y.mean(p))
    }

    /// Posterior mean velocity and per-axis latent variance.
    pub fn velocity_posterior(&self, p: Point2<f64>) -> (Vector2<f64>, Vector2<f64>) {
        let (mx, vx) = self.gp_x.posterior(p);
        let (my, vy) = self.gp_y.posterior(p);
        (Vector2::new(mx, my), Vector2::new(vx, vy))
    }
}

fn gaussian_log_density(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + r * r / var)
}

/// Log-likelihood of observed velocities under a pattern's flow field.
///
/// Sums independent Gaussian log-densities of `vx` and `vy` at each observed
/// position, using the predictive variance (latent variance plus kernel
/// noise), then adds `ln(prior_weight)`.
pub fn pattern_log_likelihood(pattern: &MotionPattern, observed: &[Kinematic]) -> f64 {
    let noise_x = pattern.gp_x.kernel().noise_variance();
    let noise_y = pattern.gp_y.kernel().noise_variance();
    let data: f64 = observed
        .iter()
        .map(|k| {
            let (mean, var) = pattern.velocity_posterior(k.pos);
            gaussian_log_density(k.vel.x, mean.x, var.x + noise_x)
                + gaussian_log_density(k.vel.y, mean.y, var.y + noise_y)
        })
        .sum();
    data + pattern.prior_weight.ln()
}
