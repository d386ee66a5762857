//! Monte-Carlo checks of the Fisher information of the two Gaussian
//! parameterizations behind GD (`N(x, 1)`) and the hyperbolic metric
//! (`N(2√|x|, 1)`).

use crate::error::{Error, Result};
use crate::numcore::{sign, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreModel {
    /// `X ∼ N(x, 1)`.
    MeanParam,
    /// `X ∼ N(2√|x|, 1)`; singular at `x = 0`.
    SqrtParam,
}

impl ScoreModel {
    fn check(self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::invalid("parameter must be finite"));
        }
        if self == ScoreModel::SqrtParam && x == 0.0 {
            return Err(Error::invalid("sqrt parameterization has no score at x = 0"));
        }
        Ok(())
    }

    pub fn mean(self, x: f64) -> f64 {
        match self {
            ScoreModel::MeanParam => x,
            ScoreModel::SqrtParam => 2.0 * x.abs().sqrt(),
        }
    }

    /// Closed-form information: 1 and `1/|x|`.
    pub fn information(self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(match self {
            ScoreModel::MeanParam => 1.0,
            ScoreModel::SqrtParam => 1.0 / x.abs(),
        })
    }
}

/// Log-density of `sample` under the model at `x`.
pub fn log_density(model: ScoreModel, x: f64, sample: f64) -> f64 {
    let r = sample - model.mean(x);
    -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * r * r
}

/// `∂/∂x log p(sample; x)`. For the sqrt model this is
/// `sign(x)(sample − 2√|x|)/√|x|`.
pub fn analytic_score(model: ScoreModel, x: f64, sample: f64) -> Result<f64> {
    model.check(x)?;
    Ok(match model {
        ScoreModel::MeanParam => sample - x,
        ScoreModel::SqrtParam => {
            let root = x.abs().sqrt();
            sign(x) * (sample - 2.0 * root) / root
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

impl FisherEstimate {
    /// Deviation from `target` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.estimate - target) / self.stderr
    }
}

pub const MIN_SAMPLES: usize = 10_000;

/// Mean of squared scores over `n_samples` draws from the model at `x`.
pub fn fisher_mc_estimate(model: ScoreModel, x: f64, n_samples: usize, seed: u64) -> Result<FisherEstimate> {
    model.check(x)?;
    if n_samples < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    let mut rng = Rng::new(seed);
    let mu = model.mean(x);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_samples {
        let s = analytic_score(model, x, mu + rng.normal())?;
        let v = s * s;
        sum += v;
        sum_sq += v * v;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    Ok(FisherEstimate {
        estimate: mean,
        stderr: (var / n).sqrt(),
    })
}
