//! Gaussian-mixture class models with known posteriors.
//!
//! Each class density is a mixture of isotropic Gaussians `N(mu, v * I)`.
//! Because the model is known, the Bayes classifier and its risk can be
//! computed, which turns empirical risk into regret.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{check_dim, Dataset, Label};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One isotropic mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: Vec<f64>,
    /// Per-coordinate variance (covariance is `variance * I`).
    pub variance: f64,
    pub weight: f64,
}

impl Component {
    pub fn new(mean: Vec<f64>, variance: f64, weight: f64) -> Self {
        Component {
            mean,
            variance,
            weight,
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        let sq: f64 = x
            .iter()
            .zip(&self.mean)
            .map(|(a, m)| (a - m) * (a - m))
            .sum();
        -0.5 * d * (2.0 * std::f64::consts::PI * self.variance).ln() - sq / (2.0 * self.variance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClassModel {
    pub dim: usize,
    pub class1: Vec<Component>,
    pub class0: Vec<Component>,
    /// Prior probability of class 1.
    pub pi1: f64,
}

/// Monte-Carlo Bayes risk, plus the closed form when one exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesRisk {
    pub estimate: f64,
    pub std_error: f64,
    pub closed_form: Option<f64>,
}

impl BayesRisk {
    /// Closed form when available, otherwise the Monte-Carlo estimate.
    pub fn best(&self) -> f64 {
        self.closed_form.unwrap_or(self.estimate)
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl GaussianClassModel {
    pub fn new(dim: usize, class1: Vec<Component>, class0: Vec<Component>, pi1: f64) -> Result<Self> {
        let model = GaussianClassModel {
            dim,
            class1,
            class0,
            pi1,
        };
        model.validate()?;
        Ok(model)
    }

    /// Two unit-variance Gaussians at `0_d` and `1_d`, equal priors.
    pub fn sim1(dim: usize) -> Self {
        GaussianClassModel {
            dim,
            class1: vec![Component::new(vec![1.0; dim], 1.0, 1.0)],
            class0: vec![Component::new(vec![0.0; dim], 1.0, 1.0)],
            pi1: 0.5,
        }
    }

    /// Two-component mixtures per class, class-1 prior 1/3.
    pub fn sim3(dim: usize) -> Self {
        GaussianClassModel {
            dim,
            class1: vec![
                Component::new(vec![0.0; dim], 1.0, 0.5),
                Component::new(vec![3.0; dim], 2.0, 0.5),
            ],
            class0: vec![
                Component::new(vec![1.5; dim], 1.0, 0.5),
                Component::new(vec![4.5; dim], 2.0, 0.5),
            ],
            pi1: 1.0 / 3.0,
        }
    }

    /// Looks up a named preset ("sim1", "sim3").
    pub fn preset(name: &str, dim: usize) -> Result<Self> {
        match name {
            "sim1" => Ok(Self::sim1(dim)),
            "sim3" => Ok(Self::sim3(dim)),
            other => Err(Error::config(format!("unknown model preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::parameter("model dimension must be positive"));
        }
        if !(0.0..=1.0).contains(&self.pi1) {
            return Err(Error::parameter(format!("pi1 must lie in [0, 1], got {}", self.pi1)));
        }
        for (name, comps) in [("class 1", &self.class1), ("class 0", &self.class0)] {
            if comps.is_empty() {
                return Err(Error::parameter(format!("{name} has no mixture components")));
            }
            let total: f64 = comps.iter().map(|c| c.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::parameter(format!("{name} weights sum to {total}, not 1")));
            }
            for c in comps {
                if c.mean.len() != self.dim {
                    return Err(Error::parameter(format!("{name} component mean has wrong dimension")));
                }
                if !(c.variance > 0.0) || !(c.weight >= 0.0) {
                    return Err(Error::parameter(format!(
                        "{name} component needs positive variance and nonnegative weight"
                    )));
                }
            }
        }
        Ok(())
    }

    fn log_mixture(components: &[Component], x: &[f64]) -> f64 {
        log_sum_exp(components.iter().map(|c| c.weight.ln() + c.log_density(x)))
    }

    /// `log(pi1 p1(x)) - log(pi0 p0(x))`.
    pub fn log_odds(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x)?;
        let l1 = self.pi1.ln() + Self::log_mixture(&self.class1, x);
        let l0 = (1.0 - self.pi1).ln() + Self::log_mixture(&self.class0, x);
        Ok(l1 - l0)
    }

    /// Posterior `P(Y = 1 | X = x)`.
    pub fn eta(&self, x: &[f64]) -> Result<f64> {
        let z = self.log_odds(x)?;
        Ok(if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        })
    }

    /// Bayes rule `1{eta(x) > 1/2}`.
    pub fn bayes_classify(&self, x: &[f64]) -> Result<Label> {
        Ok(u8::from(self.eta(x)? > 0.5))
    }

    fn draw_component<'a>(components: &'a [Component], rng: &mut RngStream) -> &'a Component {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for c in components {
            acc += c.weight;
            if u < acc {
                return c;
            }
        }
        components.last().expect("validated model has components")
    }

    /// Draws `n` labeled points.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Dataset> {
        self.validate()?;
        if n == 0 {
            return Err(Error::parameter("sample size must be at least 1"));
        }
        let mut features = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let label = u8::from(rng.random::<f64>() < self.pi1);
            let comps = if label == 1 { &self.class1 } else { &self.class0 };
            let c = Self::draw_component(comps, rng);
            let sd = c.variance.sqrt();
            for &m in &c.mean {
                let z: f64 = rng.sample(StandardNormal);
                features.push(m + sd * z);
            }
            labels.push(label);
        }
        Dataset::new(self.dim, features, labels)
    }

    /// Exact Bayes risk for one equal-variance Gaussian per class.
    pub fn closed_form_bayes_risk(&self) -> Option<f64> {
        if self.class1.len() != 1 || self.class0.len() != 1 {
            return None;
        }
        let (c1, c0) = (&self.class1[0], &self.class0[0]);
        if c1.variance != c0.variance {
            return None;
        }
        let (p1, p0) = (self.pi1, 1.0 - self.pi1);
        if p1 == 0.0 || p0 == 0.0 {
            return Some(0.0);
        }
        let delta = c1
            .mean
            .iter()
            .zip(&c0.mean)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / c1.variance.sqrt();
        if delta == 0.0 {
            return Some(if p1 > 0.5 { p0 } else { p1 });
        }
        // Predict 1 iff the log-likelihood ratio exceeds t = log(p0 / p1);
        // the ratio is N(+-delta^2/2, delta^2) under the two classes.
        let t = (p0 / p1).ln();
        let phi = Normal::standard();
        Some(p1 * phi.cdf(t / delta - delta / 2.0) + p0 * phi.cdf(-t / delta - delta / 2.0))
    }

    /// Monte-Carlo estimate of `P(g(X) != Y)` for the Bayes rule `g`.
    pub fn bayes_risk(&self, mc_samples: usize, rng: &mut RngStream) -> Result<BayesRisk> {
        if mc_samples == 0 {
            return Err(Error::parameter("need at least one Monte-Carlo sample"));
        }
        const CHUNK: usize = 50_000;
        let mut wrong = 0usize;
        let mut remaining = mc_samples;
        while remaining > 0 {
            let n = remaining.min(CHUNK);
            let data = self.sample(n, rng)?;
            for i in 0..n {
                if self.bayes_classify(data.features(i))? != data.label(i) {
                    wrong += 1;
                }
            }
            remaining -= n;
        }
        let p = wrong as f64 / mc_samples as f64;
        Ok(BayesRisk {
            estimate: p,
            std_error: (p * (1.0 - p) / mc_samples as f64).sqrt(),
            closed_form: self.closed_form_bayes_risk(),
        })
    }
}
