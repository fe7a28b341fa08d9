use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `max(width / min(100, n + 1), 1e-3 * width)` for every sample kernel.
    #[default]
    Scaled,
}

impl BandwidthRule {
    pub fn bandwidth(self, n_samples: usize, width: f64) -> f64 {
        match self {
            BandwidthRule::Scaled => (width / (n_samples + 1).min(100) as f64).max(1e-3 * width),
        }
    }
}

fn std_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / SQRT_2))
}

#[derive(Debug, Clone, Copy)]
struct Kernel {
    mu: f64,
    sigma: f64,
    /// probability mass of the untruncated kernel inside the bounds
    mass: f64,
}

/// Mixture of truncated Gaussians on `[lower, upper]`: one kernel per sample
/// plus a wide prior kernel at the midpoint. With no samples the density is
/// exactly uniform.
#[derive(Debug, Clone)]
pub struct ParzenEstimator {
    lower: f64,
    upper: f64,
    kernels: Vec<Kernel>,
}

impl ParzenEstimator {
    pub fn new(samples: &[f64], lower: f64, upper: f64, rule: BandwidthRule) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidInput(format!("bad bounds [{lower}, {upper}]")));
        }
        let width = upper - lower;
        let mut kernels = Vec::with_capacity(samples.len() + 1);
        if !samples.is_empty() {
            let bw = rule.bandwidth(samples.len(), width);
            for &s in samples {
                kernels.push(Self::kernel(s.clamp(lower, upper), bw, lower, upper));
            }
            kernels.push(Self::kernel(0.5 * (lower + upper), width, lower, upper));
        }
        Ok(Self { lower, upper, kernels })
    }

    fn kernel(mu: f64, sigma: f64, lower: f64, upper: f64) -> Kernel {
        let mass = std_cdf((upper - mu) / sigma) - std_cdf((lower - mu) / sigma);
        Kernel { mu, sigma, mass: mass.max(f64::MIN_POSITIVE) }
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lower || x > self.upper {
            return 0.0;
        }
        if self.kernels.is_empty() {
            return 1.0 / (self.upper - self.lower);
        }
        let total: f64 = self
            .kernels
            .iter()
            .map(|k| {
                let z = (x - k.mu) / k.sigma;
                INV_SQRT_2PI * (-0.5 * z * z).exp() / (k.sigma * k.mass)
            })
            .sum();
        total / self.kernels.len() as f64
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            return 0.0;
        }
        if x >= self.upper {
            return 1.0;
        }
        if self.kernels.is_empty() {
            return (x - self.lower) / (self.upper - self.lower);
        }
        let total: f64 = self
            .kernels
            .iter()
            .map(|k| (std_cdf((x - k.mu) / k.sigma) - std_cdf((self.lower - k.mu) / k.sigma)) / k.mass)
            .sum();
        total / self.kernels.len() as f64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.kernels.is_empty() {
            return rng.gen_range(self.lower..=self.upper);
        }
        let k = self.kernels[rng.gen_range(0..self.kernels.len())];
        // kernel centres lie inside the bounds, so acceptance is at least ~1/3
        for _ in 0..1000 {
            let x = k.mu + k.sigma * standard_normal(rng);
            if (self.lower..=self.upper).contains(&x) {
                return x;
            }
        }
        k.mu
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
