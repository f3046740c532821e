//! Marginal laws, seeded random streams and the spherical perturbation sampler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// One-dimensional input law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Marginal {
    Uniform { a: f64, b: f64 },
    Gaussian { mean: f64, var: f64 },
}

impl Marginal {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid(format!(
                "uniform({a}, {b}) needs finite a < b"
            )));
        }
        Ok(Marginal::Uniform { a, b })
    }

    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        if !(mean.is_finite() && var.is_finite() && var > 0.0) {
            return Err(Error::invalid(format!(
                "gaussian({mean}, {var}) needs finite mean and positive variance"
            )));
        }
        Ok(Marginal::Gaussian { mean, var })
    }

    pub fn standard_normal() -> Self {
        Marginal::Gaussian {
            mean: 0.0,
            var: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { a, b } => Self::uniform(a, b).map(|_| ()),
            Marginal::Gaussian { mean, var } => Self::gaussian(mean, var).map(|_| ()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => 0.5 * (a + b),
            Marginal::Gaussian { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => (b - a).powi(2) / 12.0,
            Marginal::Gaussian { var, .. } => var,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Marginal::Gaussian { mean, var } => 0.5 * erfc(-(x - mean) / (2.0 * var).sqrt()),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => {
                if (a..=b).contains(&x) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Marginal::Gaussian { mean, var } => {
                let sd = var.sqrt();
                let u = (x - mean) / sd;
                (-0.5 * u * u).exp() / (sd * SQRT_2PI)
            }
        }
    }

    /// Inverse CDF. The endpoints 0 and 1 are accepted only for bounded support.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("quantile level {p} outside [0, 1]")));
        }
        match *self {
            Marginal::Uniform { a, b } => Ok(a + p * (b - a)),
            Marginal::Gaussian { mean, var } => {
                if p == 0.0 || p == 1.0 {
                    return Err(Error::invalid("gaussian quantile at 0 or 1 is infinite"));
                }
                Ok(mean - (2.0 * var).sqrt() * erfc_inv(2.0 * p))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            Marginal::Gaussian { mean, var } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + var.sqrt() * z
            }
        }
    }

    /// `sup F(1−F)/ρ` over the support.
    pub fn sup_ratio(&self) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => 0.25 * (b - a),
            Marginal::Gaussian { var, .. } => 0.25 * var.sqrt() * SQRT_2PI,
        }
    }

    /// `sup F(1−F)/ρ²` over the support; unbounded for Gaussian tails.
    pub fn sup_ratio_sq(&self) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => 0.25 * (b - a).powi(2),
            Marginal::Gaussian { .. } => f64::INFINITY,
        }
    }

    /// Constant `C₁ = min{4·sup(F(1−F)/ρ)², ½·sup(F(1−F)/ρ²)}` of the total-index bound.
    pub fn c1(&self) -> f64 {
        (4.0 * self.sup_ratio().powi(2)).min(0.5 * self.sup_ratio_sq())
    }
}

/// A deterministic random stream identified by `(seed, stream)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }

    /// Child stream `i`: a new seed mixed from `(seed, stream, i)`, independent of how work is split.
    pub fn substream(&self, i: u64) -> Self {
        let s = splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        Self {
            seed: splitmix64(s ^ splitmix64(i)),
            stream: self.stream,
        }
    }

    /// Named child used to separate independent phases of one computation (X draws, perturbations, ...).
    pub fn fork(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(tag.wrapping_add(1))),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw on the unit sphere of `R^d` via normalized Gaussians.
pub fn sample_unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("unit sphere needs d >= 1"));
    }
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-300 {
            return Ok(g.into_iter().map(|x| x / n).collect());
        }
    }
}

/// Spherical perturbations `V = R·U` with `R ~ U(0, √(3dσ²))`, so that `E[V_k²] = σ²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalSampler {
    dim: usize,
    sigma2: f64,
    radius_max: f64,
}

impl SphericalSampler {
    pub fn new(dim: usize, sigma2: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("spherical sampler needs d >= 1"));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        Ok(Self {
            dim,
            sigma2,
            radius_max: (3.0 * dim as f64 * sigma2).sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn radius_max(&self) -> f64 {
        self.radius_max
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u = sample_unit_sphere(self.dim, rng).expect("dim checked at construction");
        let r = self.radius_max * rng.random::<f64>();
        u.into_iter().map(|x| r * x).collect()
    }
}
