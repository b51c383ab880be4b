//! Synthetic data sources. Desk-scale stand-ins for image corpora: small
//! enough to train against in seconds, structured enough that a collapsed
//! generator is obvious in a scatter plot.

use crate::analytic::{GaussianFamily, GaussianMixture};
use crate::error::{Error, Result};
use crate::harness::config::DatasetConfig;
use crate::rng::Xoshiro256;
use crate::training::DataSource;

enum Sampler {
    Gaussian(GaussianFamily),
    Ring(GaussianMixture),
    TwoMoons { radius: f64, noise_std: f64 },
    Checkerboard { range: f64 },
}

/// A seeded sampler over one of the toy distributions. The RNG is salted
/// separately from training noise, so data draws never shift when training
/// hyperparameters change.
pub struct ToyDataset {
    sampler: Sampler,
    dim: usize,
    rng: Xoshiro256,
}

impl ToyDataset {
    /// Build from config with an explicit stream salt, letting callers keep
    /// training data and held-out data on disjoint streams of one seed.
    pub fn with_stream(config: &DatasetConfig, seed: u64, salt: u64) -> Result<Self> {
        Self::from_rng(config, Xoshiro256::stream(seed, salt))
    }

    /// Build around an already-positioned RNG, for callers that interleave
    /// data draws with other use of the same stream.
    pub fn from_rng(config: &DatasetConfig, rng: Xoshiro256) -> Result<Self> {
        let sampler = match config {
            DatasetConfig::Gaussian { mean, var } => {
                Sampler::Gaussian(GaussianFamily::new(mean.clone(), var.clone())?)
            }
            DatasetConfig::GaussianMixtureRing {
                components,
                radius,
                noise_std,
            } => Sampler::Ring(GaussianMixture::ring(*components, *radius, *noise_std)?),
            DatasetConfig::TwoMoons { radius, noise_std } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Config(format!(
                        "two_moons radius must be positive, got {radius}"
                    )));
                }
                if !(*noise_std >= 0.0 && noise_std.is_finite()) {
                    return Err(Error::Config(format!(
                        "two_moons noise_std must be nonnegative, got {noise_std}"
                    )));
                }
                Sampler::TwoMoons {
                    radius: *radius,
                    noise_std: *noise_std,
                }
            }
            DatasetConfig::Checkerboard { range } => {
                if !(*range >= 1.0 && range.is_finite()) {
                    return Err(Error::Config(format!(
                        "checkerboard range must be at least 1, got {range}"
                    )));
                }
                Sampler::Checkerboard { range: *range }
            }
        };
        Ok(ToyDataset {
            dim: config.data_dim(),
            sampler,
            rng,
        })
    }

    pub fn new(config: &DatasetConfig, seed: u64) -> Result<Self> {
        Self::with_stream(config, seed, crate::rng::STREAM_DATA)
    }

    /// Hand the stream back, positioned after every draw made so far.
    pub fn into_rng(self) -> Xoshiro256 {
        self.rng
    }

    fn draw(&mut self) -> Vec<f64> {
        match &self.sampler {
            Sampler::Gaussian(family) => family.sample(&mut self.rng),
            Sampler::Ring(mixture) => mixture.sample(&mut self.rng),
            Sampler::TwoMoons { radius, noise_std } => {
                let theta = self.rng.uniform(0.0, std::f64::consts::PI);
                let upper = self.rng.next_f64() < 0.5;
                let (mut x, mut y) = if upper {
                    (radius * theta.cos(), radius * theta.sin())
                } else {
                    (radius * (1.0 - theta.cos()), radius * (0.5 - theta.sin()))
                };
                x += noise_std * self.rng.normal();
                y += noise_std * self.rng.normal();
                vec![x, y]
            }
            Sampler::Checkerboard { range } => {
                // Unit cells tile [-range, range]^2; mass sits on the cells
                // whose integer corner coordinates have even sum.
                let range = *range;
                let cells = (2.0 * range) as i64;
                loop {
                    let i = (self.rng.uniform(0.0, cells as f64)).floor() as i64;
                    let j = (self.rng.uniform(0.0, cells as f64)).floor() as i64;
                    if (i + j) % 2 == 0 {
                        let x = -range + i as f64 + self.rng.next_f64();
                        let y = -range + j as f64 + self.rng.next_f64();
                        return vec![x, y];
                    }
                }
            }
        }
    }
}

impl DataSource for ToyDataset {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_batch(&mut self, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.draw()).collect()
    }
}
