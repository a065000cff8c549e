//! Seeded random streams.
//!
//! Every stochastic component draws from [`SeededRng`], a ChaCha20 stream
//! cipher generator keyed by a 64-bit seed. ChaCha20 output is specified
//! bit-for-bit, so a seed in a config file produces the same data on any
//! platform. Independent sub-streams (one per frame, say) are obtained with
//! [`SeededRng::substream`], which selects a ChaCha stream id under the same
//! key.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::field::{ScalarImage, Shape};

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { seed, inner: ChaCha20Rng::seed_from_u64(seed) }
    }

    /// Independent stream `stream` under the same seed.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// One `N(0, 1)` draw.
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// One `N(0, std^2)` draw; `std = 0` returns exactly zero.
    pub fn normal(&mut self, std: f64) -> f64 {
        if std == 0.0 {
            return 0.0;
        }
        std * self.standard_normal()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn poisson(&mut self, mean: f64) -> Result<u64> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::invalid(format!("Poisson mean must be finite and >= 0, got {mean}")));
        }
        if mean == 0.0 {
            return Ok(0);
        }
        let dist = Poisson::new(mean).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(dist.sample(&mut self.inner) as u64)
    }
}

/// I.i.d. `N(0, sigma^2)` image.
pub fn gaussian_noise(rng: &mut SeededRng, shape: Shape, sigma: f64) -> Result<ScalarImage> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(ScalarImage::zeros(shape));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let data = (0..shape.len()).map(|_| normal.sample(&mut rng.inner)).collect();
    ScalarImage::from_vec(shape, data)
}

/// Independent Poisson draws, one per entry of `means`.
pub fn poisson_sample(rng: &mut SeededRng, means: &[f64]) -> Result<Vec<u64>> {
    means.iter().map(|&m| rng.poisson(m)).collect()
}
