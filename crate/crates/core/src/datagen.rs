//! Synthetic market generation with a tunable popularity component, and
//! Gaussian preference perturbation for robustness studies.
//!
//! Generation is bit-reproducible: a ChaCha8 stream seeded with the config
//! seed is consumed in a fixed order (p1 row-major, then p2 row-major), and
//! normal draws map uniforms through the inverse CDF, so instances are
//! identical across platforms.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{ExaminationModel, Instance};

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub n: usize,
    pub m: usize,
    /// Popularity weight: 0 is purely idiosyncratic uniform preferences,
    /// 1 makes every agent share the same popularity ranking.
    pub lambda: f64,
    pub exam: ExaminationModel,
    pub seed: u64,
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidConfig("both sides must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.lambda > 0.0 && (self.n < 2 || self.m < 2) {
            return Err(Error::InvalidConfig(
                "lambda > 0 needs at least 2 agents per side (popularity scores divide by size - 1)"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Preference probabilities mixing a shared popularity score with uniform
/// noise: p1[i][j] = lambda * j/(m-1) + (1-lambda) * U[0,1), indices
/// 0-based, and symmetrically for p2.
pub fn generate(cfg: &GenConfig) -> Result<Instance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, m) = (cfg.n, cfg.m);
    let lambda = cfg.lambda;

    let mut p1 = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let pop = if lambda > 0.0 { j as f64 / (m - 1) as f64 } else { 0.0 };
            p1[[i, j]] = lambda * pop + (1.0 - lambda) * rng.gen::<f64>();
        }
    }
    let mut p2 = Array2::zeros((m, n));
    for j in 0..m {
        for i in 0..n {
            let pop = if lambda > 0.0 { i as f64 / (n - 1) as f64 } else { 0.0 };
            p2[[j, i]] = lambda * pop + (1.0 - lambda) * rng.gen::<f64>();
        }
    }
    Instance::new(p1, p2, cfg.exam)
}

/// Adds independent Normal(0, sigma^2) noise to every preference entry and
/// clamps back into [0, 1]. `sigma = 0` returns the instance unchanged.
/// Draws consume a fresh seeded stream (p1 row-major, then p2) with the
/// noise produced by inverse-CDF transform of uniforms.
pub fn perturb(inst: &Instance, sigma: f64, seed: u64) -> Result<Instance> {
    if sigma < 0.0 {
        return Err(Error::InvalidConfig(format!("sigma must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(inst.clone());
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal is well defined");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = move |p: f64| {
        let u = rng.gen::<f64>().clamp(1e-300, 1.0 - 1e-16);
        (p + sigma * normal.inverse_cdf(u)).clamp(0.0, 1.0)
    };
    let p1 = inst.p1().mapv(&mut noise);
    let p2 = inst.p2().mapv(&mut noise);
    Instance::new(p1, p2, *inst.exam())
}
