use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling parameters of the numeric fallback of every zero test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroTestConfig {
    pub sample_count: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub rng_seed: u64,
}

impl Default for ZeroTestConfig {
    fn default() -> Self {
        ZeroTestConfig {
            sample_count: 32,
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            rng_seed: 0x5eed,
        }
    }
}

impl ZeroTestConfig {
    pub fn new(sample_count: usize, abs_tol: f64, rel_tol: f64, rng_seed: u64) -> Result<Self> {
        let cfg = ZeroTestConfig {
            sample_count,
            abs_tol,
            rel_tol,
            rng_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::Config("sample_count must be at least 1".into()));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ZeroTestConfig {
            rng_seed: seed,
            ..self.clone()
        }
    }
}
