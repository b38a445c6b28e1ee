use serde::{Deserialize, Serialize};

use crate::error::{GctError, Result};

/// Categorical distribution over a finite outcome support. Producers that
/// truncate report the missing mass separately; `leftover()` is `1 - total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDist {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
}

impl OutcomeDist {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(GctError::domain(format!(
                "support has {} values but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(GctError::domain("probabilities must be finite and nonnegative"));
        }
        Ok(Self { support, probs })
    }

    pub fn point_mass(support: &[f64], index: usize) -> Self {
        let mut probs = vec![0.0; support.len()];
        probs[index] = 1.0;
        Self {
            support: support.to_vec(),
            probs,
        }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn leftover(&self) -> f64 {
        1.0 - self.total()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(y, p)| y * p).sum()
    }
}
