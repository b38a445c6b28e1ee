//! Structural scenario specification: latent confounder prior, per-state
//! rate tables for both marks, and the outcome table.
//!
//! Rates and outcome probabilities are indexed by `(u, min(n_a, K_a),
//! min(n_l, K_l))`. Rates are constant between events.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GctError, Result};
use crate::trajectory::Mark;

/// Pass/fail thresholds used by the verification harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Max TV between the counterfactual oracle and the quadrature evaluator.
    pub oracle_quad: f64,
    /// Max TV between the counterfactual oracle and the Monte Carlo evaluator.
    pub oracle_mc: f64,
    /// Max TV between the two formula evaluators.
    pub mc_quad: f64,
    /// Min TV between oracle and formula expected when confounding is present.
    pub confounding_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            oracle_quad: 0.02,
            oracle_mc: 0.015,
            mc_quad: 0.01,
            confounding_floor: 0.06,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub value: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub a: usize,
    pub l: usize,
}

/// On-disk scenario layout. `rate_a[u][ca][cl]`, `y_table[u][ca][cl][y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub tau: f64,
    pub u: Vec<LatentState>,
    pub rate_a: Vec<Vec<Vec<f64>>>,
    pub rate_l: Vec<Vec<Vec<f64>>>,
    pub caps: Caps,
    pub y_support: Vec<f64>,
    pub y_table: Vec<Vec<Vec<Vec<f64>>>>,
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

/// Validated scenario with flattened lookup tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioModel {
    id: Option<String>,
    tau: f64,
    u_values: Vec<f64>,
    prior: Vec<f64>,
    caps: Caps,
    n_max: usize,
    y_support: Vec<f64>,
    tolerances: Tolerances,
    // layout [(ca * (K_l + 1) + cl) * n_u + u]
    rate_a: Vec<f64>,
    rate_l: Vec<f64>,
    log_rate_a: Vec<f64>,
    log_rate_l: Vec<f64>,
    rate_total: Vec<f64>,
    // layout [((u * (K_a + 1) + ca) * (K_l + 1) + cl) * n_y + y]
    y_table: Vec<f64>,
}

const ROW_SUM_TOL: f64 = 1e-12;

impl ScenarioModel {
    pub fn from_config(cfg: ScenarioConfig) -> Result<Self> {
        let bad = |msg: String| Err(GctError::validation(msg));
        if !(cfg.tau.is_finite() && cfg.tau > 0.0) {
            return bad(format!("tau must be finite and positive, got {}", cfg.tau));
        }
        if cfg.u.is_empty() {
            return bad("u support is empty".into());
        }
        if cfg.n_max < 1 {
            return bad("n_max must be at least 1".into());
        }
        let mut psum = 0.0;
        for s in &cfg.u {
            if !(s.prob >= 0.0 && s.prob.is_finite()) {
                return bad(format!("prior probability {} is invalid", s.prob));
            }
            psum += s.prob;
        }
        if (psum - 1.0).abs() > ROW_SUM_TOL {
            return bad(format!("prior sums to {psum}, expected 1"));
        }
        if cfg.y_support.is_empty() {
            return bad("y_support is empty".into());
        }
        let n_u = cfg.u.len();
        let ka1 = cfg.caps.a + 1;
        let kl1 = cfg.caps.l + 1;
        let n_y = cfg.y_support.len();

        let flatten_rates = |table: &Vec<Vec<Vec<f64>>>, name: &str| -> Result<Vec<f64>> {
            if table.len() != n_u {
                return Err(GctError::validation(format!("{name} has {} rows, expected {n_u}", table.len())));
            }
            let mut out = vec![0.0; ka1 * kl1 * n_u];
            for (u, by_a) in table.iter().enumerate() {
                if by_a.len() != ka1 {
                    return Err(GctError::validation(format!("{name}[{u}] has {} entries, expected {ka1}", by_a.len())));
                }
                for (ca, by_l) in by_a.iter().enumerate() {
                    if by_l.len() != kl1 {
                        return Err(GctError::validation(format!(
                            "{name}[{u}][{ca}] has {} entries, expected {kl1}",
                            by_l.len()
                        )));
                    }
                    for (cl, &r) in by_l.iter().enumerate() {
                        if !(r >= 0.0 && r.is_finite()) {
                            return Err(GctError::validation(format!("{name}[{u}][{ca}][{cl}] = {r} is invalid")));
                        }
                        out[(ca * kl1 + cl) * n_u + u] = r;
                    }
                }
            }
            Ok(out)
        };
        let rate_a = flatten_rates(&cfg.rate_a, "rate_a")?;
        let rate_l = flatten_rates(&cfg.rate_l, "rate_l")?;

        if cfg.y_table.len() != n_u {
            return bad(format!("y_table has {} rows, expected {n_u}", cfg.y_table.len()));
        }
        let mut y_table = Vec::with_capacity(n_u * ka1 * kl1 * n_y);
        for (u, by_a) in cfg.y_table.iter().enumerate() {
            if by_a.len() != ka1 {
                return bad(format!("y_table[{u}] has {} entries, expected {ka1}", by_a.len()));
            }
            for (ca, by_l) in by_a.iter().enumerate() {
                if by_l.len() != kl1 {
                    return bad(format!("y_table[{u}][{ca}] has {} entries, expected {kl1}", by_l.len()));
                }
                for (cl, row) in by_l.iter().enumerate() {
                    if row.len() != n_y {
                        return bad(format!("y_table[{u}][{ca}][{cl}] has length {}, expected {n_y}", row.len()));
                    }
                    if row.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                        return bad(format!("y_table[{u}][{ca}][{cl}] has a negative or non-finite entry"));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > ROW_SUM_TOL {
                        return bad(format!("y_table[{u}][{ca}][{cl}] sums to {s}"));
                    }
                    y_table.extend_from_slice(row);
                }
            }
        }

        let log_rate_a = rate_a.iter().map(|r| r.ln()).collect();
        let log_rate_l = rate_l.iter().map(|r| r.ln()).collect();
        let rate_total = rate_a.iter().zip(&rate_l).map(|(a, l)| a + l).collect();
        Ok(Self {
            id: cfg.id,
            tau: cfg.tau,
            u_values: cfg.u.iter().map(|s| s.value).collect(),
            prior: cfg.u.iter().map(|s| s.prob).collect(),
            caps: cfg.caps,
            n_max: cfg.n_max,
            y_support: cfg.y_support,
            tolerances: cfg.tolerances.unwrap_or_default(),
            rate_a,
            rate_l,
            log_rate_a,
            log_rate_l,
            rate_total,
            y_table,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(s).map_err(|e| GctError::validation(format!("scenario json: {e}")))?;
        Self::from_config(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GctError::validation(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Builds a model from closures over `(u, capped n_a, capped n_l)`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fn(
        tau: f64,
        prior: &[f64],
        caps: Caps,
        y_support: &[f64],
        n_max: usize,
        rate_a: impl Fn(usize, usize, usize) -> f64,
        rate_l: impl Fn(usize, usize, usize) -> f64,
        y_row: impl Fn(usize, usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let grid = |f: &dyn Fn(usize, usize, usize) -> f64| -> Vec<Vec<Vec<f64>>> {
            (0..prior.len())
                .map(|u| (0..=caps.a).map(|a| (0..=caps.l).map(|l| f(u, a, l)).collect()).collect())
                .collect()
        };
        let cfg = ScenarioConfig {
            id: None,
            description: None,
            tau,
            u: prior
                .iter()
                .enumerate()
                .map(|(i, &p)| LatentState { value: i as f64, prob: p })
                .collect(),
            rate_a: grid(&rate_a),
            rate_l: grid(&rate_l),
            caps,
            y_support: y_support.to_vec(),
            y_table: (0..prior.len())
                .map(|u| (0..=caps.a).map(|a| (0..=caps.l).map(|l| y_row(u, a, l)).collect()).collect())
                .collect(),
            n_max,
            tolerances: None,
        };
        Self::from_config(cfg)
    }

    pub fn to_config(&self) -> ScenarioConfig {
        let n_u = self.n_u();
        let table = |flat: &[f64]| -> Vec<Vec<Vec<f64>>> {
            (0..n_u)
                .map(|u| {
                    (0..=self.caps.a)
                        .map(|a| (0..=self.caps.l).map(|l| flat[self.rate_index(a, l) + u]).collect())
                        .collect()
                })
                .collect()
        };
        ScenarioConfig {
            id: self.id.clone(),
            description: None,
            tau: self.tau,
            u: self
                .u_values
                .iter()
                .zip(&self.prior)
                .map(|(&value, &prob)| LatentState { value, prob })
                .collect(),
            rate_a: table(&self.rate_a),
            rate_l: table(&self.rate_l),
            caps: self.caps,
            y_support: self.y_support.clone(),
            y_table: (0..n_u)
                .map(|u| {
                    (0..=self.caps.a)
                        .map(|a| (0..=self.caps.l).map(|l| self.y_row(u, a, l).to_vec()).collect())
                        .collect()
                })
                .collect(),
            n_max: self.n_max,
            tolerances: Some(self.tolerances),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(GctError::validation(format!("tau must be finite and positive, got {tau}")));
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n_u(&self) -> usize {
        self.prior.len()
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn u_values(&self) -> &[f64] {
        &self.u_values
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn y_support(&self) -> &[f64] {
        &self.y_support
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances
    }

    #[inline]
    fn rate_index(&self, n_a: usize, n_l: usize) -> usize {
        let ca = n_a.min(self.caps.a);
        let cl = n_l.min(self.caps.l);
        (ca * (self.caps.l + 1) + cl) * self.n_u()
    }

    /// Per-u rates of `mark` at the given (uncapped) counts.
    #[inline]
    pub fn rates(&self, mark: Mark, n_a: usize, n_l: usize) -> &[f64] {
        let i = self.rate_index(n_a, n_l);
        let table = match mark {
            Mark::Action => &self.rate_a,
            Mark::Longitudinal => &self.rate_l,
        };
        &table[i..i + self.n_u()]
    }

    #[inline]
    pub(crate) fn log_rates(&self, mark: Mark, n_a: usize, n_l: usize) -> &[f64] {
        let i = self.rate_index(n_a, n_l);
        let table = match mark {
            Mark::Action => &self.log_rate_a,
            Mark::Longitudinal => &self.log_rate_l,
        };
        &table[i..i + self.n_u()]
    }

    /// Per-u total event rate `rate_a + rate_l`.
    #[inline]
    pub fn total_rates(&self, n_a: usize, n_l: usize) -> &[f64] {
        let i = self.rate_index(n_a, n_l);
        &self.rate_total[i..i + self.n_u()]
    }

    pub fn rate(&self, mark: Mark, u: usize, n_a: usize, n_l: usize) -> f64 {
        self.rates(mark, n_a, n_l)[u]
    }

    /// Outcome distribution given `u` and the (uncapped) final counts.
    #[inline]
    pub fn y_row(&self, u: usize, n_a: usize, n_l: usize) -> &[f64] {
        let n_y = self.y_support.len();
        let ca = n_a.min(self.caps.a);
        let cl = n_l.min(self.caps.l);
        let i = ((u * (self.caps.a + 1) + ca) * (self.caps.l + 1) + cl) * n_y;
        &self.y_table[i..i + n_y]
    }

    pub fn max_rate_l(&self) -> f64 {
        self.rate_l.iter().cloned().fold(0.0, f64::max)
    }

    fn independent_of_u(&self, table: &[f64]) -> bool {
        table.chunks(self.n_u()).all(|c| c.iter().all(|&r| r == c[0]))
    }

    /// True when `rate_a` does not depend on `u`: no unmeasured
    /// confounding of the action process, by construction.
    pub fn nuc_flag(&self) -> bool {
        self.independent_of_u(&self.rate_a)
    }

    pub fn rate_l_independent_of_u(&self) -> bool {
        self.independent_of_u(&self.rate_l)
    }

    pub fn rates_independent_of_u(&self) -> bool {
        self.nuc_flag() && self.rate_l_independent_of_u()
    }
}
