//! Three-way verification: counterfactual oracle, Monte Carlo formula and
//! quadrature formula, compared in total variation.

use std::time::Instant;

use serde::Serialize;

use crate::error::{GctError, Result};
use crate::gformula::{g_formula_mc_detailed, g_formula_quadrature, McResult, QuadratureResult};
use crate::outcome::OutcomeDist;
use crate::plans::Plan;
use crate::scenario::ScenarioModel;
use crate::simulator::counterfactual_oracle;

/// Total variation distance; leftover mass (`1 - total`) counts as an
/// extra outcome cell.
pub fn tv_distance(p: &OutcomeDist, q: &OutcomeDist) -> Result<f64> {
    if p.support.len() != q.support.len() || p.support.iter().zip(&q.support).any(|(a, b)| a != b) {
        return Err(GctError::domain("distributions have different supports"));
    }
    let body: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok(0.5 * (body + (p.leftover() - q.leftover()).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyParams {
    pub oracle_n: usize,
    pub mc_n: usize,
    pub m: usize,
    pub n_max: usize,
    pub seed: u64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            oracle_n: 200_000,
            mc_n: 200_000,
            m: 200,
            n_max: 4,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Runtimes {
    pub oracle_s: f64,
    pub mc_s: f64,
    pub quad_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub plan: String,
    pub params: VerifyParams,
    pub oracle_dist: Option<OutcomeDist>,
    pub mc_dist: Option<OutcomeDist>,
    pub quad_result: Option<QuadratureResult>,
    pub tv_oracle_mc: f64,
    pub tv_oracle_quad: f64,
    pub tv_mc_quad: f64,
    pub mc_stderr: Vec<f64>,
    pub nuc_flag: bool,
    pub pass: bool,
    pub error: Option<String>,
    pub runtimes: Runtimes,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "scenario",
        "plan",
        "nuc",
        "tv_oracle_mc",
        "tv_oracle_quad",
        "tv_mc_quad",
        "max_mc_stderr",
        "leftover",
        "pass",
        "error",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.scenario.clone(),
            self.plan.clone(),
            self.nuc_flag.to_string(),
            self.tv_oracle_mc.to_string(),
            self.tv_oracle_quad.to_string(),
            self.tv_mc_quad.to_string(),
            max_of(&self.mc_stderr).to_string(),
            self.quad_result.as_ref().map_or(f64::NAN, |q| q.leftover_mass).to_string(),
            self.pass.to_string(),
            self.error.clone().unwrap_or_default(),
        ]
    }

    /// Header plus one row, CSV-quoted.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::CSV_HEADER).expect("in-memory csv");
        w.write_record(self.csv_record()).expect("in-memory csv");
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> (Result<T>, f64) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed().as_secs_f64())
}

/// Runs the oracle, the Monte Carlo evaluator and the quadrature in
/// parallel and applies the pass rule: with no unmeasured confounding every
/// pair must agree within tolerance; otherwise both formula evaluators must
/// sit at least the confounding floor away from the oracle.
pub fn verify(model: &ScenarioModel, plan: &Plan, params: VerifyParams) -> VerifyReport {
    let ((oracle, oracle_s), ((mc, mc_s), (quad, quad_s))) = rayon::join(
        || timed(|| counterfactual_oracle(model, plan, params.oracle_n, params.seed)),
        || {
            rayon::join(
                || timed(|| g_formula_mc_detailed(model, plan, params.mc_n, params.seed.wrapping_add(1))),
                || timed(|| g_formula_quadrature(model, plan, params.m, params.n_max)),
            )
        },
    );
    let mut report = VerifyReport {
        scenario: model.id().unwrap_or("unnamed").to_string(),
        plan: plan.label(),
        params,
        oracle_dist: oracle.as_ref().ok().cloned(),
        mc_dist: mc.as_ref().ok().map(|r| r.dist.clone()),
        quad_result: quad.as_ref().ok().cloned(),
        tv_oracle_mc: f64::NAN,
        tv_oracle_quad: f64::NAN,
        tv_mc_quad: f64::NAN,
        mc_stderr: mc.as_ref().map(|r| r.stderr.clone()).unwrap_or_default(),
        nuc_flag: model.nuc_flag(),
        pass: false,
        error: None,
        runtimes: Runtimes { oracle_s, mc_s, quad_s },
    };
    match compare(model, oracle, mc, quad) {
        Ok((om, oq, mq, pass)) => {
            report.tv_oracle_mc = om;
            report.tv_oracle_quad = oq;
            report.tv_mc_quad = mq;
            report.pass = pass;
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

fn compare(
    model: &ScenarioModel,
    oracle: Result<OutcomeDist>,
    mc: Result<McResult>,
    quad: Result<QuadratureResult>,
) -> Result<(f64, f64, f64, bool)> {
    let (oracle, mc, quad) = (oracle?, mc?, quad?);
    let tol = model.tolerances();
    let om = tv_distance(&oracle, &mc.dist)?;
    let oq = tv_distance(&oracle, &quad.dist)?;
    let mq = tv_distance(&mc.dist, &quad.dist)?;
    let noise = 3.0 * max_of(&mc.stderr);
    let pass = if model.nuc_flag() {
        oq <= tol.oracle_quad && om <= tol.oracle_mc.max(noise) && mq <= tol.mc_quad.max(noise)
    } else {
        oq >= tol.confounding_floor && om >= tol.confounding_floor
    };
    Ok((om, oq, mq, pass))
}
