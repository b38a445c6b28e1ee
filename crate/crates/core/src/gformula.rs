//! Evaluators of the g-computation formula for `Law(Y^g)`.
//!
//! The deterministic evaluator enumerates placements of longitudinal events
//! on grid midpoints. From a node at time `t0` the next event may fall in any
//! later window: the remainder of the current cell plus the next cell first,
//! then whole cells. A window's probability is the survival to its start
//! times one minus the survival across it, all under the marginal
//! longitudinal intensity along the plan-consistent history, so the scheme is
//! a proper discrete process: captured mass plus leftover is exactly one up
//! to rounding. Nodes that exhaust the event budget report their remaining
//! event probability as leftover.
//!
//! The Monte Carlo evaluator simulates the same longitudinal process by
//! thinning and averages the conditional outcome laws.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{GctError, Result};
use crate::filter::{mix_outcome_rows, PathState};
use crate::hazards::exp_by_inversion;
use crate::outcome::OutcomeDist;
use crate::plans::{Plan, PlanCursor};
use crate::scenario::ScenarioModel;
use crate::simulator::sample_rng;
use crate::trajectory::Mark;

/// Upper limit on the number of enumerated event placements; larger
/// `(m, n)` combinations are rejected instead of running for hours.
pub const MAX_PLACEMENTS: f64 = 1e9;

const MC_CHUNK: usize = 1024;
const THINNING_SLACK: f64 = 1e-12;

/// Cell boundaries on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bounds: Vec<f64>,
    mids: Vec<f64>,
}

impl Grid {
    fn from_bounds(bounds: Vec<f64>) -> Self {
        let mids = bounds.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self { bounds, mids }
    }

    /// `m` equal cells on `[0, tau]`.
    pub fn uniform(tau: f64, m: usize) -> Self {
        let h = tau / m as f64;
        let mut b: Vec<f64> = (0..m).map(|i| i as f64 * h).collect();
        b.push(tau);
        Self::from_bounds(b)
    }

    /// The uniform grid shifted by half a cell, with half cells at both ends.
    pub fn shifted(tau: f64, m: usize) -> Self {
        let h = tau / m as f64;
        let mut b = vec![0.0];
        b.extend((0..m).map(|i| (i as f64 + 0.5) * h).filter(|x| *x < tau));
        b.push(tau);
        Self::from_bounds(b)
    }

    /// Cells restricted to `[lo, sigma]`.
    fn clip_upper(&self, sigma: f64) -> Self {
        let mut b: Vec<f64> = self.bounds.iter().cloned().filter(|x| *x < sigma).collect();
        b.push(sigma);
        Self::from_bounds(b)
    }

    /// Cells restricted to `[sigma, hi]`.
    fn clip_lower(&self, sigma: f64) -> Self {
        let mut b = vec![sigma];
        b.extend(self.bounds.iter().cloned().filter(|x| *x > sigma));
        Self::from_bounds(b)
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn cells(&self) -> usize {
        self.mids.len()
    }

    pub fn hi(&self) -> f64 {
        *self.bounds.last().expect("grid has bounds")
    }

    /// Event windows after a node at `t0` whose first window starts in cell
    /// `c`: `(placement, window end, child cursor)`.
    fn windows(&self, t0: f64, c: usize) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        let n = self.cells();
        let lone = (c == n && t0 < self.hi()).then(|| (0.5 * (t0 + self.hi()), self.hi(), n + 1));
        (c.min(n)..n)
            .map(move |k| (self.mids[k], self.bounds[k + 1], k + 1))
            .chain(lone)
    }
}

/// Sub-normalized outcome law from the deterministic evaluator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub dist: OutcomeDist,
    /// Probability of more than `n_max_used` longitudinal events, accumulated
    /// directly from the truncated nodes.
    pub leftover_mass: f64,
    pub n_max_used: usize,
    pub grid_size: usize,
    /// Whether the half-cell shifted grid was used after a tie.
    pub shifted_grid: bool,
    /// `P(Poisson(max rate_l * tau) > n_max_used)`, an upper bound on the
    /// leftover.
    pub poisson_tail_bound: f64,
}

impl QuadratureResult {
    pub fn to_json_value(&self) -> serde_json::Value {
        json!({
            "dist": self.dist,
            "leftover": self.leftover_mass,
            "params": {
                "m": self.grid_size,
                "n_max": self.n_max_used,
                "shifted_grid": self.shifted_grid,
                "poisson_tail_bound": self.poisson_tail_bound,
            }
        })
    }
}

/// `P(Poisson(mu) > n)`, summed from the tail side.
pub fn poisson_tail(mu: f64, n: usize) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    let k0 = (n + 1) as f64;
    // log of mu^k0 e^-mu / k0!
    let log_first = k0 * mu.ln() - mu - (1..=n + 1).map(|k| (k as f64).ln()).sum::<f64>();
    let mut term = log_first.exp();
    let mut sum = 0.0;
    let mut k = k0;
    while term > 0.0 && (term > 1e-18 * sum || k < mu) {
        sum += term;
        k += 1.0;
        term *= mu / k;
    }
    sum.min(1.0)
}

fn binomial(m: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64)
}

fn check_params(model: &ScenarioModel, plan: &Plan, m: usize, n: usize) -> Result<()> {
    plan.validate()?;
    if m < 2 {
        return Err(GctError::domain(format!("grid size {m} must be at least 2")));
    }
    let placements: f64 = (0..=n.min(m + 1)).map(|k| binomial(m + 1, k)).sum();
    if placements > MAX_PLACEMENTS {
        return Err(GctError::domain(format!(
            "m = {m}, n = {n} needs about {placements:.2e} placements (limit {MAX_PLACEMENTS:.0e}); lower m or n"
        )));
    }
    if model.tau() <= 0.0 {
        return Err(GctError::domain("horizon must be positive"));
    }
    Ok(())
}

/// Captured outcome mass and truncation leftover of a subtree.
#[derive(Debug, Clone)]
struct Acc {
    probs: Vec<f64>,
    leftover: f64,
}

impl Acc {
    fn new(n: usize) -> Self {
        Self {
            probs: vec![0.0; n],
            leftover: 0.0,
        }
    }

    fn add(&mut self, other: &Acc) {
        for (a, b) in self.probs.iter_mut().zip(&other.probs) {
            *a += b;
        }
        self.leftover += other.leftover;
    }
}

type Terminal<'a> = dyn Fn(&PathState, f64, &mut Acc) -> Result<()> + Sync + 'a;

/// Depth-first enumeration over the observational (filtered) walk.
struct Engine<'a> {
    model: &'a ScenarioModel,
    grid: &'a Grid,
    width: usize,
    terminal: &'a Terminal<'a>,
}

impl Engine<'_> {
    fn run(&self, plan: &Plan, budget: usize) -> Result<Acc> {
        let root = PathState::start(self.model, plan);
        let mut acc = Acc::new(self.width);
        if budget == 0 {
            self.leaf(root, 1.0, &mut acc)?;
            return Ok(acc);
        }
        // expand the root sequentially, then the subtrees in parallel
        let mut children = Vec::new();
        let surv = self.expand(root, 0, 1.0, &mut |child, c, q| {
            children.push((child, c, q));
            Ok(())
        })?;
        let subtrees: Vec<Result<Acc>> = children
            .into_par_iter()
            .map(|(child, c, q)| {
                let mut a = Acc::new(self.width);
                self.dfs(child, c, q, budget - 1, &mut a)?;
                Ok(a)
            })
            .collect();
        for s in subtrees {
            acc.add(&s?);
        }
        let (end, p) = surv;
        (self.terminal)(&end, p, &mut acc)?;
        Ok(acc)
    }

    fn leaf(&self, mut state: PathState, p: f64, acc: &mut Acc) -> Result<()> {
        let h = state.advance(self.model, self.grid.hi(), true)?;
        acc.leftover += p * -(-h).exp_m1();
        (self.terminal)(&state, p * (-h).exp(), acc)
    }

    /// Visits every child of a node; returns the no-further-event state at
    /// the grid end and its probability.
    fn expand<'p>(
        &self,
        mut state: PathState<'p>,
        c: usize,
        p: f64,
        visit: &mut dyn FnMut(PathState<'p>, usize, f64) -> Result<()>,
    ) -> Result<(PathState<'p>, f64)> {
        let mut surv = p;
        for (x, end, child_c) in self.grid.windows(state.t, c) {
            let mut branch = state.clone();
            let h1 = branch.advance_to_event(self.model, x)?;
            let mut rest = branch.clone();
            let h = h1 + rest.advance(self.model, end, true)?;
            let q = surv * -(-h).exp_m1();
            if q > 0.0 {
                branch.observe_l(self.model)?;
                visit(branch, child_c, q)?;
            }
            surv *= (-h).exp();
            state = rest;
        }
        state.advance(self.model, self.grid.hi(), true)?;
        Ok((state, surv))
    }

    fn dfs(&self, state: PathState, c: usize, p: f64, budget: usize, acc: &mut Acc) -> Result<()> {
        if budget == 0 {
            return self.leaf(state, p, acc);
        }
        let (end, surv) = self.expand(state, c, p, &mut |child, cc, q| self.dfs(child, cc, q, budget - 1, acc))?;
        (self.terminal)(&end, surv, acc)
    }
}

/// Runs `f` on the uniform grid, retrying once on the shifted grid if a
/// placement ties with a planned action.
fn with_tie_retry<T>(tau: f64, m: usize, f: impl Fn(&Grid) -> Result<T>) -> Result<(T, bool)> {
    match f(&Grid::uniform(tau, m)) {
        Err(GctError::Tie { .. }) => f(&Grid::shifted(tau, m)).map(|r| (r, true)),
        other => other.map(|r| (r, false)),
    }
}

fn finish(model: &ScenarioModel, acc: Acc, m: usize, n: usize, shifted: bool) -> Result<QuadratureResult> {
    let probs = acc.probs.iter().map(|p| p.max(0.0)).collect();
    Ok(QuadratureResult {
        dist: OutcomeDist::new(model.y_support().to_vec(), probs)?,
        leftover_mass: acc.leftover.clamp(0.0, 1.0),
        n_max_used: n,
        grid_size: m,
        shifted_grid: shifted,
        poisson_tail_bound: poisson_tail(model.max_rate_l() * model.tau(), n),
    })
}

/// The g-formula on an `m`-cell grid with at most `n` longitudinal events.
pub fn g_formula_quadrature(model: &ScenarioModel, plan: &Plan, m: usize, n: usize) -> Result<QuadratureResult> {
    check_params(model, plan, m, n)?;
    let terminal = |s: &PathState, p: f64, acc: &mut Acc| {
        s.add_law_y(model, p, &mut acc.probs);
        Ok(())
    };
    let (acc, shifted) = with_tie_retry(model.tau(), m, |grid| {
        Engine {
            model,
            grid,
            width: model.y_support().len(),
            terminal: &terminal,
        }
        .run(plan, n)
    })?;
    finish(model, acc, m, n, shifted)
}

/// The same evaluator with the outcome law replaced by the constant 1:
/// returns `(captured mass, leftover)`.
pub fn no_explosion_mass(model: &ScenarioModel, plan: &Plan, m: usize, n: usize) -> Result<(f64, f64)> {
    check_params(model, plan, m, n)?;
    let terminal = |_: &PathState, p: f64, acc: &mut Acc| {
        acc.probs[0] += p;
        Ok(())
    };
    let (acc, _) = with_tie_retry(model.tau(), m, |grid| {
        Engine {
            model,
            grid,
            width: 1,
            terminal: &terminal,
        }
        .run(plan, n)
    })?;
    Ok((acc.probs[0], acc.leftover))
}

/// Counterfactual walk for one latent state: longitudinal hazard is the
/// state's own rate, actions do not carry information.
#[derive(Debug, Clone)]
struct CfState<'p> {
    t: f64,
    u: usize,
    n_a: usize,
    n_l: usize,
    cursor: PlanCursor<'p>,
}

impl CfState<'_> {
    fn advance(&mut self, model: &ScenarioModel, to: f64, include_end: bool) -> f64 {
        let caps = model.caps();
        let mut h = 0.0;
        while let Some(a) = self.cursor.next() {
            if !(a < to || (include_end && a == to)) {
                break;
            }
            h += model.rate(Mark::Longitudinal, self.u, self.n_a, self.n_l) * (a - self.t);
            self.t = a;
            self.n_a = (self.n_a + 1).min(caps.a);
            self.cursor.advance();
        }
        if to > self.t {
            h += model.rate(Mark::Longitudinal, self.u, self.n_a, self.n_l) * (to - self.t);
            self.t = to;
        }
        h
    }

    fn observe_l(&mut self, model: &ScenarioModel) {
        self.n_l = (self.n_l + 1).min(model.caps().l);
        self.cursor.on_longitudinal(self.t);
    }
}

type CfKey = (u64, usize, usize, usize, usize, u64, usize);

#[derive(Debug)]
struct CfOut {
    probs: Vec<f64>,
    leftover: f64,
}

/// Per-state counterfactual outcome law on a grid, memoized: from a given
/// time and cell, the continuation depends only on the state, the capped
/// counts, the plan position and the remaining event budget.
struct CfEngine<'a> {
    model: &'a ScenarioModel,
    grid: &'a Grid,
    memo: Mutex<HashMap<CfKey, Arc<CfOut>>>,
}

impl<'a> CfEngine<'a> {
    fn new(model: &'a ScenarioModel, grid: &'a Grid) -> Self {
        Self {
            model,
            grid,
            memo: Mutex::new(HashMap::new()),
        }
    }

    fn node(&self, mut w: CfState, c: usize, budget: usize) -> Result<Arc<CfOut>> {
        let key = (w.t.to_bits(), c, w.u, w.n_a, w.n_l, w.cursor.continuation_key(), budget);
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(hit.clone());
        }
        let model = self.model;
        let hi = self.grid.hi();
        let mut probs = vec![0.0; model.y_support().len()];
        let mut leftover = 0.0;
        let mut surv = 1.0;
        if budget == 0 {
            let h = w.advance(model, hi, true);
            leftover = -(-h).exp_m1();
            surv = (-h).exp();
        } else {
            for (x, end, child_c) in self.grid.windows(w.t, c) {
                let mut branch = w.clone();
                let h1 = branch.advance(model, x, false);
                if branch.cursor.next() == Some(x) {
                    return Err(GctError::Tie { time: x });
                }
                let mut rest = branch.clone();
                let h = h1 + rest.advance(model, end, true);
                let q = surv * -(-h).exp_m1();
                if q > 0.0 {
                    branch.observe_l(model);
                    let child = self.node(branch, child_c, budget - 1)?;
                    for (a, b) in probs.iter_mut().zip(&child.probs) {
                        *a += q * b;
                    }
                    leftover += q * child.leftover;
                }
                surv *= (-h).exp();
                w = rest;
            }
            w.advance(model, hi, true);
        }
        for (a, b) in probs.iter_mut().zip(model.y_row(w.u, w.n_a, w.n_l)) {
            *a += surv * b;
        }
        let out = Arc::new(CfOut { probs, leftover });
        self.memo.lock().expect("memo lock").insert(key, out.clone());
        Ok(out)
    }
}

/// `Law(Y^g)` computed directly from the counterfactual model (latent state
/// known, longitudinal events at their own rates) on the same grid scheme.
/// Needs no filtering, so it serves as a deterministic reference.
pub fn counterfactual_law_quadrature(model: &ScenarioModel, plan: &Plan, m: usize, n: usize) -> Result<QuadratureResult> {
    plan.validate()?;
    if m < 2 {
        return Err(GctError::domain(format!("grid size {m} must be at least 2")));
    }
    let (acc, shifted) = with_tie_retry(model.tau(), m, |grid| {
        let engine = CfEngine::new(model, grid);
        let mut acc = Acc::new(model.y_support().len());
        for (u, &pu) in model.prior().iter().enumerate() {
            if pu == 0.0 {
                continue;
            }
            let w = CfState {
                t: 0.0,
                u,
                n_a: 0,
                n_l: 0,
                cursor: plan.cursor(),
            };
            let out = engine.node(w, 0, n)?;
            for (a, b) in acc.probs.iter_mut().zip(&out.probs) {
                *a += pu * b;
            }
            acc.leftover += pu * out.leftover;
        }
        Ok(acc)
    })?;
    finish(model, acc, m, n, shifted)
}

/// `b(sigma)` for each `sigma`: the formula truncated at `sigma`, with the
/// outcome law replaced by the posterior mixture over `u` of the per-state
/// counterfactual outcome laws of the plan continuation after `sigma`.
/// At `sigma = tau` this is the g-formula itself.
pub fn b_curve(model: &ScenarioModel, plan: &Plan, sigmas: &[f64], m: usize, n: usize) -> Result<Vec<QuadratureResult>> {
    check_params(model, plan, m, n)?;
    let tau = model.tau();
    let mut prev = 0.0;
    for &s in sigmas {
        if !(s > prev && s <= tau) {
            return Err(GctError::domain(format!("sigmas must be increasing in (0, {tau}], got {s}")));
        }
        prev = s;
    }
    sigmas
        .iter()
        .map(|&sigma| {
            if sigma == tau {
                return g_formula_quadrature(model, plan, m, n);
            }
            let (acc, shifted) = with_tie_retry(tau, m, |grid| b_at(model, plan, grid, sigma, n))?;
            finish(model, acc, m, n, shifted)
        })
        .collect()
}

fn b_at(model: &ScenarioModel, plan: &Plan, grid: &Grid, sigma: f64, n: usize) -> Result<Acc> {
    let outer = grid.clip_upper(sigma);
    let inner = grid.clip_lower(sigma);
    let cf = CfEngine::new(model, &inner);
    let caps = model.caps();
    let terminal = |s: &PathState, p: f64, acc: &mut Acc| -> Result<()> {
        let budget = n - s.n_l;
        for (u, w) in s.posterior().iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let start = CfState {
                t: sigma,
                u,
                n_a: s.n_a.min(caps.a),
                n_l: s.n_l.min(caps.l),
                cursor: s.cursor,
            };
            let out = cf.node(start, 0, budget)?;
            let c = p * w;
            for (a, b) in acc.probs.iter_mut().zip(&out.probs) {
                *a += c * b;
            }
            acc.leftover += c * out.leftover;
        }
        Ok(())
    };
    Engine {
        model,
        grid: &outer,
        width: model.y_support().len(),
        terminal: &terminal,
    }
    .run(plan, n)
}

/// Monte Carlo estimate with per-cell standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub dist: OutcomeDist,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
}

impl McResult {
    pub fn to_json_value(&self) -> serde_json::Value {
        json!({
            "dist": self.dist,
            "leftover": 0.0,
            "params": { "n_samples": self.n_samples, "stderr": self.stderr }
        })
    }
}

/// Running mean and sum of squared deviations per cell.
#[derive(Debug, Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; k],
            m2: vec![0.0; k],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = o.clone();
            return;
        }
        let n = self.n + o.n;
        for i in 0..self.mean.len() {
            let d = o.mean[i] - self.mean[i];
            self.mean[i] += d * o.n / n;
            self.m2[i] += o.m2[i] + d * d * self.n * o.n / n;
        }
        self.n = n;
    }
}

fn mc_sample(model: &ScenarioModel, plan: &Plan, bound: f64, seed: u64, index: u64, out: &mut [f64]) -> Result<()> {
    let mut rng = sample_rng(seed, index);
    let tau = model.tau();
    let mut state = PathState::start(model, plan);
    loop {
        let next = if bound > 0.0 {
            state.t + exp_by_inversion(&mut rng, bound)
        } else {
            f64::INFINITY
        };
        if next > tau {
            state.walk(model, tau, true)?;
            break;
        }
        state.walk(model, next, false)?;
        if state.cursor.next() == Some(next) {
            return Err(GctError::Tie { time: next });
        }
        let lam = state.marginal_rate(model, Mark::Longitudinal);
        if lam > bound * (1.0 + THINNING_SLACK) {
            return Err(GctError::Invariant(format!(
                "thinning bound {bound} below the intensity {lam} at {next}"
            )));
        }
        let v: f64 = rng.gen();
        if v * bound < lam {
            state.observe_l(model)?;
            if state.events() > model.n_max() {
                return Err(GctError::Explosion { n_max: model.n_max() });
            }
        }
    }
    if state.events() > model.n_max() {
        return Err(GctError::Explosion { n_max: model.n_max() });
    }
    out.iter_mut().for_each(|x| *x = 0.0);
    mix_outcome_rows(model, &state.posterior(), state.n_a, state.n_l, 1.0, out);
    Ok(())
}

/// Thinning simulation of the longitudinal process under the marginal
/// intensity along the plan-consistent history, averaging the conditional
/// outcome laws.
pub fn g_formula_mc_detailed(model: &ScenarioModel, plan: &Plan, n_samples: usize, seed: u64) -> Result<McResult> {
    plan.validate()?;
    if n_samples == 0 {
        return Err(GctError::domain("need at least one sample"));
    }
    let k = model.y_support().len();
    let bound = model.max_rate_l();
    let chunks: Vec<Result<Moments>> = (0..n_samples.div_ceil(MC_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut mom = Moments::new(k);
            let mut law = vec![0.0; k];
            let lo = c * MC_CHUNK;
            for i in lo..(lo + MC_CHUNK).min(n_samples) {
                mc_sample(model, plan, bound, seed, i as u64, &mut law)?;
                mom.push(&law);
            }
            Ok(mom)
        })
        .collect();
    let mut total = Moments::new(k);
    for c in chunks {
        total.merge(&c?);
    }
    let n = total.n;
    let stderr = total
        .m2
        .iter()
        .map(|s| if n > 1.0 { (s / (n - 1.0) / n).sqrt() } else { 0.0 })
        .collect();
    Ok(McResult {
        dist: OutcomeDist::new(model.y_support().to_vec(), total.mean)?,
        stderr,
        n_samples,
    })
}

pub fn g_formula_mc(model: &ScenarioModel, plan: &Plan, n_samples: usize, seed: u64) -> Result<OutcomeDist> {
    g_formula_mc_detailed(model, plan, n_samples, seed).map(|r| r.dist)
}
