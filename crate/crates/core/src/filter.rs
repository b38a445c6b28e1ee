//! Exact posterior filtering of the latent state from the event stream.
//!
//! Between events the posterior over `u` is tilted by the survival factor
//! `exp(-R(u) dt)` with `R = rate_a + rate_l`; at an event of mark `x` it is
//! reweighted by `rate_x(u)`. Marginalizing the per-state rates over this
//! posterior gives the observational intensities, and mixing the outcome
//! table over the terminal posterior gives `Law(Y | mu)`.
//!
//! All weights are kept as log weights.

use smallvec::SmallVec;

use crate::error::{GctError, Result};
use crate::outcome::OutcomeDist;
use crate::plans::{apply_plan, Plan, PlanCursor};
use crate::scenario::ScenarioModel;
use crate::trajectory::{Mark, Trajectory};

pub(crate) type Weights = SmallVec<[f64; 4]>;

const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Absolute tolerance for adaptive Simpson integration of the marginal
/// longitudinal intensity over one segment.
pub const SEGMENT_QUAD_TOL: f64 = 1e-9;
const SIMPSON_MAX_DEPTH: u32 = 48;

/// Posterior over the latent support at `at_time`.
///
/// `pending` is true for a left limit (after a survival update, before any
/// event at `at_time`) and false right after an event update.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    log_w: Weights,
    at_time: f64,
    pending: bool,
}

impl PosteriorState {
    pub fn prior(model: &ScenarioModel) -> Self {
        Self {
            log_w: model.prior().iter().map(|p| p.ln()).collect(),
            at_time: 0.0,
            pending: false,
        }
    }

    pub fn from_weights(weights: &[f64], at_time: f64) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(GctError::domain("weights must be nonempty, finite and nonnegative"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(GctError::domain(format!("weights sum to {s}, expected 1")));
        }
        Ok(Self {
            log_w: weights.iter().map(|w| w.ln()).collect(),
            at_time,
            pending: false,
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_w.iter().map(|l| l.exp()).collect()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_w
    }

    pub fn at_time(&self) -> f64 {
        self.at_time
    }

    pub fn is_pending(&self) -> bool {
        self.pending
    }

    pub fn len(&self) -> usize {
        self.log_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }

    /// Posterior mean of per-state values.
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.log_w.iter().zip(values).map(|(l, v)| l.exp() * v).sum()
    }
}

fn all_equal(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

fn check_rates(rates: &[f64], n: usize) -> Result<()> {
    if rates.len() != n {
        return Err(GctError::domain(format!("expected {n} per-state rates, got {}", rates.len())));
    }
    if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(GctError::domain("rates must be finite and nonnegative"));
    }
    Ok(())
}

/// Shifts log weights so they sum to one in linear space.
fn normalize(lw: &mut [f64]) -> Result<()> {
    let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(GctError::NumericalUnderflow);
    }
    let s: f64 = lw.iter().map(|l| (l - m).exp()).sum();
    let shift = m + s.ln();
    for l in lw.iter_mut() {
        *l -= shift;
    }
    Ok(())
}

/// Survival tilt over `dt` with no events: `w(u) ∝ w(u) exp(-R(u) dt)`.
pub fn filter_interval(pi: &PosteriorState, total_rates: &[f64], dt: f64) -> Result<PosteriorState> {
    check_rates(total_rates, pi.len())?;
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(GctError::domain(format!("interval length {dt} must be finite and nonnegative")));
    }
    let mut out = pi.clone();
    out.at_time = pi.at_time + dt;
    out.pending = true;
    if dt == 0.0 || all_equal(total_rates) {
        return Ok(out);
    }
    let r_min = total_rates.iter().cloned().fold(f64::INFINITY, f64::min);
    for (l, r) in out.log_w.iter_mut().zip(total_rates) {
        *l -= (r - r_min) * dt;
    }
    normalize(&mut out.log_w)?;
    Ok(out)
}

/// Event update for a mark with per-state rates: `w(u) ∝ w(u) rate(u)`.
pub fn filter_event(pi: &PosteriorState, mark_rates: &[f64]) -> Result<PosteriorState> {
    check_rates(mark_rates, pi.len())?;
    let mut out = pi.clone();
    out.pending = false;
    let possible = pi
        .log_w
        .iter()
        .zip(mark_rates)
        .any(|(l, r)| *l > f64::NEG_INFINITY && *r > 0.0);
    if !possible {
        return Err(GctError::Support { time: pi.at_time });
    }
    if all_equal(mark_rates) {
        return Ok(out);
    }
    for (l, r) in out.log_w.iter_mut().zip(mark_rates) {
        *l += r.ln();
    }
    normalize(&mut out.log_w)?;
    Ok(out)
}

/// Posterior together with the event counts at its time.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCheckpoint {
    pub posterior: PosteriorState,
    pub n_a: usize,
    pub n_l: usize,
}

/// Filters along the trajectory's events in `(0, upto]`, optionally
/// finishing with the survival tilt from the last event to `upto`.
pub fn run_filter_checkpoint(
    model: &ScenarioModel,
    traj: &Trajectory,
    upto: f64,
    include_final_survival: bool,
) -> Result<FilterCheckpoint> {
    if !(0.0..=model.tau()).contains(&upto) {
        return Err(GctError::domain(format!("filter time {upto} outside [0, {}]", model.tau())));
    }
    let mut pi = PosteriorState::prior(model);
    let (mut n_a, mut n_l) = (0, 0);
    for ev in traj.events().iter().take_while(|e| e.time <= upto) {
        pi = filter_interval(&pi, model.total_rates(n_a, n_l), ev.time - pi.at_time)?;
        pi = filter_event(&pi, model.rates(ev.mark, n_a, n_l))?;
        match ev.mark {
            Mark::Action => n_a += 1,
            Mark::Longitudinal => n_l += 1,
        }
    }
    if include_final_survival {
        pi = filter_interval(&pi, model.total_rates(n_a, n_l), upto - pi.at_time)?;
    }
    Ok(FilterCheckpoint { posterior: pi, n_a, n_l })
}

pub fn run_filter(
    model: &ScenarioModel,
    traj: &Trajectory,
    upto: f64,
    include_final_survival: bool,
) -> Result<PosteriorState> {
    run_filter_checkpoint(model, traj, upto, include_final_survival).map(|c| c.posterior)
}

/// Observational intensity of `mark` at `s`, with no events between the
/// checkpoint and `s`.
pub fn marginal_intensity(model: &ScenarioModel, at: &FilterCheckpoint, s: f64, mark: Mark) -> Result<f64> {
    if s < at.posterior.at_time || s > model.tau() {
        return Err(GctError::domain(format!(
            "intensity time {s} outside [{}, {}]",
            at.posterior.at_time,
            model.tau()
        )));
    }
    let pi = filter_interval(&at.posterior, model.total_rates(at.n_a, at.n_l), s - at.posterior.at_time)?;
    Ok(pi.expect(model.rates(mark, at.n_a, at.n_l)))
}

/// Adds `scale * sum_u w(u) * y_row(u, counts)` into `out`.
pub(crate) fn mix_outcome_rows(model: &ScenarioModel, weights: &[f64], n_a: usize, n_l: usize, scale: f64, out: &mut [f64]) {
    for (u, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let c = scale * w;
        for (o, p) in out.iter_mut().zip(model.y_row(u, n_a, n_l)) {
            *o += c * p;
        }
    }
}

/// `Law(Y | mu = traj)`: the terminal posterior mixed over the outcome table
/// at the final counts.
pub fn conditional_law_y(model: &ScenarioModel, traj: &Trajectory) -> Result<OutcomeDist> {
    let cp = run_filter_checkpoint(model, traj, model.tau(), true)?;
    let mut probs = vec![0.0; model.y_support().len()];
    mix_outcome_rows(model, &cp.posterior.weights(), cp.n_a, cp.n_l, 1.0, &mut probs);
    OutcomeDist::new(model.y_support().to_vec(), probs)
}

/// Marginal survival of the longitudinal process over `(lo, hi]` along the
/// plan-consistent trajectory. `l_history` holds every longitudinal time,
/// all of them at or before `lo`.
pub fn marginal_l_survival(model: &ScenarioModel, plan: &Plan, l_history: &[f64], lo: f64, hi: f64) -> Result<f64> {
    if !(0.0 <= lo && lo < hi && hi <= model.tau()) {
        return Err(GctError::domain(format!("window ({lo}, {hi}] outside (0, {}]", model.tau())));
    }
    if l_history.iter().any(|&t| t > lo) {
        return Err(GctError::domain("longitudinal history extends past the window start"));
    }
    // validates the history against the plan (ties, ordering)
    apply_plan(plan, l_history, model.tau())?;
    let mut state = PathState::start(model, plan);
    for &l in l_history {
        state.advance_to_event(model, l)?;
        state.observe_l(model)?;
    }
    state.advance(model, lo, true)?;
    let h = state.advance(model, hi, true)?;
    Ok((-h).exp())
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Integral of the posterior-mean longitudinal rate over `(0, dt]` for a
/// two-state latent, in closed form. `x` is the log-odds of state 0.
fn two_state_l_hazard(x: f64, rl: &[f64], rtot: &[f64], dt: f64) -> f64 {
    let d = rtot[0] - rtot[1];
    let share0 = if x == f64::INFINITY {
        dt
    } else if x == f64::NEG_INFINITY {
        0.0
    } else if (d * dt).abs() < 0.1 {
        // three-point Gauss-Legendre; the integrand is nearly flat here
        let half = 0.5 * dt;
        let off = half * (0.6f64).sqrt();
        let f = |s: f64| sigmoid(x - d * s);
        half * (5.0 / 9.0 * f(half - off) + 8.0 / 9.0 * f(half) + 5.0 / 9.0 * f(half + off))
    } else {
        (softplus(x) - softplus(x - d * dt)) / d
    };
    rl[1] * dt + (rl[0] - rl[1]) * share0
}

fn posterior_mean_rate(lw: &[f64], rtot: &[f64], rl: &[f64], s: f64) -> f64 {
    let m = lw
        .iter()
        .zip(rtot)
        .map(|(l, r)| l - r * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for ((l, r), q) in lw.iter().zip(rtot).zip(rl) {
        let w = (l - r * s - m).exp();
        num += w * q;
        den += w;
    }
    num / den
}

pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(GctError::Numerical(format!(
                "adaptive Simpson did not converge on ({a}, {b})"
            )));
        }
        Ok(step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
    if !(a <= b) {
        return Err(GctError::domain(format!("integration bounds ({a}, {b}) reversed")));
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    if !(fa.is_finite() && fb.is_finite() && fm.is_finite()) {
        return Err(GctError::Numerical("non-finite integrand".into()));
    }
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(&f, a, b, fa, fm, fb, whole, tol, SIMPSON_MAX_DEPTH)
}

/// Adaptive-Simpson route for the segment hazard; valid for any latent
/// support size.
pub(crate) fn segment_l_hazard_simpson(lw: &[f64], rl: &[f64], rtot: &[f64], dt: f64) -> Result<f64> {
    adaptive_simpson(|s| posterior_mean_rate(lw, rtot, rl, s), 0.0, dt, SEGMENT_QUAD_TOL)
}

/// Integrated marginal longitudinal intensity over a segment of length `dt`
/// with constant per-state rates and starting log weights `lw`.
pub(crate) fn segment_l_hazard(lw: &[f64], rl: &[f64], rtot: &[f64], dt: f64) -> Result<f64> {
    if dt == 0.0 {
        return Ok(0.0);
    }
    if all_equal(rl) {
        return Ok(rl[0] * dt);
    }
    if lw.len() == 2 {
        return Ok(two_state_l_hazard(lw[0] - lw[1], rl, rtot, dt));
    }
    if all_equal(rtot) {
        return Ok(posterior_mean_rate(lw, rtot, rl, 0.0) * dt);
    }
    segment_l_hazard_simpson(lw, rl, rtot, dt)
}

/// Working state for walks along a plan-consistent trajectory: the time,
/// unnormalized log posterior, counts and plan position.
#[derive(Debug, Clone)]
pub(crate) struct PathState<'p> {
    pub t: f64,
    pub lw: Weights,
    pub n_a: usize,
    pub n_l: usize,
    pub cursor: PlanCursor<'p>,
}

impl<'p> PathState<'p> {
    pub fn start(model: &ScenarioModel, plan: &'p Plan) -> Self {
        Self {
            t: 0.0,
            lw: model.prior().iter().map(|p| p.ln()).collect(),
            n_a: 0,
            n_l: 0,
            cursor: plan.cursor(),
        }
    }

    pub fn events(&self) -> usize {
        self.n_a + self.n_l
    }

    /// Survival tilt to `to` without computing the hazard.
    pub fn tilt_to(&mut self, model: &ScenarioModel, to: f64) {
        let dt = to - self.t;
        if dt > 0.0 {
            for (l, r) in self.lw.iter_mut().zip(model.total_rates(self.n_a, self.n_l)) {
                *l -= r * dt;
            }
            self.t = to;
        }
    }

    /// Tilts to `to` and returns the integrated marginal longitudinal
    /// intensity over the segment. No planned actions may lie inside.
    fn segment(&mut self, model: &ScenarioModel, to: f64) -> Result<f64> {
        let dt = to - self.t;
        if dt <= 0.0 {
            return Ok(0.0);
        }
        let rl = model.rates(Mark::Longitudinal, self.n_a, self.n_l);
        let rtot = model.total_rates(self.n_a, self.n_l);
        let h = segment_l_hazard(&self.lw, rl, rtot, dt)?;
        for (l, r) in self.lw.iter_mut().zip(rtot) {
            *l -= r * dt;
        }
        self.t = to;
        Ok(h)
    }

    fn reweight(&mut self, log_rates: &[f64]) -> Result<()> {
        let mut m = f64::NEG_INFINITY;
        for (l, lr) in self.lw.iter_mut().zip(log_rates) {
            *l += lr;
            m = m.max(*l);
        }
        if m == f64::NEG_INFINITY || m.is_nan() {
            return Err(GctError::Support { time: self.t });
        }
        for l in self.lw.iter_mut() {
            *l -= m;
        }
        Ok(())
    }

    /// Takes the planned action at the current time.
    pub fn apply_action(&mut self, model: &ScenarioModel) -> Result<()> {
        self.reweight(model.log_rates(Mark::Action, self.n_a, self.n_l))?;
        self.n_a += 1;
        self.cursor.advance();
        Ok(())
    }

    /// Records a longitudinal event at the current time.
    pub fn observe_l(&mut self, model: &ScenarioModel) -> Result<()> {
        self.reweight(model.log_rates(Mark::Longitudinal, self.n_a, self.n_l))?;
        self.n_l += 1;
        self.cursor.on_longitudinal(self.t);
        Ok(())
    }

    /// Moves to `to` through every planned action before it (and at it, when
    /// `include_end`), returning the marginal longitudinal hazard.
    pub fn advance(&mut self, model: &ScenarioModel, to: f64, include_end: bool) -> Result<f64> {
        self.move_to(model, to, include_end, true)
    }

    /// Like [`advance`](Self::advance) but only tilts the posterior.
    pub fn walk(&mut self, model: &ScenarioModel, to: f64, include_end: bool) -> Result<()> {
        self.move_to(model, to, include_end, false).map(|_| ())
    }

    fn move_to(&mut self, model: &ScenarioModel, to: f64, include_end: bool, hazard: bool) -> Result<f64> {
        let mut h = 0.0;
        loop {
            let stop = match self.cursor.next() {
                Some(a) if a < to || (include_end && a == to) => a,
                _ => to,
            };
            if hazard {
                h += self.segment(model, stop)?;
            } else {
                self.tilt_to(model, stop);
            }
            if stop == to && !(include_end && self.cursor.next() == Some(to)) {
                return Ok(h);
            }
            self.apply_action(model)?;
            if stop == to {
                return Ok(h);
            }
        }
    }

    /// Moves to a longitudinal event time; a planned action exactly there
    /// is a tie.
    pub fn advance_to_event(&mut self, model: &ScenarioModel, at: f64) -> Result<f64> {
        let h = self.advance(model, at, false)?;
        if self.cursor.next() == Some(at) {
            return Err(GctError::Tie { time: at });
        }
        Ok(h)
    }

    pub fn posterior(&self) -> Weights {
        let m = self.lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Weights = self.lw.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = w.iter().sum();
        for x in w.iter_mut() {
            *x /= s;
        }
        w
    }

    /// Observational intensity of `mark` at the current time (left limit).
    pub fn marginal_rate(&self, model: &ScenarioModel, mark: Mark) -> f64 {
        let rates = model.rates(mark, self.n_a, self.n_l);
        self.posterior().iter().zip(rates).map(|(w, r)| w * r).sum()
    }

    pub fn add_law_y(&self, model: &ScenarioModel, scale: f64, out: &mut [f64]) {
        mix_outcome_rows(model, &self.posterior(), self.n_a, self.n_l, scale, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Caps;
    use crate::trajectory::Event;

    fn post(w: &[f64]) -> PosteriorState {
        PosteriorState::from_weights(w, 0.0).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn interval_examples() {
        let out = filter_interval(&post(&[0.5, 0.5]), &[1.0, 2.0], 2f64.ln()).unwrap();
        assert!(close(&out.weights(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        assert!(out.is_pending());
        let p = post(&[0.3, 0.7]);
        assert_eq!(filter_interval(&p, &[1.0, 2.0], 0.0).unwrap().log_weights(), p.log_weights());
        assert_eq!(filter_interval(&p, &[1.5, 1.5], 3.0).unwrap().log_weights(), p.log_weights());
        assert!(matches!(filter_interval(&p, &[1.0, 2.0], -1.0), Err(GctError::Domain(_))));
    }

    #[test]
    fn event_examples() {
        let out = filter_event(&post(&[0.5, 0.5]), &[1.0, 3.0]).unwrap();
        assert!(close(&out.weights(), &[0.25, 0.75], 1e-15));
        let p = post(&[0.3, 0.7]);
        assert_eq!(filter_event(&p, &[2.0, 2.0]).unwrap().log_weights(), p.log_weights());
        assert_eq!(
            filter_event(&post(&[1.0, 0.0]), &[0.0, 5.0]),
            Err(GctError::Support { time: 0.0 })
        );
    }

    #[test]
    fn long_trajectories_stay_normalized() {
        // a linear-space implementation would underflow here
        let mut p = post(&[0.5, 0.5]);
        for _ in 0..1000 {
            p = filter_interval(&p, &[0.0, 50.0], 1.0).unwrap();
            p = filter_event(&p, &[1e-3, 40.0]).unwrap();
        }
        let w = p.weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|x| x.is_finite()));
    }

    fn two_u_model() -> ScenarioModel {
        ScenarioModel::from_fn(
            1.0,
            &[0.5, 0.5],
            Caps { a: 1, l: 1 },
            &[0.0, 1.0],
            50,
            |_, _, _| 1.0,
            |u, a, _| if u == 0 { 1.0 - 0.5 * a as f64 } else { 3.0 },
            |u, _, l| if u == 0 { vec![0.9, 0.1] } else { vec![0.2 + 0.3 * l as f64, 0.8 - 0.3 * l as f64] },
        )
        .unwrap()
    }

    #[test]
    fn marginal_intensity_examples() {
        let m = two_u_model();
        let cp = run_filter_checkpoint(&m, &Trajectory::empty(1.0).unwrap(), 0.0, false).unwrap();
        let lam = marginal_intensity(&m, &cp, 0.0, Mark::Longitudinal).unwrap();
        assert!((lam - 2.0).abs() < 1e-15);
        assert_eq!(marginal_intensity(&m, &cp, 0.3, Mark::Action).unwrap(), 1.0);
    }

    #[test]
    fn conditional_law_single_state() {
        let m = ScenarioModel::from_fn(
            1.0,
            &[1.0],
            Caps { a: 1, l: 1 },
            &[0.0, 1.0],
            50,
            |_, _, _| 1.0,
            |_, _, _| 2.0,
            |_, a, l| vec![0.1 + 0.2 * a as f64 + 0.1 * l as f64, 0.9 - 0.2 * a as f64 - 0.1 * l as f64],
        )
        .unwrap();
        let tr = Trajectory::new(vec![Event::new(0.2, Mark::Longitudinal), Event::new(0.6, Mark::Action)], 1.0)
            .unwrap();
        let law = conditional_law_y(&m, &tr).unwrap();
        assert_eq!(law.probs, m.y_row(0, 1, 1).to_vec());
        assert_eq!(run_filter(&m, &tr, 1.0, true).unwrap().weights(), vec![1.0]);
    }

    #[test]
    fn two_state_closed_form_matches_simpson() {
        let cases = [
            ([0.3f64.ln(), 0.7f64.ln()], [1.0, 3.0], [2.0, 3.5], 0.4),
            ([0.0, -2.0], [0.2, 1.9], [5.0, 2.0], 1.0),
            ([-1.0, 0.0], [2.0, 0.5], [2.1, 2.0], 0.3),
            ([-30.0, 0.0], [2.0, 0.5], [0.1, 9.0], 2.0),
            ([0.0, 0.0], [1.0, 3.0], [4.0, 4.0 + 1e-9], 0.7),
        ];
        for (lw, rl, rtot, dt) in cases {
            let closed = two_state_l_hazard(lw[0] - lw[1], &rl, &rtot, dt);
            let simpson = segment_l_hazard_simpson(&lw, &rl, &rtot, dt).unwrap();
            assert!((closed - simpson).abs() < 1e-9, "{closed} vs {simpson}");
        }
        // degenerate posteriors
        assert_eq!(two_state_l_hazard(f64::INFINITY, &[2.0, 5.0], &[1.0, 9.0], 0.5), 1.0);
        assert_eq!(two_state_l_hazard(f64::NEG_INFINITY, &[2.0, 5.0], &[1.0, 9.0], 0.5), 2.5);
    }

    #[test]
    fn simpson_integrates_known_functions() {
        let v = adaptive_simpson(|x| x.exp(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
        let v = adaptive_simpson(|x| 1.0 / (1.0 + x * x), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_4).abs() < 1e-11);
        assert!(adaptive_simpson(|x| 1.0 / x, 0.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn three_state_segment_uses_simpson_consistently() {
        let lw = [0.2f64.ln(), 0.5f64.ln(), 0.3f64.ln()];
        let rl = [0.5, 1.0, 2.0];
        let rtot = [1.0, 2.5, 2.0];
        let h = segment_l_hazard(&lw, &rl, &rtot, 0.8).unwrap();
        // midpoint-rule reference on a fine grid
        let n = 200_000;
        let dx = 0.8 / n as f64;
        let reference: f64 = (0..n)
            .map(|i| posterior_mean_rate(&lw, &rtot, &rl, (i as f64 + 0.5) * dx) * dx)
            .sum();
        assert!((h - reference).abs() < 1e-9);
    }

    #[test]
    fn survival_window_checks() {
        let m = two_u_model();
        let plan = Plan::Never;
        assert!(marginal_l_survival(&m, &plan, &[], 0.5, 0.5).is_err());
        assert!(marginal_l_survival(&m, &plan, &[0.6], 0.5, 0.7).is_err());
        let s = marginal_l_survival(&m, &plan, &[0.2], 0.2, 0.7).unwrap();
        assert!(s > 0.0 && s < 1.0);
    }
}
