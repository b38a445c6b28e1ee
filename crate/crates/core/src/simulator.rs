//! Forward simulation of factual and counterfactual worlds.
//!
//! Every sample draws its own latent state, event stream and outcome from an
//! independent ChaCha stream (`seed`, stream = sample index), so batches are
//! reproducible regardless of thread count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GctError, Result};
use crate::hazards::sample_next_event;
use crate::outcome::OutcomeDist;
use crate::plans::Plan;
use crate::scenario::ScenarioModel;
use crate::trajectory::{Event, Mark, Trajectory};

/// One simulated world: latent state index, event stream and outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldSample {
    pub u: usize,
    pub traj: Trajectory,
    pub y: f64,
}

impl WorldSample {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("samples serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Factual,
    Counterfactual,
}

/// RNG for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Categorical draw by inversion of the cumulative sums.
pub(crate) fn draw_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let v: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if v < acc {
            return i;
        }
    }
    // rounding left v above the total: the last state with positive mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

fn finish<R: Rng + ?Sized>(model: &ScenarioModel, u: usize, events: Vec<Event>, rng: &mut R) -> Result<WorldSample> {
    let traj = Trajectory::new(events, model.tau())?;
    let (n_a, n_l) = traj.counts();
    let y = model.y_support()[draw_categorical(rng, model.y_row(u, n_a, n_l))];
    Ok(WorldSample { u, traj, y })
}

/// The observational world: both marks compete at their per-state rates.
pub fn simulate_factual<R: Rng + ?Sized>(model: &ScenarioModel, rng: &mut R) -> Result<WorldSample> {
    let u = draw_categorical(rng, model.prior());
    let tau = model.tau();
    let (mut n_a, mut n_l) = (0, 0);
    let mut t = 0.0;
    let mut events = Vec::new();
    while t < tau {
        let ra = model.rate(Mark::Action, u, n_a, n_l);
        let rl = model.rate(Mark::Longitudinal, u, n_a, n_l);
        let Some((s, mark)) = sample_next_event(ra, rl, t, tau, rng)? else {
            break;
        };
        if n_a + n_l >= model.n_max() {
            return Err(GctError::Explosion { n_max: model.n_max() });
        }
        events.push(Event::new(s, mark));
        match mark {
            Mark::Action => n_a += 1,
            Mark::Longitudinal => n_l += 1,
        }
        t = s;
    }
    finish(model, u, events, rng)
}

/// The world under plan `g`: actions happen exactly when the plan says,
/// longitudinal events follow their per-state rate.
pub fn simulate_counterfactual<R: Rng + ?Sized>(model: &ScenarioModel, plan: &Plan, rng: &mut R) -> Result<WorldSample> {
    let u = draw_categorical(rng, model.prior());
    let tau = model.tau();
    let (mut n_a, mut n_l) = (0, 0);
    let mut t = 0.0;
    let mut cursor = plan.cursor();
    let mut events = Vec::new();
    while t < tau {
        let next_action = cursor.next().filter(|a| *a <= tau);
        let deadline = next_action.unwrap_or(tau);
        let rl = model.rate(Mark::Longitudinal, u, n_a, n_l);
        let sampled = if t < deadline {
            sample_next_event(0.0, rl, t, deadline, rng)?
        } else {
            None
        };
        let (s, mark) = match (sampled, next_action) {
            (Some((s, _)), Some(a)) if s == a => return Err(GctError::Tie { time: s }),
            (Some((s, _)), _) => (s, Mark::Longitudinal),
            (None, Some(a)) => (a, Mark::Action),
            (None, None) => break,
        };
        if n_a + n_l >= model.n_max() {
            return Err(GctError::Explosion { n_max: model.n_max() });
        }
        events.push(Event::new(s, mark));
        match mark {
            Mark::Action => {
                n_a += 1;
                cursor.advance();
            }
            Mark::Longitudinal => {
                n_l += 1;
                cursor.on_longitudinal(s);
            }
        }
        t = s;
    }
    finish(model, u, events, rng)
}

/// `n` independent samples; sample `i` uses stream `i` of `seed`.
pub fn simulate_batch(model: &ScenarioModel, mode: SimMode, plan: &Plan, n: usize, seed: u64) -> Result<Vec<WorldSample>> {
    if mode == SimMode::Counterfactual {
        plan.validate()?;
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            match mode {
                SimMode::Factual => simulate_factual(model, &mut rng),
                SimMode::Counterfactual => simulate_counterfactual(model, plan, &mut rng),
            }
        })
        .collect()
}

/// Empirical outcome distribution of a batch.
pub fn empirical_outcome_dist(samples: &[WorldSample], support: &[f64]) -> Result<OutcomeDist> {
    if samples.is_empty() {
        return Err(GctError::domain("no samples"));
    }
    let mut counts = vec![0u64; support.len()];
    for s in samples {
        let i = support
            .iter()
            .position(|y| *y == s.y)
            .ok_or_else(|| GctError::domain(format!("outcome {} outside the support", s.y)))?;
        counts[i] += 1;
    }
    let n = samples.len() as f64;
    OutcomeDist::new(support.to_vec(), counts.iter().map(|c| *c as f64 / n).collect())
}

/// The counterfactual oracle: empirical `Law(Y^g)` from `n` simulated worlds.
pub fn counterfactual_oracle(model: &ScenarioModel, plan: &Plan, n: usize, seed: u64) -> Result<OutcomeDist> {
    let samples = simulate_batch(model, SimMode::Counterfactual, plan, n, seed)?;
    empirical_outcome_dist(&samples, model.y_support())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plans::is_consistent;
    use crate::scenario::Caps;

    fn model(rate_l: f64, n_max: usize) -> ScenarioModel {
        ScenarioModel::from_fn(
            1.0,
            &[0.4, 0.6],
            Caps { a: 2, l: 2 },
            &[0.0, 1.0],
            n_max,
            |_, _, _| 1.0,
            move |u, _, _| rate_l * (1.0 + u as f64),
            |u, _, _| vec![0.3 + 0.4 * u as f64, 0.7 - 0.4 * u as f64],
        )
        .unwrap()
    }

    #[test]
    fn counterfactual_worlds_follow_the_plan() {
        let m = model(1.5, 64);
        let plan = Plan::PeriodicAfterL { delay: 0.1, period: 0.3 };
        for s in simulate_batch(&m, SimMode::Counterfactual, &plan, 500, 7).unwrap() {
            assert!(is_consistent(&s.traj, &plan));
        }
    }

    #[test]
    fn batches_are_reproducible() {
        let m = model(1.5, 64);
        let a = simulate_batch(&m, SimMode::Factual, &Plan::Never, 200, 3).unwrap();
        let b = simulate_batch(&m, SimMode::Factual, &Plan::Never, 200, 3).unwrap();
        assert_eq!(a, b);
        let c = simulate_batch(&m, SimMode::Factual, &Plan::Never, 200, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn explosion_guard_is_an_error() {
        let m = model(50.0, 3);
        let r = simulate_batch(&m, SimMode::Factual, &Plan::Never, 50, 1);
        assert_eq!(r, Err(GctError::Explosion { n_max: 3 }));
    }

    #[test]
    fn no_longitudinal_rate_gives_plan_only() {
        let m = model(0.0, 64);
        let plan = Plan::Fixed { times: vec![0.25, 0.5] };
        let s = simulate_counterfactual(&m, &plan, &mut sample_rng(1, 0)).unwrap();
        assert_eq!(s.traj.times_of(Mark::Action), vec![0.25, 0.5]);
        assert!(s.traj.times_of(Mark::Longitudinal).is_empty());
    }

    #[test]
    fn categorical_draw_respects_zero_mass() {
        let mut rng = sample_rng(5, 0);
        for _ in 0..1000 {
            assert_ne!(draw_categorical(&mut rng, &[0.5, 0.0, 0.5]), 1);
        }
    }

    #[test]
    fn json_line_shape() {
        let s = WorldSample {
            u: 1,
            traj: Trajectory::new(vec![Event::new(0.5, Mark::Action)], 1.0).unwrap(),
            y: 1.0,
        };
        assert_eq!(s.to_json_line(), r#"{"u":1,"traj":[{"t":0.5,"mark":"a"}],"y":1.0}"#);
    }
}
