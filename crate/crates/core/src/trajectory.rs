//! Marked point process realizations on a bounded horizon.
//!
//! A [`Trajectory`] is a finite, strictly time-ordered list of events on
//! `(0, tau]`, each carrying one of two marks. A [`History`] is a borrowed
//! prefix of a trajectory together with its cut time.

use serde::{Deserialize, Serialize};

use crate::error::{GctError, Result};

/// The two event types. `Action < Longitudinal` is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mark {
    #[serde(rename = "a")]
    Action,
    #[serde(rename = "l")]
    Longitudinal,
}

impl Mark {
    pub fn as_str(self) -> &'static str {
        match self {
            Mark::Action => "a",
            Mark::Longitudinal => "l",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "t")]
    pub time: f64,
    pub mark: Mark,
}

impl Event {
    pub fn new(time: f64, mark: Mark) -> Self {
        Self { time, mark }
    }
}

/// A realization of the bivariate counting process on `(0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    events: Vec<Event>,
    horizon: f64,
}

impl Trajectory {
    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    /// Validates ordering and range before wrapping the events.
    pub fn new(events: Vec<Event>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(GctError::domain(format!("horizon must be finite and positive, got {horizon}")));
        }
        let mut prev = 0.0;
        for ev in &events {
            if !(ev.time > 0.0 && ev.time <= horizon) {
                return Err(GctError::domain(format!(
                    "event time {} outside (0, {horizon}]",
                    ev.time
                )));
            }
            if ev.time == prev && prev > 0.0 {
                return Err(GctError::Tie { time: ev.time });
            }
            if ev.time < prev {
                return Err(GctError::domain(format!(
                    "event times not increasing: {} after {prev}",
                    ev.time
                )));
            }
            prev = ev.time;
        }
        Ok(Self { events, horizon })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn times_of(&self, mark: Mark) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.mark == mark)
            .map(|e| e.time)
            .collect()
    }

    /// Number of events of each mark, as `(n_a, n_l)`.
    pub fn counts(&self) -> (usize, usize) {
        count_marks(&self.events)
    }

    pub fn as_history(&self) -> History<'_> {
        History {
            events: &self.events,
            cut: self.horizon,
            horizon: self.horizon,
        }
    }

    /// Events with time `<= t`, as a borrowed view.
    pub fn restrict(&self, t: f64) -> Result<History<'_>> {
        self.as_history().restrict(t)
    }

    /// Counts of each mark strictly before `s` (the left limit `N(s-)`).
    pub fn counts_before(&self, s: f64) -> Result<(usize, usize)> {
        if !(0.0..=self.horizon).contains(&s) {
            return Err(GctError::domain(format!("time {s} outside [0, {}]", self.horizon)));
        }
        let k = self.events.partition_point(|e| e.time < s);
        Ok(count_marks(&self.events[..k]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.events).expect("events serialize")
    }

    pub fn from_json(s: &str, horizon: f64) -> Result<Self> {
        let events: Vec<Event> =
            serde_json::from_str(s).map_err(|e| GctError::validation(format!("trajectory json: {e}")))?;
        Self::new(events, horizon)
    }
}

impl Serialize for Trajectory {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.events.serialize(serializer)
    }
}

/// The realization `mu_t`: every event up to and including the cut time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct History<'a> {
    events: &'a [Event],
    cut: f64,
    horizon: f64,
}

impl<'a> History<'a> {
    pub fn events(&self) -> &'a [Event] {
        self.events
    }

    pub fn cut(&self) -> f64 {
        self.cut
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn restrict(&self, t: f64) -> Result<History<'a>> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(GctError::domain(format!("cut time {t} outside [0, {}]", self.horizon)));
        }
        let cut = t.min(self.cut);
        let k = self.events.partition_point(|e| e.time <= cut);
        Ok(History {
            events: &self.events[..k],
            cut,
            horizon: self.horizon,
        })
    }

    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            events: self.events.to_vec(),
            horizon: self.horizon,
        }
    }
}

fn count_marks(events: &[Event]) -> (usize, usize) {
    let n_a = events.iter().filter(|e| e.mark == Mark::Action).count();
    (n_a, events.len() - n_a)
}

fn check_increasing(times: &[f64], horizon: f64, what: &str) -> Result<()> {
    let mut prev = 0.0;
    for &t in times {
        if !(t > prev && t <= horizon) {
            return Err(GctError::domain(format!(
                "{what} times must be strictly increasing in (0, {horizon}], got {t} after {prev}"
            )));
        }
        prev = t;
    }
    Ok(())
}

/// Interleaves longitudinal and action times into one trajectory.
///
/// Any exactly shared time is a [`GctError::Tie`].
pub fn merge(l_times: &[f64], a_times: &[f64], horizon: f64) -> Result<Trajectory> {
    check_increasing(l_times, horizon, "longitudinal")?;
    check_increasing(a_times, horizon, "action")?;
    let mut events = Vec::with_capacity(l_times.len() + a_times.len());
    let (mut i, mut j) = (0, 0);
    while i < l_times.len() || j < a_times.len() {
        match (l_times.get(i), a_times.get(j)) {
            (Some(&l), Some(&a)) if l == a => return Err(GctError::Tie { time: l }),
            (Some(&l), Some(&a)) if l < a => {
                events.push(Event::new(l, Mark::Longitudinal));
                i += 1;
            }
            (_, Some(&a)) => {
                events.push(Event::new(a, Mark::Action));
                j += 1;
            }
            (Some(&l), None) => {
                events.push(Event::new(l, Mark::Longitudinal));
                i += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    Ok(Trajectory { events, horizon })
}
