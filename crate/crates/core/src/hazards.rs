//! Hazard measures with piecewise-constant rates plus atoms, their
//! cumulative hazards and product integrals, and exact next-event sampling
//! for two competing constant rates.

use rand::Rng;

use crate::error::{GctError, Result};
use crate::trajectory::Mark;

/// Constant rate on the half-open window `(t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardSegment {
    pub t0: f64,
    pub t1: f64,
    pub rate: f64,
}

/// Discrete hazard mass at a single time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardAtom {
    pub time: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardMeasure {
    segments: Vec<HazardSegment>,
    atoms: Vec<HazardAtom>,
}

impl HazardMeasure {
    /// Segments must be contiguous and ordered; atoms must have distinct
    /// times inside the closure of the segments' union.
    pub fn new(segments: Vec<HazardSegment>, mut atoms: Vec<HazardAtom>) -> Result<Self> {
        if segments.is_empty() {
            return Err(GctError::domain("hazard measure needs at least one segment"));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.t0 < s.t1) || !s.t0.is_finite() || !s.t1.is_finite() {
                return Err(GctError::domain(format!("segment {i} has empty or infinite window")));
            }
            if !(s.rate >= 0.0 && s.rate.is_finite()) {
                return Err(GctError::domain(format!("segment {i} has invalid rate {}", s.rate)));
            }
            if i > 0 && segments[i - 1].t1 != s.t0 {
                return Err(GctError::domain(format!("segment {i} is not contiguous with its predecessor")));
            }
        }
        let lo = segments[0].t0;
        let hi = segments[segments.len() - 1].t1;
        atoms.sort_by(|a, b| a.time.total_cmp(&b.time));
        for (i, a) in atoms.iter().enumerate() {
            if !(0.0..=1.0).contains(&a.mass) {
                return Err(GctError::domain(format!("atom mass {} outside [0, 1]", a.mass)));
            }
            if !(lo..=hi).contains(&a.time) {
                return Err(GctError::domain(format!("atom at {} outside [{lo}, {hi}]", a.time)));
            }
            if i > 0 && atoms[i - 1].time == a.time {
                return Err(GctError::domain(format!("duplicate atom time {}", a.time)));
            }
        }
        Ok(Self { segments, atoms })
    }

    /// Single constant rate on `(t0, t1]`.
    pub fn constant(t0: f64, t1: f64, rate: f64) -> Result<Self> {
        Self::new(vec![HazardSegment { t0, t1, rate }], Vec::new())
    }

    pub fn segments(&self) -> &[HazardSegment] {
        &self.segments
    }

    pub fn atoms(&self) -> &[HazardAtom] {
        &self.atoms
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.segments[0].t0, self.segments[self.segments.len() - 1].t1)
    }

    fn check_window(&self, u: f64, v: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if !(u < v) || u < lo || v > hi {
            return Err(GctError::domain(format!("window ({u}, {v}] outside domain ({lo}, {hi}]")));
        }
        Ok(())
    }

    fn continuous_part(&self, u: f64, v: f64) -> f64 {
        self.segments
            .iter()
            .map(|s| {
                let overlap = s.t1.min(v) - s.t0.max(u);
                if overlap > 0.0 {
                    s.rate * overlap
                } else {
                    0.0
                }
            })
            .sum()
    }

    fn atoms_in(&self, u: f64, v: f64) -> impl Iterator<Item = &HazardAtom> {
        self.atoms.iter().filter(move |a| a.time > u && a.time <= v)
    }
}

/// Total hazard over `(u, v]`: rate times overlap, plus atom masses.
pub fn cumulative_hazard(h: &HazardMeasure, u: f64, v: f64) -> Result<f64> {
    h.check_window(u, v)?;
    Ok(h.continuous_part(u, v) + h.atoms_in(u, v).map(|a| a.mass).sum::<f64>())
}

/// Product integral of `(1 - dH)` over `(u, v]`.
pub fn product_integral(h: &HazardMeasure, u: f64, v: f64) -> Result<f64> {
    h.check_window(u, v)?;
    let discrete: f64 = h.atoms_in(u, v).map(|a| 1.0 - a.mass).product();
    Ok((-h.continuous_part(u, v)).exp() * discrete)
}

/// Exponential variate by inversion of one uniform draw.
pub fn exp_by_inversion<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

/// Draws the next event of two competing constant-rate processes on
/// `(t, deadline]`. `None` means no event before the deadline.
pub fn sample_next_event<R: Rng + ?Sized>(
    rate_a: f64,
    rate_l: f64,
    t: f64,
    deadline: f64,
    rng: &mut R,
) -> Result<Option<(f64, Mark)>> {
    if !(rate_a >= 0.0 && rate_l >= 0.0) || !rate_a.is_finite() || !rate_l.is_finite() {
        return Err(GctError::domain(format!("rates must be finite and nonnegative, got ({rate_a}, {rate_l})")));
    }
    if !(t < deadline) {
        return Err(GctError::domain(format!("start {t} not before deadline {deadline}")));
    }
    let total = rate_a + rate_l;
    if total == 0.0 {
        return Ok(None);
    }
    let s = t + exp_by_inversion(rng, total);
    if s > deadline {
        return Ok(None);
    }
    let pick: f64 = rng.gen();
    let mark = if pick < rate_a / total {
        Mark::Action
    } else {
        Mark::Longitudinal
    };
    Ok(Some((s, mark)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_step() -> HazardMeasure {
        HazardMeasure::new(
            vec![
                HazardSegment { t0: 0.0, t1: 1.0, rate: 1.0 },
                HazardSegment { t0: 1.0, t1: 2.0, rate: 2.0 },
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn cumulative_examples() {
        let h = HazardMeasure::constant(0.0, 2.0, 1.0).unwrap();
        assert_eq!(cumulative_hazard(&h, 0.0, 2.0).unwrap(), 2.0);
        assert_eq!(cumulative_hazard(&two_step(), 0.0, 2.0).unwrap(), 3.0);
        let atom = HazardMeasure::new(
            vec![HazardSegment { t0: 0.0, t1: 2.0, rate: 0.0 }],
            vec![HazardAtom { time: 1.0, mass: 0.5 }],
        )
        .unwrap();
        assert_eq!(cumulative_hazard(&atom, 0.0, 2.0).unwrap(), 0.5);
        assert_eq!(product_integral(&atom, 0.0, 2.0).unwrap(), 0.5);
        // right-closed windows: an atom at the left end is excluded
        assert_eq!(product_integral(&atom, 1.0, 2.0).unwrap(), 1.0);
        assert_eq!(product_integral(&atom, 0.5, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn product_integral_examples() {
        let h = HazardMeasure::constant(0.0, 2.0, 1.0).unwrap();
        let p = product_integral(&h, 0.0, 2.0).unwrap();
        assert!((p - 0.1353352832366127).abs() < 1e-15);
        let p = product_integral(&two_step(), 0.0, 2.0).unwrap();
        assert!((p - (-3.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn window_checks() {
        let h = two_step();
        assert!(matches!(cumulative_hazard(&h, 1.0, 1.0), Err(GctError::Domain(_))));
        assert!(matches!(cumulative_hazard(&h, -0.5, 1.0), Err(GctError::Domain(_))));
        assert!(matches!(product_integral(&h, 0.0, 2.5), Err(GctError::Domain(_))));
        assert!(HazardMeasure::new(
            vec![
                HazardSegment { t0: 0.0, t1: 1.0, rate: 1.0 },
                HazardSegment { t0: 1.5, t1: 2.0, rate: 1.0 },
            ],
            vec![]
        )
        .is_err());
        assert!(HazardMeasure::new(
            vec![HazardSegment { t0: 0.0, t1: 1.0, rate: 1.0 }],
            vec![HazardAtom { time: 0.5, mass: 1.5 }]
        )
        .is_err());
    }

    #[test]
    fn sampler_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_next_event(0.0, 0.0, 0.0, 1.0, &mut rng).unwrap(), None);
        for _ in 0..1000 {
            if let Some((s, m)) = sample_next_event(1.0, 0.0, 0.2, 1.0, &mut rng).unwrap() {
                assert_eq!(m, Mark::Action);
                assert!(s > 0.2 && s <= 1.0);
            }
        }
        assert!(matches!(sample_next_event(-1.0, 0.0, 0.0, 1.0, &mut rng), Err(GctError::Domain(_))));
    }

    #[test]
    fn sampler_is_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_next_event(0.7, 1.3, 0.0, 2.0, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn sampler_mean_of_competing_exponentials() {
        let mut rng = ChaCha8Rng::seed_from_u64(20011101);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let (s, _) = sample_next_event(1.0, 1.0, 0.0, f64::INFINITY, &mut rng).unwrap().unwrap();
            sum += s;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
    }

    fn random_measure() -> impl Strategy<Value = HazardMeasure> {
        (
            prop::collection::vec((0.05f64..1.0, 0.0f64..3.0), 1..5),
            prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..3),
        )
            .prop_map(|(segs, atoms)| {
                let mut t = 0.0;
                let segments: Vec<HazardSegment> = segs
                    .into_iter()
                    .map(|(len, rate)| {
                        let s = HazardSegment { t0: t, t1: t + len, rate };
                        t += len;
                        s
                    })
                    .collect();
                let mut atoms: Vec<HazardAtom> = atoms
                    .into_iter()
                    .map(|(frac, mass)| HazardAtom { time: frac * t, mass })
                    .collect();
                atoms.sort_by(|a, b| a.time.total_cmp(&b.time));
                atoms.dedup_by(|a, b| a.time == b.time);
                HazardMeasure::new(segments, atoms).unwrap()
            })
    }

    proptest! {
        #[test]
        fn multiplicative_over_adjacent_windows(h in random_measure(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = h.domain();
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            let v = lo + (hi - lo) * a.max(1e-6);
            let w = lo + (hi - lo) * b.max(a + 1e-6).min(1.0);
            prop_assume!(lo < v && v < w && w <= hi);
            let whole = product_integral(&h, lo, w).unwrap();
            let split = product_integral(&h, lo, v).unwrap() * product_integral(&h, v, w).unwrap();
            prop_assert!((whole - split).abs() <= 1e-12);
        }

        #[test]
        fn exp_of_cumulative_without_atoms(segs in prop::collection::vec((0.05f64..1.0, 0.0f64..3.0), 1..5)) {
            let mut t = 0.0;
            let segments: Vec<HazardSegment> = segs.into_iter().map(|(len, rate)| {
                let s = HazardSegment { t0: t, t1: t + len, rate };
                t += len;
                s
            }).collect();
            let h = HazardMeasure::new(segments, vec![]).unwrap();
            let p = product_integral(&h, 0.0, t).unwrap();
            prop_assert_eq!(p, (-cumulative_hazard(&h, 0.0, t).unwrap()).exp());
        }

        #[test]
        fn nonincreasing_as_window_grows(h in random_measure(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
            let (lo, hi) = h.domain();
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            let p1 = product_integral(&h, lo, lo + (hi - lo) * a).unwrap();
            let p2 = product_integral(&h, lo, lo + (hi - lo) * b).unwrap();
            prop_assert!(p2 <= p1);
        }
    }
}
