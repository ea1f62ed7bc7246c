//! Sample-size schedules for the outer iterations.

use serde::{Deserialize, Serialize};

/// Schedule specification as it appears in config files.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// `m + delta` scenarios per outer iteration.
    Linear { delta: usize },
    /// `ceil(c1 * m)` with fixed rate `c1 > 1`.
    Geometric { c1: f64 },
    /// Geometric with a dynamic rate `C1 in [c0, ch]`, widened after
    /// single-inner-iteration outers and shrunk after long ones.
    Dynamic { c0: f64, ch: f64, c1_init: f64 },
    /// `m_l = ceil(c0 * l^p)`; used for the rate-separation experiments.
    Polynomial { c0: f64, p: f64 },
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            ScheduleSpec::Linear { delta } => {
                if delta < 1 {
                    return Err("linear schedule needs delta >= 1".into());
                }
            }
            ScheduleSpec::Geometric { c1 } => {
                if !(c1 > 1.0) || !c1.is_finite() {
                    return Err("geometric schedule needs c1 > 1".into());
                }
            }
            ScheduleSpec::Dynamic { c0, ch, c1_init } => {
                if !(1.0 < c0 && c0 <= c1_init && c1_init <= ch) || !ch.is_finite() {
                    return Err("dynamic schedule needs 1 < c0 <= C1 <= ch < inf".into());
                }
            }
            ScheduleSpec::Polynomial { c0, p } => {
                if !(c0 > 0.0) || !(p >= 1.0) {
                    return Err("polynomial schedule needs c0 > 0 and p >= 1".into());
                }
            }
        }
        Ok(())
    }
}

/// Live schedule state.
#[derive(Clone, Debug)]
pub struct Schedule {
    spec: ScheduleSpec,
    /// Current dynamic rate (dynamic schedules only).
    c1_current: f64,
    /// Outer iterations completed (polynomial schedules key off this).
    ell: usize,
}

impl Schedule {
    pub fn new(spec: ScheduleSpec) -> Result<Self, String> {
        spec.validate()?;
        let c1_current = match spec {
            ScheduleSpec::Dynamic { c1_init, .. } => c1_init,
            _ => f64::NAN,
        };
        Ok(Schedule { spec, c1_current, ell: 1 })
    }

    pub fn spec(&self) -> ScheduleSpec {
        self.spec
    }

    /// Current dynamic rate, for reporting.
    pub fn dynamic_rate(&self) -> Option<f64> {
        matches!(self.spec, ScheduleSpec::Dynamic { .. }).then_some(self.c1_current)
    }

    /// Next sample size given the current one and the number of inner
    /// iterations the last outer solve used.
    pub fn next_sample_size(&mut self, m: usize, inner_iters_used: usize) -> usize {
        assert!(m >= 1);
        self.ell += 1;
        match self.spec {
            ScheduleSpec::Linear { delta } => m + delta,
            ScheduleSpec::Geometric { c1 } => (c1 * m as f64).ceil() as usize,
            ScheduleSpec::Dynamic { c0, ch, .. } => {
                if inner_iters_used == 1 {
                    self.c1_current = (2.0 * self.c1_current - 1.0).min(ch);
                } else if inner_iters_used > 4 {
                    self.c1_current = (0.5 * self.c1_current + 0.5).max(c0);
                }
                debug_assert!(self.c1_current >= c0 && self.c1_current <= ch);
                (self.c1_current * m as f64).ceil() as usize
            }
            ScheduleSpec::Polynomial { c0, p } => {
                let target = (c0 * (self.ell as f64).powf(p)).ceil() as usize;
                target.max(m)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_adds_delta() {
        let mut s = Schedule::new(ScheduleSpec::Linear { delta: 100 }).unwrap();
        assert_eq!(s.next_sample_size(100, 3), 200);
        assert_eq!(s.next_sample_size(200, 3), 300);
    }

    #[test]
    fn geometric_multiplies() {
        let mut s = Schedule::new(ScheduleSpec::Geometric { c1: 1.5 }).unwrap();
        assert_eq!(s.next_sample_size(100, 3), 150);
        assert_eq!(s.next_sample_size(150, 3), 225);
    }

    #[test]
    fn dynamic_widens_after_single_inner_iteration() {
        let mut s =
            Schedule::new(ScheduleSpec::Dynamic { c0: 1.05, ch: 3.0, c1_init: 1.5 }).unwrap();
        // One inner iteration: C1 <- min(2*1.5 - 1, 3) = 2.0.
        assert_eq!(s.next_sample_size(100, 1), 200);
        assert_eq!(s.dynamic_rate(), Some(2.0));
    }

    #[test]
    fn dynamic_shrinks_after_long_inner_loop() {
        let mut s =
            Schedule::new(ScheduleSpec::Dynamic { c0: 1.05, ch: 3.0, c1_init: 2.0 }).unwrap();
        // More than four inner iterations: C1 <- max(1.05, 0.5*2 + 0.5) = 1.5.
        let next = s.next_sample_size(100, 6);
        assert_eq!(s.dynamic_rate(), Some(1.5));
        assert_eq!(next, 150);
    }

    #[test]
    fn dynamic_rate_stays_in_bounds() {
        let mut s =
            Schedule::new(ScheduleSpec::Dynamic { c0: 1.05, ch: 3.0, c1_init: 1.5 }).unwrap();
        let mut m = 100;
        for i in 0..30 {
            let inner = if i % 2 == 0 { 1 } else { 9 };
            m = s.next_sample_size(m, inner);
            let c1 = s.dynamic_rate().unwrap();
            assert!((1.05..=3.0).contains(&c1), "C1 = {c1}");
        }
    }

    #[test]
    fn polynomial_follows_iteration_index() {
        let mut s = Schedule::new(ScheduleSpec::Polynomial { c0: 100.0, p: 1.0 }).unwrap();
        // ell = 2, 3, 4 ...
        assert_eq!(s.next_sample_size(100, 3), 200);
        assert_eq!(s.next_sample_size(200, 3), 300);
        let mut s2 = Schedule::new(ScheduleSpec::Polynomial { c0: 10.0, p: 2.0 }).unwrap();
        assert_eq!(s2.next_sample_size(10, 3), 40);
        assert_eq!(s2.next_sample_size(40, 3), 90);
    }

    #[test]
    fn monotone_growth() {
        for spec in [
            ScheduleSpec::Linear { delta: 10 },
            ScheduleSpec::Geometric { c1: 1.1 },
            ScheduleSpec::Dynamic { c0: 1.05, ch: 2.0, c1_init: 1.1 },
            ScheduleSpec::Polynomial { c0: 50.0, p: 1.5 },
        ] {
            let mut s = Schedule::new(spec).unwrap();
            let mut m = 50;
            let mut prev = m;
            for i in 0..20 {
                m = s.next_sample_size(m, 2 + (i % 5));
                assert!(m >= prev, "{spec:?} shrank: {prev} -> {m}");
                if !matches!(spec, ScheduleSpec::Linear { .. }) && i > 0 {
                    assert!(m > prev, "{spec:?} not strictly increasing");
                }
                prev = m;
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(Schedule::new(ScheduleSpec::Linear { delta: 0 }).is_err());
        assert!(Schedule::new(ScheduleSpec::Geometric { c1: 1.0 }).is_err());
        assert!(Schedule::new(ScheduleSpec::Dynamic { c0: 0.9, ch: 3.0, c1_init: 1.5 }).is_err());
        assert!(Schedule::new(ScheduleSpec::Polynomial { c0: 100.0, p: 0.5 }).is_err());
    }
}
