use serde::{Deserialize, Serialize};

/// Lower bound for the running maximum before any similar patch is seen.
pub const RUNNING_MAX_FLOOR: f64 = 0.1;

/// Mission-wide maximum of patch-query cosine similarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningMax {
    value: f64,
    floor: f64,
}

impl Default for RunningMax {
    fn default() -> Self {
        Self::new(RUNNING_MAX_FLOOR)
    }
}

impl RunningMax {
    pub fn new(floor: f64) -> Self {
        assert!(floor > 0.0, "running-max floor must be positive");
        Self {
            value: floor,
            floor,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// `value = max(value, max(sims))`; empty input and NaNs are ignored.
    pub fn update<I: IntoIterator<Item = f64>>(&mut self, sims: I) {
        for s in sims {
            if s > self.value {
                self.value = s;
            }
        }
    }

    pub fn updated<I: IntoIterator<Item = f64>>(mut self, sims: I) -> Self {
        self.update(sims);
        self
    }

    pub fn reset(&mut self) {
        self.value = self.floor;
    }
}

/// `clamp(s / running_max, -1, 1)`.
pub fn normalize_similarity(s: f64, rm: &RunningMax) -> f64 {
    (s / rm.value()).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rm_at(v: f64) -> RunningMax {
        RunningMax::default().updated([v])
    }

    #[test]
    fn update_cases() {
        assert_eq!(rm_at(0.4).updated([0.3, 0.7]).value(), 0.7);
        assert_eq!(rm_at(0.4).updated([]).value(), 0.4);
        assert_eq!(RunningMax::default().value(), 0.1);
    }

    #[test]
    fn normalize_cases() {
        assert!((normalize_similarity(0.3, &rm_at(0.6)) - 0.5).abs() < 1e-12);
        assert_eq!(normalize_similarity(0.9, &rm_at(0.6)), 1.0);
        assert!((normalize_similarity(-0.2, &rm_at(0.5)) + 0.4).abs() < 1e-12);
    }

    #[test]
    fn reset_returns_to_floor() {
        let mut rm = rm_at(0.9);
        rm.reset();
        assert_eq!(rm.value(), rm.floor());
    }

    proptest! {
        #[test]
        fn monotone_and_floored(sims in proptest::collection::vec(-1.0f64..1.0, 0..50)) {
            let mut rm = RunningMax::default();
            let mut prev = rm.value();
            for s in sims {
                rm.update([s]);
                prop_assert!(rm.value() >= prev);
                prop_assert!(rm.value() >= rm.floor());
                prev = rm.value();
            }
        }

        #[test]
        fn normalized_in_unit_interval(s in -1.0f64..1.0, m in 0.0f64..1.0) {
            let rm = RunningMax::default().updated([m]);
            let n = normalize_similarity(s, &rm);
            prop_assert!((-1.0..=1.0).contains(&n));
        }
    }
}
