use crate::{Error, Result};

/// Cosine-annealed prune fraction:
/// `α_t = ½ · α₀ · (1 + cos(π · t / (T − 1)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneSchedule {
    alpha0: f64,
    total_rounds: usize,
}

impl PruneSchedule {
    pub fn new(alpha0: f64, total_rounds: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha0) {
            return Err(Error::config(
                "alpha0",
                format!("must lie in [0, 1), got {alpha0}"),
            ));
        }
        Ok(Self {
            alpha0,
            total_rounds,
        })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn total_rounds(&self) -> usize {
        self.total_rounds
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        let total = self.total_rounds;
        if total < 2 {
            return Err(Error::Argument(format!(
                "cosine schedule needs at least 2 rounds, got {total}"
            )));
        }
        if t >= total {
            return Err(Error::Argument(format!("round {t} outside [0, {})", total)));
        }
        let phase = t as f64 * std::f64::consts::PI / (total - 1) as f64;
        Ok((0.5 * self.alpha0 * (1.0 + phase.cos())).clamp(0.0, self.alpha0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let s = PruneSchedule::new(0.5, 100).unwrap();
        assert_eq!(s.alpha(0).unwrap(), 0.5);
        assert_eq!(s.alpha(99).unwrap(), 0.0);
        let s = PruneSchedule::new(0.5, 101).unwrap();
        assert_eq!(s.alpha(50).unwrap(), 0.25);
    }

    #[test]
    fn out_of_range() {
        let s = PruneSchedule::new(0.5, 10).unwrap();
        assert!(s.alpha(10).is_err());
        assert!(PruneSchedule::new(0.5, 1).unwrap().alpha(0).is_err());
        assert!(PruneSchedule::new(1.0, 10).is_err());
        assert!(PruneSchedule::new(-0.1, 10).is_err());
    }

    #[test]
    fn monotone_non_increasing() {
        for total in [2usize, 3, 17, 1000] {
            let s = PruneSchedule::new(0.7, total).unwrap();
            let values: Vec<f64> = (0..total).map(|t| s.alpha(t).unwrap()).collect();
            assert!(values.windows(2).all(|w| w[1] <= w[0]));
            assert!(values.iter().all(|&a| (0.0..=0.7).contains(&a)));
        }
    }
}
