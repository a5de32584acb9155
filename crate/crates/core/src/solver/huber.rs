use crate::math;
use crate::{Error, Result};

/// Huber loss `ρ(r) = r²/2` for `|r| ≤ γ`, `γ(|r| − γ/2)` beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberLoss {
    gamma: f64,
}

impl Default for HuberLoss {
    fn default() -> Self {
        Self { gamma: 0.03 }
    }
}

impl HuberLoss {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidConfig("Huber threshold must be positive"));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn loss(&self, r: f64) -> f64 {
        let a = math::abs(r);
        if a <= self.gamma {
            0.5 * r * r
        } else {
            self.gamma * (a - 0.5 * self.gamma)
        }
    }

    #[inline]
    pub fn weight(&self, r: f64) -> f64 {
        huber_weight(r, self.gamma)
    }
}

/// IRLS weight of the Huber loss: 1 inside the threshold, `γ/|r|` outside.
#[inline]
pub fn huber_weight(r: f64, gamma: f64) -> f64 {
    let a = math::abs(r);
    if a <= gamma {
        1.0
    } else {
        gamma / a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights() {
        assert_eq!(huber_weight(0.0, 0.03), 1.0);
        assert_eq!(huber_weight(0.06, 0.03), 0.5);
        assert_eq!(huber_weight(-0.06, 0.03), 0.5);
        assert_eq!(huber_weight(0.03, 0.03), 1.0);
    }

    #[test]
    fn loss_is_continuous_and_c1_at_threshold() {
        let h = HuberLoss::new(0.05).unwrap();
        let eps = 1e-9;
        assert!((h.loss(0.05 - eps) - h.loss(0.05 + eps)).abs() < 1e-10);
        let slope = |r: f64| (h.loss(r + 1e-7) - h.loss(r - 1e-7)) / 2e-7;
        assert!((slope(0.05 - 1e-5) - slope(0.05 + 1e-5)).abs() < 1e-4);
        // ρ'(r) = w(r) r
        for r in [0.01, 0.2, -0.4] {
            assert!((slope(r) - h.weight(r) * r).abs() < 1e-7);
        }
        assert_eq!(h.loss(0.02), 0.5 * 0.02 * 0.02);
    }

    #[test]
    fn rejects_non_positive_threshold() {
        assert!(HuberLoss::new(0.0).is_err());
        assert!(HuberLoss::new(f64::NAN).is_err());
    }
}
