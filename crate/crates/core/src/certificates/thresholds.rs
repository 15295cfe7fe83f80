use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five constants that enter the flow part of the composite argument.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConstants {
    pub k_x: f64,
    pub k_z: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl FlowConstants {
    pub fn new(k_x: f64, k_z: f64, k1: f64, k2: f64, k3: f64) -> Self {
        FlowConstants { k_x, k_z, k1, k2, k3 }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_x", self.k_x),
            ("k_z", self.k_z),
            ("k_1", self.k1),
            ("k_3", self.k3),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.k2 >= 0.0 && self.k2.is_finite()) {
            return Err(Error::Domain(format!("k_2 must be nonnegative, got {}", self.k2)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub epsilon_star: f64,
    pub theta_star: f64,
}

/// `eps* = k_x k_z / (k_2 k_z + k_1 k_3)` and `theta* = k_3 / (k_1 + k_3)`.
pub fn compute_thresholds(k: FlowConstants) -> Result<Thresholds> {
    k.validate()?;
    Ok(Thresholds {
        epsilon_star: k.k_x * k.k_z / (k.k2 * k.k_z + k.k1 * k.k3),
        theta_star: k.k3 / (k.k1 + k.k3),
    })
}

/// Largest `eps` for which the composite quadratic form is positive definite
/// at `theta*`: `k_x k_z / (k_x k_2 + k_1 k_3)`.
///
/// Equal to `eps*` when `k_x = k_z` or `k_2 = 0`.
pub fn quadratic_threshold(k: FlowConstants) -> Result<f64> {
    k.validate()?;
    Ok(k.k_x * k.k_z / (k.k_x * k.k2 + k.k1 * k.k3))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowMargin {
    pub lambda_min: f64,
    pub positive_definite: bool,
}

/// Smallest eigenvalue of
/// `[[(1-θ)k_x, -((1-θ)k_3 + θk_1)/2], [., θ(k_z/ε - k_2)]]`.
pub fn composite_flow_margin(k: FlowConstants, theta: f64, epsilon: f64) -> Result<FlowMargin> {
    k.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::Domain("epsilon must be positive".into()));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Domain(format!("theta = {theta} not in [0, 1]")));
    }
    let a = (1.0 - theta) * k.k_x;
    let b = -0.5 * ((1.0 - theta) * k.k3 + theta * k.k1);
    let c = theta * (k.k_z / epsilon - k.k2);
    let mean = 0.5 * (a + c);
    let radius = (0.5 * (a - c)).hypot(b);
    let lambda_max = mean + radius;
    // det / lambda_max avoids cancellation near the threshold.
    let lambda_min = if lambda_max > 0.0 {
        (a * c - b * b) / lambda_max
    } else {
        mean - radius
    };
    Ok(FlowMargin {
        lambda_min,
        positive_definite: lambda_min > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> FlowConstants {
        FlowConstants::new(1.0, 1.0, 1.0, 1.0, 1.0)
    }

    #[test]
    fn threshold_examples() {
        let t = compute_thresholds(unit()).unwrap();
        assert_eq!((t.epsilon_star, t.theta_star), (0.5, 0.5));
        let t = compute_thresholds(FlowConstants::new(2.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!((t.epsilon_star, t.theta_star), (1.0, 0.5));
        let t = compute_thresholds(FlowConstants::new(1.0, 1.0, 1.0, 0.0, 1.0)).unwrap();
        assert_eq!((t.epsilon_star, t.theta_star), (1.0, 0.5));
    }

    #[test]
    fn nonpositive_constants_rejected() {
        assert!(compute_thresholds(FlowConstants::new(0.0, 1.0, 1.0, 1.0, 1.0)).is_err());
        assert!(compute_thresholds(FlowConstants::new(1.0, 1.0, -1.0, 1.0, 1.0)).is_err());
        assert!(compute_thresholds(FlowConstants::new(1.0, 1.0, 1.0, -0.1, 1.0)).is_err());
    }

    #[test]
    fn margin_examples() {
        // Closed-form eigenvalues of [[0.5, -0.5], [-0.5, 1.5]].
        let m = composite_flow_margin(unit(), 0.5, 0.25).unwrap();
        let oracle = 1.0 - 0.5f64.sqrt();
        assert!((m.lambda_min - oracle).abs() < 1e-14);
        assert!(m.positive_definite);

        let m = composite_flow_margin(unit(), 0.5, 0.5).unwrap();
        assert!(m.lambda_min >= -1e-12 && m.lambda_min <= 1e-12);

        // det = 0.5 * 0 - 0.25 at eps = 1.
        let m = composite_flow_margin(unit(), 0.5, 1.0).unwrap();
        assert!(!m.positive_definite);
        assert!(m.lambda_min < 0.0);
    }

    #[test]
    fn quadratic_threshold_differs_when_k_x_ne_k_z() {
        let k = FlowConstants::new(2.0, 1.0, 1.0, 1.0, 1.0);
        assert_eq!(quadratic_threshold(k).unwrap(), 2.0 / 3.0);
        assert_eq!(compute_thresholds(k).unwrap().epsilon_star, 1.0);
    }
}
