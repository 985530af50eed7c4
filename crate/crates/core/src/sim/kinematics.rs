//! Actions, wheel commands and differential-drive integration.

use serde::{Deserialize, Serialize};

use super::normalize_angle;

/// Policy output: throttle in `[0, 1]`, steering in `[-1, 1]`.
/// Positive steering turns left.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub throttle: f64,
    pub steering: f64,
}

impl Action {
    /// Clamps both fields into range. NaN inputs map to zero.
    pub fn new(throttle: f64, steering: f64) -> Self {
        let fix = |v: f64| if v.is_nan() { 0.0 } else { v };
        Action {
            throttle: fix(throttle).clamp(0.0, 1.0),
            steering: fix(steering).clamp(-1.0, 1.0),
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.throttle) && (-1.0..=1.0).contains(&self.steering)
    }
}

/// Normalized left/right motor commands.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PwmSignals {
    pub left: f64,
    pub right: f64,
}

impl PwmSignals {
    pub fn new(left: f64, right: f64) -> Self {
        PwmSignals {
            left: left.clamp(-1.0, 1.0),
            right: right.clamp(-1.0, 1.0),
        }
    }
}

pub fn action_to_pwm(action: Action) -> PwmSignals {
    let half = action.steering / 2.0;
    PwmSignals::new(action.throttle - half, action.throttle + half)
}

/// Exact-arc unicycle update for constant `v` and `omega` over `dt`.
/// Returns the new `(x, y, heading)`.
pub fn integrate(x: f64, y: f64, heading: f64, v: f64, omega: f64, dt: f64) -> (f64, f64, f64) {
    if omega.abs() < 1e-9 {
        let (s, c) = heading.sin_cos();
        return (x + v * dt * c, y + v * dt * s, normalize_angle(heading));
    }
    let next = heading + omega * dt;
    let r = v / omega;
    (
        x + r * (next.sin() - heading.sin()),
        y - r * (next.cos() - heading.cos()),
        normalize_angle(next),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixing_law_examples() {
        assert_eq!(action_to_pwm(Action::new(1.0, 0.0)), PwmSignals { left: 1.0, right: 1.0 });
        assert_eq!(action_to_pwm(Action::new(0.0, 0.0)), PwmSignals { left: 0.0, right: 0.0 });
        assert_eq!(action_to_pwm(Action::new(0.5, 1.0)), PwmSignals { left: 0.0, right: 1.0 });
        assert_eq!(action_to_pwm(Action::new(1.0, 1.0)), PwmSignals { left: 0.5, right: 1.0 });
    }

    #[test]
    fn action_clamps() {
        let a = Action::new(1.7, -3.0);
        assert_eq!((a.throttle, a.steering), (1.0, -1.0));
        let a = Action::new(f64::NAN, 0.2);
        assert_eq!(a.throttle, 0.0);
        assert!(a.is_valid());
    }

    #[test]
    fn quarter_circle_lands_on_expected_point() {
        // v = 1, omega = 1 from the origin heading east: circle of radius 1
        // centered at (0, 1).
        let (x, y, h) = integrate(0.0, 0.0, 0.0, 1.0, 1.0, std::f64::consts::FRAC_PI_2);
        assert!((x - 1.0).abs() < 1e-12 && (y - 1.0).abs() < 1e-12);
        assert!((h - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
