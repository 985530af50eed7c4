//! Pure pursuit demonstrator with a PD steering law and separate gains for
//! straights and curves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{advance, locate, normalize_angle, Action, RobotState, TrackMap};

#[derive(Debug, Error, PartialEq)]
pub enum ExpertError {
    #[error("robot is off the road at ({x:.3}, {y:.3})")]
    OffRoad { x: f64, y: f64 },
    #[error("invalid expert config field `{0}`")]
    InvalidConfig(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PurePursuitConfig {
    /// Arc length ahead of the robot's lane projection, meters.
    pub lookahead: f64,
    pub v_straight: f64,
    pub v_curve: f64,
    /// Steering per radian of bearing error.
    pub kp_straight: f64,
    pub kp_curve: f64,
    /// Steering per radian of bearing-error change between steps.
    pub kd_straight: f64,
    pub kd_curve: f64,
}

impl Default for PurePursuitConfig {
    fn default() -> Self {
        PurePursuitConfig {
            lookahead: 0.25,
            v_straight: 0.8,
            v_curve: 0.5,
            kp_straight: 2.5,
            kp_curve: 4.0,
            kd_straight: 1.0,
            kd_curve: 1.0,
        }
    }
}

impl PurePursuitConfig {
    pub fn validate(&self) -> Result<(), ExpertError> {
        if !(self.lookahead > 0.0 && self.lookahead.is_finite()) {
            return Err(ExpertError::InvalidConfig("lookahead"));
        }
        for (name, v) in [("v_straight", self.v_straight), ("v_curve", self.v_curve)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ExpertError::InvalidConfig(name));
            }
        }
        let gains = [
            ("kp_straight", self.kp_straight),
            ("kp_curve", self.kp_curve),
            ("kd_straight", self.kd_straight),
            ("kd_curve", self.kd_curve),
        ];
        for (name, g) in gains {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(ExpertError::InvalidConfig(name));
            }
        }
        Ok(())
    }
}

/// Derivative-term memory. Reset to default at the start of every episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpertState {
    pub prev_alpha: f64,
    pub valid: bool,
}

/// Point `lookahead` meters of lane arc ahead of the robot's projection onto
/// its right-lane centerline.
pub fn lookahead_point(
    track: &TrackMap,
    pose: &RobotState,
    lookahead: f64,
) -> Result<[f64; 2], ExpertError> {
    let loc = locate(track, pose.x, pose.y, pose.heading).ok_or(ExpertError::OffRoad {
        x: pose.x,
        y: pose.y,
    })?;
    let (seg, s) = advance(track, loc.segment, loc.projection.s, lookahead);
    Ok(seg.point_at(s))
}

pub fn expert_action(
    pose: &RobotState,
    track: &TrackMap,
    cfg: &PurePursuitConfig,
    mem: ExpertState,
) -> Result<(Action, ExpertState), ExpertError> {
    let loc = locate(track, pose.x, pose.y, pose.heading).ok_or(ExpertError::OffRoad {
        x: pose.x,
        y: pose.y,
    })?;
    let (seg, s) = advance(track, loc.segment, loc.projection.s, cfg.lookahead);
    let [tx, ty] = seg.point_at(s);
    let bearing = (ty - pose.y).atan2(tx - pose.x);
    let alpha = normalize_angle(bearing - pose.heading);
    let on_curve = loc.segment.curvature().abs() > 0.0;
    let (v, kp, kd) = if on_curve {
        (cfg.v_curve, cfg.kp_curve, cfg.kd_curve)
    } else {
        (cfg.v_straight, cfg.kp_straight, cfg.kd_straight)
    };
    let derivative = if mem.valid { alpha - mem.prev_alpha } else { 0.0 };
    let steering = (kp * alpha + kd * derivative).clamp(-1.0, 1.0);
    Ok((
        Action::new(v, steering),
        ExpertState {
            prev_alpha: alpha,
            valid: true,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{bundled, Edge, LaneSegment, TileKind};

    fn straight_start() -> (TrackMap, LaneSegment) {
        let map = bundled("loop_obstacles_free").unwrap();
        let idx = map
            .indices()
            .find(|&i| map.tile(i) == TileKind::StraightEW)
            .unwrap();
        let seg = LaneSegment::new(&map, idx, Edge::West).unwrap();
        (map, seg)
    }

    fn pose_on(seg: &LaneSegment, s: f64, d: f64, dheading: f64) -> RobotState {
        let [x, y] = seg.point_at(s);
        let h = seg.heading_at(s);
        RobotState {
            x: x - d * h.sin(),
            y: y + d * h.cos(),
            heading: normalize_angle(h + dheading),
            ..Default::default()
        }
    }

    #[test]
    fn lookahead_on_straight() {
        let (map, seg) = straight_start();
        let pose = pose_on(&seg, 0.1, 0.0, 0.0);
        let p = lookahead_point(&map, &pose, 0.3).unwrap();
        let want = seg.point_at(0.4);
        assert!((p[0] - want[0]).abs() < 1e-12 && (p[1] - want[1]).abs() < 1e-12);
    }

    #[test]
    fn lookahead_past_straight_lands_on_next_curve() {
        // Top row of loop_obstacles_free, heading east: the last straight
        // (row 0, col 3) is followed by CurveSW at (0, 4), a right turn
        // around that tile's SW corner.
        let map = bundled("loop_obstacles_free").unwrap();
        let ts = map.tile_size();
        let seg = LaneSegment::new(&map, crate::sim::TileIndex { row: 0, col: 3 }, Edge::West).unwrap();
        let pose = pose_on(&seg, ts - 0.1, 0.0, 0.0);
        let p = lookahead_point(&map, &pose, 0.3).unwrap();
        // Hand parametrization: corner at (4 ts, 4 ts), inner-lane radius ts/4,
        // start angle pi/2, sweeping clockwise by 0.2 / (ts/4) rad.
        let (cx, cy) = (4.0 * ts, 4.0 * ts);
        let r = ts / 4.0;
        let ang = std::f64::consts::FRAC_PI_2 - 0.2 / r;
        let want = [cx + r * ang.cos(), cy + r * ang.sin()];
        assert!((p[0] - want[0]).abs() < 1e-12, "{p:?} vs {want:?}");
        assert!((p[1] - want[1]).abs() < 1e-12, "{p:?} vs {want:?}");
    }

    #[test]
    fn lookahead_invariant_to_lateral_displacement() {
        let (map, seg) = straight_start();
        let a = lookahead_point(&map, &pose_on(&seg, 0.2, 0.0, 0.0), 0.25).unwrap();
        let b = lookahead_point(&map, &pose_on(&seg, 0.2, 0.05, 0.0), 0.25).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn off_road_is_an_error() {
        let map = bundled("small_loop").unwrap();
        let pose = RobotState {
            x: -1.0,
            ..Default::default()
        };
        assert!(matches!(lookahead_point(&map, &pose, 0.2), Err(ExpertError::OffRoad { .. })));
        assert!(expert_action(&pose, &map, &PurePursuitConfig::default(), ExpertState::default()).is_err());
    }

    #[test]
    fn aligned_on_centerline_goes_straight() {
        let (map, seg) = straight_start();
        let cfg = PurePursuitConfig::default();
        let (a, mem) = expert_action(&pose_on(&seg, 0.1, 0.0, 0.0), &map, &cfg, ExpertState::default()).unwrap();
        assert!(a.steering.abs() < 1e-12);
        assert_eq!(a.throttle, cfg.v_straight);
        assert!(mem.valid);
    }

    #[test]
    fn heading_left_of_bearing_steers_right() {
        let (map, seg) = straight_start();
        let cfg = PurePursuitConfig {
            kp_straight: 2.0,
            ..Default::default()
        };
        let (a, _) = expert_action(&pose_on(&seg, 0.1, 0.0, 0.1), &map, &cfg, ExpertState::default()).unwrap();
        assert!((a.steering + 0.2).abs() < 1e-12, "{}", a.steering);
    }

    #[test]
    fn constant_alpha_has_no_derivative_term() {
        let (map, seg) = straight_start();
        let cfg = PurePursuitConfig::default();
        let pose = pose_on(&seg, 0.1, 0.0, 0.05);
        let (first, mem) = expert_action(&pose, &map, &cfg, ExpertState::default()).unwrap();
        let (second, _) = expert_action(&pose, &map, &cfg, mem).unwrap();
        assert_eq!(first.steering, second.steering);
        assert!((second.steering - cfg.kp_straight * mem.prev_alpha).abs() < 1e-12);
    }

    #[test]
    fn first_step_steering_is_odd_in_alpha() {
        let (map, seg) = straight_start();
        let cfg = PurePursuitConfig::default();
        for dh in [0.02, 0.07, 0.15] {
            let (l, _) = expert_action(&pose_on(&seg, 0.2, 0.0, dh), &map, &cfg, ExpertState::default()).unwrap();
            let (r, _) = expert_action(&pose_on(&seg, 0.2, 0.0, -dh), &map, &cfg, ExpertState::default()).unwrap();
            assert!((l.steering + r.steering).abs() < 1e-12);
        }
    }

    #[test]
    fn centerline_steering_bounded_by_derivative_term() {
        let (map, seg) = straight_start();
        let cfg = PurePursuitConfig::default();
        let mem = ExpertState {
            prev_alpha: 0.08,
            valid: true,
        };
        let (a, next) = expert_action(&pose_on(&seg, 0.2, 0.0, 0.0), &map, &cfg, mem).unwrap();
        assert!(a.steering.abs() <= cfg.kd_straight * (next.prev_alpha - mem.prev_alpha).abs() + 1e-12);
    }

    #[test]
    fn config_validation() {
        PurePursuitConfig::default().validate().unwrap();
        let bad = PurePursuitConfig {
            v_curve: 1.5,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(ExpertError::InvalidConfig("v_curve")));
        let bad = PurePursuitConfig {
            kd_curve: -0.1,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(ExpertError::InvalidConfig("kd_curve")));
    }
}
