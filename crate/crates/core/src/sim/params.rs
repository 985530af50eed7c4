//! Simulator parameters and their domain-randomization ranges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

pub type Rgb = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub wheel_base: f64,
    /// Wheel surface speed (m/s) per unit of PWM.
    pub wheel_gain: f64,
    pub cam_height: f64,
    /// Downward tilt of the optical axis.
    pub cam_pitch: f64,
    /// Horizontal field of view.
    pub cam_fov: f64,
    pub light_intensity: f64,
    pub road_color: Rgb,
    pub lane_white: Rgb,
    pub lane_yellow: Rgb,
    pub sky_color: Rgb,
    pub grass_color: Rgb,
    pub friction_scale: f64,
    pub dt: f64,
}

impl SimParams {
    pub fn nominal() -> Self {
        SimParams {
            wheel_base: 0.102,
            wheel_gain: 1.2,
            cam_height: 0.1,
            cam_pitch: 0.35,
            cam_fov: 1.5,
            light_intensity: 1.0,
            road_color: [0.3, 0.3, 0.32],
            lane_white: [0.9, 0.9, 0.9],
            lane_yellow: [0.9, 0.8, 0.1],
            sky_color: [0.55, 0.75, 0.95],
            grass_color: [0.25, 0.5, 0.2],
            friction_scale: 1.0,
            dt: 1.0 / 30.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("wheel_base", self.wheel_base),
            ("wheel_gain", self.wheel_gain),
            ("dt", self.dt),
            ("cam_height", self.cam_height),
            ("cam_fov", self.cam_fov),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidParam(name));
            }
        }
        let colors = [
            ("road_color", self.road_color),
            ("lane_white", self.lane_white),
            ("lane_yellow", self.lane_yellow),
            ("sky_color", self.sky_color),
            ("grass_color", self.grass_color),
        ];
        for (name, c) in colors {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(SimError::InvalidParam(name));
            }
        }
        Ok(())
    }
}

impl Default for SimParams {
    fn default() -> Self {
        Self::nominal()
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    pub fn around(center: f64, spread: f64) -> Self {
        Range::new(center - spread, center + spread)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            // Still consume a draw so streams line up across configurations.
            let _: f64 = rng.gen();
            return self.lo;
        }
        rng.gen_range(self.lo..=self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorRange {
    pub r: Range,
    pub g: Range,
    pub b: Range,
}

impl ColorRange {
    pub fn around(c: Rgb, spread: f64) -> Self {
        let clamp = |v: f64| Range::new((v - spread).max(0.0), (v + spread).min(1.0));
        ColorRange {
            r: clamp(c[0]),
            g: clamp(c[1]),
            b: clamp(c[2]),
        }
    }

    fn channels(&self) -> [Range; 3] {
        [self.r, self.g, self.b]
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Rgb {
        [self.r.sample(rng), self.g.sample(rng), self.b.sample(rng)]
    }
}

/// Per-field sampling ranges applied on every reset when enabled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainRandomization {
    pub enabled: bool,
    pub wheel_base: Range,
    pub wheel_gain: Range,
    pub cam_height: Range,
    pub cam_pitch: Range,
    pub cam_fov: Range,
    pub light_intensity: Range,
    pub road_color: ColorRange,
    pub lane_white: ColorRange,
    pub lane_yellow: ColorRange,
    pub sky_color: ColorRange,
    pub grass_color: ColorRange,
    pub friction_scale: Range,
    pub dt: Range,
}

impl Default for DomainRandomization {
    fn default() -> Self {
        let n = SimParams::nominal();
        DomainRandomization {
            enabled: false,
            wheel_base: Range::around(n.wheel_base, 0.015),
            wheel_gain: Range::around(n.wheel_gain, 0.3),
            cam_height: Range::around(n.cam_height, 0.03),
            cam_pitch: Range::around(n.cam_pitch, 0.18),
            cam_fov: Range::around(n.cam_fov, 0.3),
            light_intensity: Range::new(0.5, 1.5),
            road_color: ColorRange::around(n.road_color, 0.36),
            lane_white: ColorRange::around(n.lane_white, 0.3),
            lane_yellow: ColorRange::around(n.lane_yellow, 0.3),
            sky_color: ColorRange::around(n.sky_color, 0.6),
            grass_color: ColorRange::around(n.grass_color, 0.6),
            friction_scale: Range::new(0.7, 1.3),
            dt: Range::point(n.dt),
        }
    }
}

impl DomainRandomization {
    pub fn with_enabled(mut self, enabled: bool) -> Self {
        self.enabled = enabled;
        self
    }

    fn named_ranges(&self) -> Vec<(&'static str, Range)> {
        let mut out = vec![
            ("wheel_base", self.wheel_base),
            ("wheel_gain", self.wheel_gain),
            ("cam_height", self.cam_height),
            ("cam_pitch", self.cam_pitch),
            ("cam_fov", self.cam_fov),
            ("light_intensity", self.light_intensity),
            ("friction_scale", self.friction_scale),
            ("dt", self.dt),
        ];
        let colors = [
            ("road_color", self.road_color),
            ("lane_white", self.lane_white),
            ("lane_yellow", self.lane_yellow),
            ("sky_color", self.sky_color),
            ("grass_color", self.grass_color),
        ];
        for (name, c) in colors {
            out.extend(c.channels().into_iter().map(|r| (name, r)));
        }
        out
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, r) in self.named_ranges() {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi) {
                return Err(SimError::InvalidRange(name));
            }
        }
        let positive = [
            ("wheel_base", self.wheel_base),
            ("wheel_gain", self.wheel_gain),
            ("cam_height", self.cam_height),
            ("cam_fov", self.cam_fov),
            ("dt", self.dt),
        ];
        for (name, r) in positive {
            if r.lo <= 0.0 {
                return Err(SimError::InvalidRange(name));
            }
        }
        let colors = [
            ("road_color", self.road_color),
            ("lane_white", self.lane_white),
            ("lane_yellow", self.lane_yellow),
            ("sky_color", self.sky_color),
            ("grass_color", self.grass_color),
        ];
        for (name, c) in colors {
            if c.channels().iter().any(|r| r.lo < 0.0 || r.hi > 1.0) {
                return Err(SimError::InvalidRange(name));
            }
        }
        Ok(())
    }

    /// Whether every field of `p` lies inside its configured range.
    pub fn contains(&self, p: &SimParams) -> bool {
        let scalars = [
            (self.wheel_base, p.wheel_base),
            (self.wheel_gain, p.wheel_gain),
            (self.cam_height, p.cam_height),
            (self.cam_pitch, p.cam_pitch),
            (self.cam_fov, p.cam_fov),
            (self.light_intensity, p.light_intensity),
            (self.friction_scale, p.friction_scale),
            (self.dt, p.dt),
        ];
        let colors = [
            (self.road_color, p.road_color),
            (self.lane_white, p.lane_white),
            (self.lane_yellow, p.lane_yellow),
            (self.sky_color, p.sky_color),
            (self.grass_color, p.grass_color),
        ];
        scalars.iter().all(|(r, v)| r.contains(*v))
            && colors
                .iter()
                .all(|(r, c)| r.channels().iter().zip(c).all(|(r, v)| r.contains(*v)))
    }
}

/// Draws simulator parameters for one episode. With randomization disabled
/// the nominal parameters are returned regardless of `seed`.
pub fn sample_domain_randomization(
    seed: u64,
    config: &DomainRandomization,
) -> Result<SimParams, SimError> {
    config.validate()?;
    if !config.enabled {
        return Ok(SimParams::nominal());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(SimParams {
        wheel_base: config.wheel_base.sample(&mut rng),
        wheel_gain: config.wheel_gain.sample(&mut rng),
        cam_height: config.cam_height.sample(&mut rng),
        cam_pitch: config.cam_pitch.sample(&mut rng),
        cam_fov: config.cam_fov.sample(&mut rng),
        light_intensity: config.light_intensity.sample(&mut rng),
        road_color: config.road_color.sample(&mut rng),
        lane_white: config.lane_white.sample(&mut rng),
        lane_yellow: config.lane_yellow.sample(&mut rng),
        sky_color: config.sky_color.sample(&mut rng),
        grass_color: config.grass_color.sample(&mut rng),
        friction_scale: config.friction_scale.sample(&mut rng),
        dt: config.dt.sample(&mut rng),
    })
}
