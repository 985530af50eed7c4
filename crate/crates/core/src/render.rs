//! Forward camera rendering and observation preprocessing.
//!
//! The camera is a pinhole mounted on the robot center at `cam_height`,
//! tilted down by `cam_pitch`. Every pixel ray that hits the ground plane is
//! classified analytically against the tile geometry (road, white edge line,
//! dashed yellow center line, grass); rays above the horizon see sky.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::sim::{RobotState, SimParams, TrackMap};

pub const RAW_HEIGHT: usize = 480;
pub const RAW_WIDTH: usize = 640;
pub const OBS_HEIGHT: usize = 60;
pub const OBS_WIDTH: usize = 80;
pub const CHANNELS: usize = 3;
pub const OBS_LEN: usize = OBS_HEIGHT * OBS_WIDTH * CHANNELS;
const BLOCK: usize = RAW_HEIGHT / OBS_HEIGHT;

pub const WHITE_LINE_WIDTH: f64 = 0.048;
pub const YELLOW_LINE_WIDTH: f64 = 0.024;
pub const DASH_PERIOD: f64 = 0.2;
pub const DASH_FILL: f64 = 0.6;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("dimension mismatch: expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// 480x640 RGB frame, 8 bits per channel, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    pixels: Vec<u8>,
}

impl RawImage {
    pub fn from_raw(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, RenderError> {
        let expected = RAW_HEIGHT * RAW_WIDTH * CHANNELS;
        if height != RAW_HEIGHT || width != RAW_WIDTH || pixels.len() != expected {
            return Err(RenderError::DimensionMismatch {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(RawImage { pixels })
    }

    pub fn filled(value: u8) -> Self {
        RawImage {
            pixels: vec![value; RAW_HEIGHT * RAW_WIDTH * CHANNELS],
        }
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * RAW_WIDTH + col) * CHANNELS;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Binary PPM (P6).
    pub fn write_ppm(&self, mut out: impl Write) -> Result<(), RenderError> {
        write!(out, "P6\n{RAW_WIDTH} {RAW_HEIGHT}\n255\n")?;
        out.write_all(&self.pixels)?;
        Ok(())
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<(), RenderError> {
        let file = std::fs::File::create(path)?;
        self.write_ppm(std::io::BufWriter::new(file))
    }
}

/// 60x80 RGB observation with values in `[0, 1]`, row-major, channels
/// interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    data: Vec<f32>,
}

impl Observation {
    pub fn from_vec(data: Vec<f32>) -> Result<Self, RenderError> {
        if data.len() != OBS_LEN {
            return Err(RenderError::DimensionMismatch {
                expected: OBS_LEN,
                actual: data.len(),
            });
        }
        Ok(Observation { data })
    }

    pub fn zeros() -> Self {
        Observation {
            data: vec![0.0; OBS_LEN],
        }
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * OBS_WIDTH + col) * CHANNELS + channel]
    }
}

/// 8x8 block mean followed by division by 255.
pub fn preprocess(img: &RawImage) -> Result<Observation, RenderError> {
    let expected = RAW_HEIGHT * RAW_WIDTH * CHANNELS;
    if img.pixels.len() != expected {
        return Err(RenderError::DimensionMismatch {
            expected,
            actual: img.pixels.len(),
        });
    }
    let mut sums = vec![0u32; OBS_LEN];
    for row in 0..RAW_HEIGHT {
        let orow = row / BLOCK;
        let src = &img.pixels[row * RAW_WIDTH * CHANNELS..(row + 1) * RAW_WIDTH * CHANNELS];
        let dst = &mut sums[orow * OBS_WIDTH * CHANNELS..(orow + 1) * OBS_WIDTH * CHANNELS];
        for (col, px) in src.chunks_exact(CHANNELS).enumerate() {
            let o = (col / BLOCK) * CHANNELS;
            dst[o] += u32::from(px[0]);
            dst[o + 1] += u32::from(px[1]);
            dst[o + 2] += u32::from(px[2]);
        }
    }
    let scale = (BLOCK * BLOCK) as f32 * 255.0;
    Ok(Observation {
        data: sums.into_iter().map(|s| s as f32 / scale).collect(),
    })
}

/// What the ground looks like at a world point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Surface {
    Grass,
    Road,
    WhiteLine,
    YellowLine,
}

/// Analytic ground classification from the tile layout.
pub fn surface_at(track: &TrackMap, x: f64, y: f64) -> Surface {
    let Some(idx) = track.tile_at(x, y) else {
        return Surface::Grass;
    };
    let kind = track.tile(idx);
    if !kind.is_drivable() {
        return Surface::Grass;
    }
    let ts = track.tile_size();
    let [ox, oy] = track.tile_origin(idx);
    let (lx, ly) = (x - ox, y - oy);
    // Lateral offset from the road center and distance along the road.
    let (lateral, along) = match kind.curve_corner(ts) {
        Some([cx, cy]) => {
            let (dx, dy) = (lx - cx, ly - cy);
            let r = dx.hypot(dy);
            (r - ts / 2.0, ts / 2.0 * dy.abs().atan2(dx.abs()))
        }
        None if kind.connects(crate::sim::Edge::North) => (lx - ts / 2.0, ly),
        None => (ly - ts / 2.0, lx),
    };
    classify_road(lateral, along, ts)
}

fn classify_road(lateral: f64, along: f64, tile_size: f64) -> Surface {
    let half = tile_size / 2.0;
    let off = lateral.abs();
    if off > half {
        Surface::Grass
    } else if off >= half - WHITE_LINE_WIDTH {
        Surface::WhiteLine
    } else if off <= YELLOW_LINE_WIDTH / 2.0 && along.rem_euclid(DASH_PERIOD) < DASH_FILL * DASH_PERIOD
    {
        Surface::YellowLine
    } else {
        Surface::Road
    }
}

/// Pinhole camera intrinsics derived from `SimParams`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub height: f64,
    pub pitch: f64,
    pub focal: f64,
}

impl Camera {
    pub fn from_params(p: &SimParams) -> Self {
        Camera {
            height: p.cam_height,
            pitch: p.cam_pitch,
            focal: (RAW_WIDTH as f64 / 2.0) / (p.cam_fov / 2.0).tan(),
        }
    }

    /// Ground hit of the ray through pixel `(row, col)` as
    /// `(forward, left)` meters in the robot frame; `None` above the horizon.
    pub fn ground_hit(&self, row: usize, col: usize) -> Option<(f64, f64)> {
        let xc = (col as f64 + 0.5 - RAW_WIDTH as f64 / 2.0) / self.focal;
        let yc = (row as f64 + 0.5 - RAW_HEIGHT as f64 / 2.0) / self.focal;
        let (sp, cp) = self.pitch.sin_cos();
        let forward = cp - yc * sp;
        let down = sp + yc * cp;
        if down <= 1e-9 {
            return None;
        }
        let t = self.height / down;
        Some((t * forward, -t * xc))
    }

    /// Projects a robot-frame ground point to continuous pixel coordinates
    /// `(row, col)`. `None` when behind the camera.
    pub fn project(&self, forward: f64, left: f64) -> Option<(f64, f64)> {
        let (sp, cp) = self.pitch.sin_cos();
        let z = forward * cp + self.height * sp;
        if z <= 1e-9 {
            return None;
        }
        let y = -forward * sp + self.height * cp;
        let x = -left;
        Some((
            self.focal * y / z + RAW_HEIGHT as f64 / 2.0,
            self.focal * x / z + RAW_WIDTH as f64 / 2.0,
        ))
    }
}

/// Caches the per-pixel ground-ray table for one camera configuration.
#[derive(Clone, Debug)]
pub struct Renderer {
    camera: Camera,
    /// Robot-frame ground hits, NaN for sky.
    rays: Vec<(f64, f64)>,
}

impl Renderer {
    pub fn new(params: &SimParams) -> Self {
        let camera = Camera::from_params(params);
        let mut rays = Vec::with_capacity(RAW_HEIGHT * RAW_WIDTH);
        for row in 0..RAW_HEIGHT {
            for col in 0..RAW_WIDTH {
                rays.push(match camera.ground_hit(row, col) {
                    Some(hit) => hit,
                    None => (f64::NAN, f64::NAN),
                });
            }
        }
        Renderer { camera, rays }
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    /// Whether this ray table was built for the camera in `params`.
    pub fn matches(&self, params: &SimParams) -> bool {
        self.camera == Camera::from_params(params)
    }

    pub fn render(&self, state: &RobotState, track: &TrackMap, params: &SimParams) -> RawImage {
        let shade = |c: [f64; 3]| -> [u8; 3] {
            c.map(|v| ((v * params.light_intensity).clamp(0.0, 1.0) * 255.0).round() as u8)
        };
        let palette = [
            shade(params.grass_color),
            shade(params.road_color),
            shade(params.lane_white),
            shade(params.lane_yellow),
        ];
        let sky = shade(params.sky_color);
        let (sin_h, cos_h) = state.heading.sin_cos();
        let mut pixels = vec![0u8; RAW_HEIGHT * RAW_WIDTH * CHANNELS];
        for (px, &(f, l)) in pixels.chunks_exact_mut(CHANNELS).zip(&self.rays) {
            let color = if f.is_nan() {
                sky
            } else {
                let wx = state.x + f * cos_h - l * sin_h;
                let wy = state.y + f * sin_h + l * cos_h;
                palette[surface_at(track, wx, wy) as usize]
            };
            px.copy_from_slice(&color);
        }
        RawImage { pixels }
    }

    pub fn observe(&self, state: &RobotState, track: &TrackMap, params: &SimParams) -> Observation {
        preprocess(&self.render(state, track, params)).expect("renderer emits full frames")
    }
}

/// Renders one frame. Deterministic in its inputs.
pub fn render(state: &RobotState, track: &TrackMap, params: &SimParams) -> RawImage {
    Renderer::new(params).render(state, track, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{bundled, Edge, LaneSegment, TileKind};
    use proptest::prelude::*;

    fn straight_pose() -> (TrackMap, RobotState) {
        let map = bundled("loop_obstacles_free").unwrap();
        let idx = map
            .indices()
            .find(|&i| map.tile(i) == TileKind::StraightEW)
            .unwrap();
        let seg = LaneSegment::new(&map, idx, Edge::West).unwrap();
        let [x, y] = seg.point_at(0.05);
        (
            map,
            RobotState {
                x,
                y,
                heading: 0.0,
                ..Default::default()
            },
        )
    }

    fn shade(c: [f64; 3], light: f64) -> [u8; 3] {
        c.map(|v| ((v * light).clamp(0.0, 1.0) * 255.0).round() as u8)
    }

    #[test]
    fn forward_view_sees_road_below_and_sky_above() {
        let (map, pose) = straight_pose();
        let p = SimParams::nominal();
        let img = render(&pose, &map, &p);
        assert_eq!(img.pixel(RAW_HEIGHT - 1, RAW_WIDTH / 2), shade(p.road_color, 1.0));
        for col in [0, RAW_WIDTH / 2, RAW_WIDTH - 1] {
            assert_eq!(img.pixel(0, col), shade(p.sky_color, 1.0));
        }
    }

    #[test]
    fn render_is_deterministic() {
        let (map, pose) = straight_pose();
        let p = SimParams::nominal();
        assert_eq!(render(&pose, &map, &p), render(&pose, &map, &p));
    }

    #[test]
    fn preprocess_endpoints() {
        let zero = preprocess(&RawImage::filled(0)).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
        let full = preprocess(&RawImage::filled(255)).unwrap();
        assert!(full.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_block_maps_to_single_pixel() {
        let mut img = RawImage::filled(0);
        let (br, bc) = (3, 5);
        for r in br * 8..br * 8 + 8 {
            for c in bc * 8..bc * 8 + 8 {
                let i = (r * RAW_WIDTH + c) * 3;
                img.pixels_mut()[i..i + 3].copy_from_slice(&[128, 128, 128]);
            }
        }
        let obs = preprocess(&img).unwrap();
        for r in 0..OBS_HEIGHT {
            for c in 0..OBS_WIDTH {
                for ch in 0..3 {
                    let want = if (r, c) == (br, bc) { 128.0 / 255.0 } else { 0.0 };
                    assert_eq!(obs.get(r, c, ch), want);
                }
            }
        }
    }

    #[test]
    fn wrong_dimensions_rejected() {
        assert!(matches!(
            RawImage::from_raw(10, 10, vec![0; 300]),
            Err(RenderError::DimensionMismatch { .. })
        ));
        assert!(Observation::from_vec(vec![0.0; 5]).is_err());
    }

    #[test]
    fn ppm_header() {
        let mut buf = Vec::new();
        RawImage::filled(7).write_ppm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P6\n640 480\n255\n"));
        assert_eq!(buf.len(), 15 + RAW_HEIGHT * RAW_WIDTH * 3);
    }

    #[test]
    fn projection_inverts_ray_cast() {
        let cam = Camera::from_params(&SimParams::nominal());
        for (row, col) in [(479, 0), (300, 320), (250, 17), (400, 600)] {
            let (f, l) = cam.ground_hit(row, col).unwrap();
            let (r, c) = cam.project(f, l).unwrap();
            assert!((r - (row as f64 + 0.5)).abs() < 1e-9);
            assert!((c - (col as f64 + 0.5)).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn preprocess_is_monotone(idx in 0usize..RAW_HEIGHT * RAW_WIDTH * 3, base in 0u8..200, bump in 1u8..55) {
            let mut img = RawImage::filled(base);
            let before = preprocess(&img).unwrap();
            img.pixels_mut()[idx] = base + bump;
            let after = preprocess(&img).unwrap();
            for (a, b) in after.as_slice().iter().zip(before.as_slice()) {
                prop_assert!(a >= b);
            }
        }

        #[test]
        fn equal_params_give_equal_observations(seed in 0u64..1000) {
            use crate::sim::{sample_domain_randomization, DomainRandomization};
            let cfg = DomainRandomization::default().with_enabled(true);
            let p = sample_domain_randomization(seed, &cfg).unwrap();
            let (map, pose) = straight_pose();
            let a = Renderer::new(&p).observe(&pose, &map, &p);
            let b = Renderer::new(&p).observe(&pose, &map, &p);
            prop_assert_eq!(a, b);
        }
    }
}
