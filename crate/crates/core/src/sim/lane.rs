//! Right-lane centerline geometry.
//!
//! Every drivable tile carries two lane segments, one per travel direction.
//! A segment is the right-hand lane for a robot entering through `entry` and
//! leaving through `exit`: a line for straights, a quarter arc around the
//! tile corner for curves.

use std::f64::consts::FRAC_PI_2;

use super::track::{Edge, TileIndex, TrackMap};
use super::{normalize_angle, RobotState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LaneShape {
    Line {
        start: [f64; 2],
        heading: f64,
    },
    /// `turn` is +1 for a left (counter-clockwise) turn and -1 for a right turn.
    Arc {
        center: [f64; 2],
        radius: f64,
        start_angle: f64,
        turn: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaneSegment {
    pub tile: TileIndex,
    pub entry: Edge,
    pub exit: Edge,
    pub shape: LaneShape,
    pub length: f64,
}

/// Closest point on a segment to a query position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    /// Arc length from the segment start, clamped to `[0, length]`.
    pub s: f64,
    /// Signed lateral offset, positive to the left of travel.
    pub d: f64,
    /// Lane direction at the projected point.
    pub heading: f64,
}

impl LaneSegment {
    /// Segment for a robot entering `tile` across `entry`. `None` when the
    /// tile has no road through that edge.
    pub fn new(map: &TrackMap, tile: TileIndex, entry: Edge) -> Option<Self> {
        let kind = map.tile(tile);
        let exit = kind.exit_for(entry)?;
        let ts = map.tile_size();
        let [ox, oy] = map.tile_origin(tile);
        let heading = entry.inward_heading();
        let (sin_h, cos_h) = heading.sin_cos();
        let [mx, my] = entry.midpoint(ts);
        let offset = map.lane_half_width();
        // Right of travel is (sin h, -cos h).
        let start = [ox + mx + offset * sin_h, oy + my - offset * cos_h];
        match kind.curve_corner(ts) {
            None => Some(LaneSegment {
                tile,
                entry,
                exit,
                shape: LaneShape::Line { start, heading },
                length: ts,
            }),
            Some([cx, cy]) => {
                let center = [ox + cx, oy + cy];
                // Center on the left of travel means a left turn.
                let rel = [center[0] - (ox + mx), center[1] - (oy + my)];
                let turn = if cos_h * rel[1] - sin_h * rel[0] > 0.0 {
                    1.0
                } else {
                    -1.0
                };
                let radius = (start[0] - center[0]).hypot(start[1] - center[1]);
                let start_angle = (start[1] - center[1]).atan2(start[0] - center[0]);
                Some(LaneSegment {
                    tile,
                    entry,
                    exit,
                    shape: LaneShape::Arc {
                        center,
                        radius,
                        start_angle,
                        turn,
                    },
                    length: radius * FRAC_PI_2,
                })
            }
        }
    }

    /// Both travel directions through a drivable tile.
    pub fn both(map: &TrackMap, tile: TileIndex) -> Option<[LaneSegment; 2]> {
        let [a, b] = map.tile(tile).edges()?;
        Some([Self::new(map, tile, a)?, Self::new(map, tile, b)?])
    }

    /// Signed curvature, positive for left turns.
    pub fn curvature(&self) -> f64 {
        match self.shape {
            LaneShape::Line { .. } => 0.0,
            LaneShape::Arc { radius, turn, .. } => turn / radius,
        }
    }

    pub fn point_at(&self, s: f64) -> [f64; 2] {
        match self.shape {
            LaneShape::Line { start, heading } => {
                [start[0] + s * heading.cos(), start[1] + s * heading.sin()]
            }
            LaneShape::Arc {
                center,
                radius,
                start_angle,
                turn,
            } => {
                let a = start_angle + turn * s / radius;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
        }
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        match self.shape {
            LaneShape::Line { heading, .. } => heading,
            LaneShape::Arc {
                radius,
                start_angle,
                turn,
                ..
            } => normalize_angle(start_angle + turn * s / radius + turn * FRAC_PI_2),
        }
    }

    pub fn project(&self, p: [f64; 2]) -> Projection {
        match self.shape {
            LaneShape::Line { start, heading } => {
                let (sin_h, cos_h) = heading.sin_cos();
                let (dx, dy) = (p[0] - start[0], p[1] - start[1]);
                let along = dx * cos_h + dy * sin_h;
                let d = -dx * sin_h + dy * cos_h;
                Projection {
                    s: along.clamp(0.0, self.length),
                    d,
                    heading,
                }
            }
            LaneShape::Arc {
                center,
                radius,
                start_angle,
                turn,
            } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                let dist = dx.hypot(dy);
                let swept = normalize_angle(dy.atan2(dx) - start_angle) * turn;
                let s = (swept * radius).clamp(0.0, self.length);
                Projection {
                    s,
                    d: turn * (radius - dist),
                    heading: self.heading_at(s),
                }
            }
        }
    }

    /// The segment that continues this one across its exit edge.
    pub fn successor(&self, map: &TrackMap) -> Option<LaneSegment> {
        let next = map.neighbor(self.tile, self.exit)?;
        LaneSegment::new(map, next, self.exit.opposite())
    }

    /// The segment that leads into this one through its entry edge.
    pub fn predecessor(&self, map: &TrackMap) -> Option<LaneSegment> {
        let prev = map.neighbor(self.tile, self.entry)?;
        let kind = map.tile(prev);
        let prev_entry = kind.exit_for(self.entry.opposite())?;
        LaneSegment::new(map, prev, prev_entry)
    }
}

/// Robot pose relative to the right lane of its direction of travel.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LanePose {
    /// Lateral offset from the right-lane centerline, positive toward the
    /// road center.
    pub d: f64,
    /// Heading error relative to the lane direction.
    pub phi: f64,
    pub curvature: f64,
    pub in_right_lane: bool,
    pub on_drivable: bool,
}

impl LanePose {
    pub const OFF_ROAD: LanePose = LanePose {
        d: 0.0,
        phi: 0.0,
        curvature: 0.0,
        in_right_lane: false,
        on_drivable: false,
    };
}

/// Lane segment and projection selected for a pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaneLocation {
    pub segment: LaneSegment,
    pub projection: Projection,
    pub phi: f64,
}

/// Whether a world point lies on the road surface.
pub fn on_road(map: &TrackMap, x: f64, y: f64) -> bool {
    let Some(idx) = map.tile_at(x, y) else {
        return false;
    };
    let kind = map.tile(idx);
    if !kind.is_drivable() {
        return false;
    }
    match kind.curve_corner(map.tile_size()) {
        None => true,
        Some([cx, cy]) => {
            let [ox, oy] = map.tile_origin(idx);
            (x - ox - cx).hypot(y - oy - cy) <= map.tile_size()
        }
    }
}

/// Picks the travel direction whose lane tangent best matches `heading` and
/// projects the position onto that lane. `None` off the road surface.
pub fn locate(map: &TrackMap, x: f64, y: f64, heading: f64) -> Option<LaneLocation> {
    if !on_road(map, x, y) {
        return None;
    }
    let idx = map.tile_at(x, y)?;
    let [a, b] = LaneSegment::both(map, idx)?;
    let pa = a.project([x, y]);
    let pb = b.project([x, y]);
    let phi_a = normalize_angle(heading - pa.heading);
    let phi_b = normalize_angle(heading - pb.heading);
    let (segment, projection, phi) = if phi_a.abs() <= phi_b.abs() {
        (a, pa, phi_a)
    } else {
        (b, pb, phi_b)
    };
    Some(LaneLocation {
        segment,
        projection,
        phi,
    })
}

pub fn lane_pose(map: &TrackMap, state: &RobotState) -> LanePose {
    match locate(map, state.x, state.y, state.heading) {
        None => LanePose::OFF_ROAD,
        Some(loc) => LanePose {
            d: loc.projection.d,
            phi: loc.phi,
            curvature: loc.segment.curvature(),
            in_right_lane: loc.projection.d.abs() < map.lane_half_width(),
            on_drivable: true,
        },
    }
}

/// Walks `distance` meters forward along the lane from `(segment, s)`,
/// crossing tile borders as needed.
pub fn advance(map: &TrackMap, segment: LaneSegment, s: f64, distance: f64) -> (LaneSegment, f64) {
    let mut seg = segment;
    let mut remaining = distance;
    let mut pos = s;
    loop {
        let left_in_seg = seg.length - pos;
        if remaining <= left_in_seg {
            return (seg, pos + remaining);
        }
        remaining -= left_in_seg;
        match seg.successor(map) {
            Some(next) => {
                seg = next;
                pos = 0.0;
            }
            // Validated maps never end; stop at the last point if one does.
            None => return (seg, seg.length),
        }
    }
}
