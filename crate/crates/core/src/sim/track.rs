//! Tile grids and their text format.
//!
//! A map file is line oriented. Blank lines and `#` comments are ignored, a
//! `tile_size: <meters>` header may appear before the first grid row, and
//! every remaining line is one grid row of comma-separated tile tokens.
//! Row 0 is the northern edge of the map.

use std::fmt;
use std::str::FromStr;

use super::SimError;

pub const DEFAULT_TILE_SIZE: f64 = 0.585;

/// Edge of a square tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Edge {
    North,
    East,
    South,
    West,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::North, Edge::East, Edge::South, Edge::West];

    pub fn opposite(self) -> Edge {
        match self {
            Edge::North => Edge::South,
            Edge::East => Edge::West,
            Edge::South => Edge::North,
            Edge::West => Edge::East,
        }
    }

    /// Grid offset `(d_row, d_col)` of the neighbor across this edge.
    pub fn grid_offset(self) -> (isize, isize) {
        match self {
            Edge::North => (-1, 0),
            Edge::East => (0, 1),
            Edge::South => (1, 0),
            Edge::West => (0, -1),
        }
    }

    /// Heading (world frame, x east, y north) of a robot crossing this edge
    /// into the tile.
    pub fn inward_heading(self) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Edge::North => -FRAC_PI_2,
            Edge::East => PI,
            Edge::South => FRAC_PI_2,
            Edge::West => 0.0,
        }
    }

    /// Midpoint of the edge in tile-local coordinates (origin at the SW corner).
    pub fn midpoint(self, tile_size: f64) -> [f64; 2] {
        let h = tile_size / 2.0;
        match self {
            Edge::North => [h, tile_size],
            Edge::East => [tile_size, h],
            Edge::South => [h, 0.0],
            Edge::West => [0.0, h],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TileKind {
    StraightNS,
    StraightEW,
    CurveNE,
    CurveNW,
    CurveSE,
    CurveSW,
    Grass,
}

impl TileKind {
    pub const ALL: [TileKind; 7] = [
        TileKind::StraightNS,
        TileKind::StraightEW,
        TileKind::CurveNE,
        TileKind::CurveNW,
        TileKind::CurveSE,
        TileKind::CurveSW,
        TileKind::Grass,
    ];

    pub const DRIVABLE: [TileKind; 6] = [
        TileKind::StraightNS,
        TileKind::StraightEW,
        TileKind::CurveNE,
        TileKind::CurveNW,
        TileKind::CurveSE,
        TileKind::CurveSW,
    ];

    /// The two edges joined by the road on this tile.
    pub fn edges(self) -> Option<[Edge; 2]> {
        use Edge::*;
        match self {
            TileKind::StraightNS => Some([North, South]),
            TileKind::StraightEW => Some([East, West]),
            TileKind::CurveNE => Some([North, East]),
            TileKind::CurveNW => Some([North, West]),
            TileKind::CurveSE => Some([South, East]),
            TileKind::CurveSW => Some([South, West]),
            TileKind::Grass => None,
        }
    }

    pub fn is_drivable(self) -> bool {
        self != TileKind::Grass
    }

    pub fn is_curve(self) -> bool {
        matches!(
            self,
            TileKind::CurveNE | TileKind::CurveNW | TileKind::CurveSE | TileKind::CurveSW
        )
    }

    pub fn connects(self, edge: Edge) -> bool {
        self.edges().is_some_and(|e| e.contains(&edge))
    }

    /// The other road edge, given one of them.
    pub fn exit_for(self, entry: Edge) -> Option<Edge> {
        let [a, b] = self.edges()?;
        if entry == a {
            Some(b)
        } else if entry == b {
            Some(a)
        } else {
            None
        }
    }

    /// Curve center corner in tile-local coordinates.
    pub fn curve_corner(self, tile_size: f64) -> Option<[f64; 2]> {
        match self {
            TileKind::CurveNE => Some([tile_size, tile_size]),
            TileKind::CurveNW => Some([0.0, tile_size]),
            TileKind::CurveSE => Some([tile_size, 0.0]),
            TileKind::CurveSW => Some([0.0, 0.0]),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            TileKind::StraightNS => "Straight_NS",
            TileKind::StraightEW => "Straight_EW",
            TileKind::CurveNE => "CurveNE",
            TileKind::CurveNW => "CurveNW",
            TileKind::CurveSE => "CurveSE",
            TileKind::CurveSW => "CurveSW",
            TileKind::Grass => "Grass",
        }
    }
}

impl fmt::Display for TileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for TileKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TileKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| format!("unknown tile kind `{s}`"))
    }
}

/// Grid cell address. Row 0 is the northernmost row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileIndex {
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackMap {
    name: String,
    width: usize,
    height: usize,
    tiles: Vec<TileKind>,
    tile_size: f64,
}

impl TrackMap {
    /// Builds and validates a map from rows of tiles (row 0 = north).
    pub fn from_rows(
        name: impl Into<String>,
        rows: Vec<Vec<TileKind>>,
        tile_size: f64,
    ) -> Result<Self, SimError> {
        if !(tile_size > 0.0 && tile_size.is_finite()) {
            return Err(SimError::InvalidTileSize(tile_size));
        }
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if height == 0 || width == 0 {
            return Err(SimError::Parse {
                line: 0,
                message: "empty grid".into(),
            });
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(SimError::Parse {
                line: 0,
                message: format!(
                    "grid row {bad} has {} tiles, expected {width}",
                    rows[bad].len()
                ),
            });
        }
        let map = TrackMap {
            name: name.into(),
            width,
            height,
            tiles: rows.into_iter().flatten().collect(),
            tile_size,
        };
        map.validate()?;
        Ok(map)
    }

    /// Parses the line-oriented map format.
    pub fn parse(name: impl Into<String>, source: &str) -> Result<Self, SimError> {
        let mut tile_size = DEFAULT_TILE_SIZE;
        let mut rows = Vec::new();
        for (lineno, raw) in source.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(value) = line.strip_prefix("tile_size:") {
                if !rows.is_empty() {
                    return Err(SimError::Parse {
                        line: lineno + 1,
                        message: "tile_size header after grid rows".into(),
                    });
                }
                tile_size = value.trim().parse().map_err(|e| SimError::Parse {
                    line: lineno + 1,
                    message: format!("bad tile_size: {e}"),
                })?;
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| tok.trim().parse::<TileKind>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|message| SimError::Parse {
                    line: lineno + 1,
                    message,
                })?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(SimError::Parse {
                line: 0,
                message: "no grid rows".into(),
            });
        }
        Self::from_rows(name, rows, tile_size)
    }

    /// Serializes back to the text format.
    pub fn to_source(&self) -> String {
        let mut out = format!("# {}\ntile_size: {}\n", self.name, self.tile_size);
        for row in 0..self.height {
            let toks: Vec<&str> = (0..self.width)
                .map(|col| self.tile(TileIndex { row, col }).token())
                .collect();
            out.push_str(&toks.join(", "));
            out.push('\n');
        }
        out
    }

    fn validate(&self) -> Result<(), SimError> {
        let mut drivable = 0usize;
        for idx in self.indices() {
            let kind = self.tile(idx);
            let Some(edges) = kind.edges() else { continue };
            drivable += 1;
            for edge in edges {
                let ok = self
                    .neighbor(idx, edge)
                    .is_some_and(|n| self.tile(n).connects(edge.opposite()));
                if !ok {
                    return Err(SimError::DisconnectedTrack {
                        row: idx.row,
                        col: idx.col,
                        edge,
                    });
                }
            }
        }
        // Every drivable tile has two matching neighbors, so each one lies on a cycle.
        if drivable == 0 {
            return Err(SimError::NoClosedLoop);
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn tile_size(&self) -> f64 {
        self.tile_size
    }

    /// Half-width of one lane; the right-lane centerline sits this far from
    /// the right road edge.
    pub fn lane_half_width(&self) -> f64 {
        self.tile_size / 4.0
    }

    pub fn tile(&self, idx: TileIndex) -> TileKind {
        self.tiles[idx.row * self.width + idx.col]
    }

    pub fn indices(&self) -> impl Iterator<Item = TileIndex> + '_ {
        (0..self.height).flat_map(move |row| (0..self.width).map(move |col| TileIndex { row, col }))
    }

    pub fn drivable_tiles(&self) -> Vec<TileIndex> {
        self.indices().filter(|&i| self.tile(i).is_drivable()).collect()
    }

    pub fn neighbor(&self, idx: TileIndex, edge: Edge) -> Option<TileIndex> {
        let (dr, dc) = edge.grid_offset();
        let row = idx.row.checked_add_signed(dr)?;
        let col = idx.col.checked_add_signed(dc)?;
        (row < self.height && col < self.width).then_some(TileIndex { row, col })
    }

    /// Tile containing a world point, if inside the grid.
    pub fn tile_at(&self, x: f64, y: f64) -> Option<TileIndex> {
        let cx = (x / self.tile_size).floor();
        let cy = (y / self.tile_size).floor();
        if !(cx >= 0.0 && cy >= 0.0) {
            return None;
        }
        let (col, from_south) = (cx as usize, cy as usize);
        (col < self.width && from_south < self.height).then(|| TileIndex {
            row: self.height - 1 - from_south,
            col,
        })
    }

    /// World coordinates of the tile's south-west corner.
    pub fn tile_origin(&self, idx: TileIndex) -> [f64; 2] {
        [
            idx.col as f64 * self.tile_size,
            (self.height - 1 - idx.row) as f64 * self.tile_size,
        ]
    }

    /// Walks the closed loop through `start`, leaving it through `exit`.
    /// Returns `(tile, entry edge)` pairs in travel order, starting with
    /// `start` itself.
    pub fn loop_from(&self, start: TileIndex, exit: Edge) -> Vec<(TileIndex, Edge)> {
        let entry = self
            .tile(start)
            .exit_for(exit)
            .expect("exit edge must belong to a drivable tile");
        let mut out = vec![(start, entry)];
        let mut cur = start;
        let mut out_edge = exit;
        loop {
            let next = self.neighbor(cur, out_edge).expect("validated map");
            let entry = out_edge.opposite();
            if next == start && entry == out[0].1 {
                break;
            }
            out.push((next, entry));
            out_edge = self.tile(next).exit_for(entry).expect("validated map");
            cur = next;
        }
        out
    }
}

const SMALL_LOOP: &str = include_str!("../../maps/small_loop.map");
const LOOP_OBSTACLES_FREE: &str = include_str!("../../maps/loop_obstacles_free.map");
const ZIGZAG: &str = include_str!("../../maps/zigzag.map");
const HOLDOUT_LOOP: &str = include_str!("../../maps/holdout_loop.map");

/// Maps used for demonstration collection and training.
pub const TRAINING_MAPS: [&str; 3] = ["small_loop", "loop_obstacles_free", "zigzag"];
/// Map never used for training; reserved for generalization checks.
pub const HOLDOUT_MAP: &str = "holdout_loop";

pub fn bundled_names() -> [&'static str; 4] {
    ["small_loop", "loop_obstacles_free", "zigzag", "holdout_loop"]
}

/// Loads one of the maps shipped with the crate.
pub fn bundled(name: &str) -> Result<TrackMap, SimError> {
    let src = match name {
        "small_loop" => SMALL_LOOP,
        "loop_obstacles_free" => LOOP_OBSTACLES_FREE,
        "zigzag" => ZIGZAG,
        "holdout_loop" => HOLDOUT_LOOP,
        other => return Err(SimError::UnknownMap(other.to_string())),
    };
    TrackMap::parse(name, src)
}

/// Resolves a map by bundled name first, then as a file path.
pub fn load_map(name_or_path: &str) -> Result<TrackMap, SimError> {
    match bundled(name_or_path) {
        Ok(m) => Ok(m),
        Err(SimError::UnknownMap(_)) => {
            let src = std::fs::read_to_string(name_or_path)
                .map_err(|e| SimError::Io(format!("{name_or_path}: {e}")))?;
            let stem = std::path::Path::new(name_or_path)
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or(name_or_path);
            TrackMap::parse(stem, &src)
        }
        Err(e) => Err(e),
    }
}
