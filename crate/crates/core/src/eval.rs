//! Episode runner and driving metrics: survival time, traveled distance in
//! tiles, accumulated lateral deviation and time spent in major infractions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{Policy, PolicyError, PolicyInput};
use crate::sim::{
    action_to_pwm, locate, Action, DoneReason, Env, LanePose, LaneSegment, MapChoice, RobotState,
    SimError, TileIndex, TrackMap,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectory log is empty")]
    EmptyLog,
    #[error("expected {expected} seeds, got {actual}")]
    SeedCount { expected: usize, actual: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// State of the robot when an action was chosen, and that action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub state: RobotState,
    pub lane_pose: LanePose,
    pub action: Action,
}

/// One record per simulator step, taken before the step is applied. Each
/// record therefore covers the interval `[t, t + dt)` and the episode ends
/// at `records.len() * dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub records: Vec<StepRecord>,
    pub done_reason: DoneReason,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.records.len() as f64 * self.dt
    }

    pub fn truncated(&self, n: usize) -> TrajectoryLog {
        TrajectoryLog {
            dt: self.dt,
            records: self.records[..n.min(self.records.len())].to_vec(),
            done_reason: self.done_reason,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Seconds until the robot left the road or the time limit hit.
    pub survival_time: f64,
    /// Whole tiles of forward right-lane progress.
    pub traveled_distance: f64,
    /// Integral of |d| over on-road time, meter-seconds.
    pub lateral_deviation: f64,
    /// Seconds spent off the road or in the oncoming lane.
    pub major_infractions: f64,
}

/// Where a record falls for infraction accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepCategory {
    RightLane,
    WrongLane,
    OffRoad,
    /// On the road but neither lane, e.g. across the outer edge line on a
    /// curve.
    OtherOnRoad,
}

pub fn categorize(pose: &LanePose) -> StepCategory {
    if !pose.on_drivable {
        StepCategory::OffRoad
    } else if pose.in_right_lane {
        StepCategory::RightLane
    } else if pose.d > 0.0 {
        StepCategory::WrongLane
    } else {
        StepCategory::OtherOnRoad
    }
}

/// Arc-length coordinate along one closed loop, traversed in a fixed
/// direction.
#[derive(Clone, Debug)]
pub struct LoopProgress {
    segments: Vec<LaneSegment>,
    offsets: Vec<f64>,
    by_tile: HashMap<TileIndex, usize>,
    length: f64,
}

impl LoopProgress {
    /// Loop through `segment`, oriented along it.
    pub fn new(track: &TrackMap, segment: &LaneSegment) -> Self {
        let mut segments = Vec::new();
        let mut offsets = Vec::new();
        let mut by_tile = HashMap::new();
        let mut acc = 0.0;
        for (tile, entry) in track.loop_from(segment.tile, segment.exit) {
            let seg = LaneSegment::new(track, tile, entry).expect("loop tiles are drivable");
            by_tile.insert(tile, segments.len());
            offsets.push(acc);
            acc += seg.length;
            segments.push(seg);
        }
        LoopProgress {
            segments,
            offsets,
            by_tile,
            length: acc,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Position along the loop in `[0, length)`, or `None` off the loop.
    pub fn position(&self, track: &TrackMap, x: f64, y: f64) -> Option<f64> {
        let tile = track.tile_at(x, y)?;
        let i = *self.by_tile.get(&tile)?;
        let p = self.segments[i].project([x, y]);
        Some((self.offsets[i] + p.s) % self.length)
    }

    /// Signed shortest displacement from `from` to `to` around the loop.
    pub fn delta(&self, from: f64, to: f64) -> f64 {
        let mut d = (to - from) % self.length;
        if d > self.length / 2.0 {
            d -= self.length;
        } else if d < -self.length / 2.0 {
            d += self.length;
        }
        d
    }
}

/// Forward right-lane progress with a high-water mark: distance counts only
/// the first time it is covered, and only while in the right lane.
#[derive(Clone, Debug)]
struct ProgressMeter {
    progress: LoopProgress,
    last: Option<f64>,
    unwrapped: f64,
    high_water: f64,
    counted: f64,
}

impl ProgressMeter {
    fn observe(&mut self, track: &TrackMap, rec: &StepRecord) {
        if !rec.lane_pose.on_drivable {
            return;
        }
        let Some(pos) = self.progress.position(track, rec.state.x, rec.state.y) else {
            return;
        };
        if let Some(prev) = self.last {
            self.unwrapped += self.progress.delta(prev, pos);
        }
        self.last = Some(pos);
        if self.unwrapped > self.high_water {
            if rec.lane_pose.in_right_lane {
                self.counted += self.unwrapped - self.high_water;
            }
            self.high_water = self.unwrapped;
        }
    }
}

pub fn compute_metrics(log: &TrajectoryLog, track: &TrackMap) -> Result<MetricsReport, EvalError> {
    if log.records.is_empty() {
        return Err(EvalError::EmptyLog);
    }
    let mut meter = log
        .records
        .iter()
        .find(|r| r.lane_pose.on_drivable)
        .and_then(|r| locate(track, r.state.x, r.state.y, r.state.heading))
        .map(|loc| ProgressMeter {
            progress: LoopProgress::new(track, &loc.segment),
            last: None,
            unwrapped: 0.0,
            high_water: 0.0,
            counted: 0.0,
        });
    let mut infraction_steps = 0usize;
    let mut abs_d_sum = 0.0;
    for rec in &log.records {
        match categorize(&rec.lane_pose) {
            StepCategory::OffRoad | StepCategory::WrongLane => infraction_steps += 1,
            StepCategory::RightLane | StepCategory::OtherOnRoad => {}
        }
        if rec.lane_pose.on_drivable {
            abs_d_sum += rec.lane_pose.d.abs();
        }
        if let Some(m) = meter.as_mut() {
            m.observe(track, rec);
        }
    }
    let counted = meter.map_or(0.0, |m| m.counted);
    Ok(MetricsReport {
        survival_time: log.duration(),
        traveled_distance: (counted / track.tile_size()).floor(),
        lateral_deviation: abs_d_sum * log.dt,
        major_infractions: infraction_steps as f64 * log.dt,
    })
}

/// Resets with `seed` and drives `policy` until the episode ends.
pub fn run_episode(
    policy: &mut dyn Policy,
    env: &mut Env,
    map: MapChoice,
    domain_rand: bool,
    seed: u64,
) -> Result<TrajectoryLog, EvalError> {
    let (mut state, params) = env.reset(map, domain_rand, seed)?;
    policy.reset();
    let track = env.track()?.clone();
    let mut lane = env.lane_pose()?;
    let mut records = Vec::with_capacity(env.max_steps());
    loop {
        let obs = if policy.needs_observation() {
            Some(env.observe()?)
        } else {
            None
        };
        let action = policy.act(&PolicyInput {
            state: &state,
            track: &track,
            observation: obs.as_ref(),
        })?;
        records.push(StepRecord {
            t: records.len() as f64 * params.dt,
            state,
            lane_pose: lane,
            action,
        });
        let r = env.step(action_to_pwm(action))?;
        state = r.state;
        lane = r.lane_pose;
        if r.done {
            return Ok(TrajectoryLog {
                dt: params.dt,
                records,
                done_reason: r.done_reason,
            });
        }
    }
}

/// Arithmetic median; mean of the middle two for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub map: String,
    pub done_reason: DoneReason,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub survival_time: f64,
    pub traveled_distance: f64,
    pub lateral_deviation: f64,
    pub major_infractions: f64,
    pub per_episode: Vec<EpisodeSummary>,
}

impl EvalSummary {
    pub fn from_episodes(per_episode: Vec<EpisodeSummary>) -> Self {
        let col = |f: fn(&MetricsReport) -> f64| median(&per_episode.iter().map(|e| f(&e.metrics)).collect::<Vec<_>>());
        EvalSummary {
            survival_time: col(|m| m.survival_time),
            traveled_distance: col(|m| m.traveled_distance),
            lateral_deviation: col(|m| m.lateral_deviation),
            major_infractions: col(|m| m.major_infractions),
            per_episode,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Fixed-width table with one row per episode and a median row.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} {:<22} {:>10} {:>10} {:>10} {:>10}",
            "seed", "map", "survival", "distance", "lateral", "infract"
        );
        for e in &self.per_episode {
            let m = &e.metrics;
            let _ = writeln!(
                s,
                "{:<8} {:<22} {:>10.2} {:>10.0} {:>10.3} {:>10.2}",
                e.seed, e.map, m.survival_time, m.traveled_distance, m.lateral_deviation, m.major_infractions
            );
        }
        let _ = writeln!(
            s,
            "{:<8} {:<22} {:>10.2} {:>10.1} {:>10.3} {:>10.2}",
            "median", "", self.survival_time, self.traveled_distance, self.lateral_deviation, self.major_infractions
        );
        s
    }
}

/// Runs one episode per seed and reports medians.
pub fn evaluate(
    policy: &mut dyn Policy,
    env: &mut Env,
    map: MapChoice,
    domain_rand: bool,
    seeds: &[u64],
) -> Result<EvalSummary, EvalError> {
    let mut logs = Vec::with_capacity(seeds.len());
    evaluate_with_logs(policy, env, map, domain_rand, seeds, &mut logs)
}

/// As [`evaluate`], also returning each episode's log.
pub fn evaluate_with_logs(
    policy: &mut dyn Policy,
    env: &mut Env,
    map: MapChoice,
    domain_rand: bool,
    seeds: &[u64],
    logs: &mut Vec<TrajectoryLog>,
) -> Result<EvalSummary, EvalError> {
    let mut per_episode = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let log = run_episode(policy, env, map, domain_rand, seed)?;
        let track = env.track()?.clone();
        let metrics = compute_metrics(&log, &track)?;
        per_episode.push(EpisodeSummary {
            seed,
            map: track.name().to_string(),
            done_reason: log.done_reason,
            metrics,
        });
        logs.push(log);
    }
    Ok(EvalSummary::from_episodes(per_episode))
}

/// Per-step `t,x,y,d,phi` rows.
pub fn write_trace(log: &TrajectoryLog, mut out: impl Write) -> Result<(), EvalError> {
    writeln!(out, "t,x,y,d,phi")?;
    for r in &log.records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.t, r.state.x, r.state.y, r.lane_pose.d, r.lane_pose.phi
        )?;
    }
    Ok(())
}

pub fn save_trace(log: &TrajectoryLog, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let f = std::fs::File::create(path)?;
    write_trace(log, std::io::BufWriter::new(f))
}
