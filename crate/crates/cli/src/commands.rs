use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use laneforge::config::RunConfig;
use laneforge::eval::{evaluate_with_logs, save_trace};
use laneforge::il::{
    collect_demonstrations, train_bc, train_dagger, train_gail, Dataset, IlError, ReplayBuffer,
};
use laneforge::nn::{load_into, load_weights, save_module, Discriminator, PolicyNet};
use laneforge::policy::{ConstantPolicy, ExpertPolicy, NetPolicy, Policy};
use laneforge::render::render;
use laneforge::sim::{load_map, Action, Env, MapChoice, RobotState, SimParams, TrackMap};
use serde::Serialize;
use serde_json::json;

use crate::{Cli, CliError, Command, GlobalArgs, Preset, Switch, TrainArgs};

/// Validated configuration plus the identity stamped on every artifact.
struct Run {
    cfg: RunConfig,
    hash: String,
    out_dir: PathBuf,
}

impl Run {
    fn from_args(g: &GlobalArgs) -> Result<Self, CliError> {
        let mut cfg = match g.preset {
            Preset::Desk => RunConfig::desk(),
            Preset::Full => RunConfig::full(),
        };
        if let Some(path) = &g.config {
            let src = fs::read_to_string(path)?;
            cfg = layer(&cfg, &src)?;
        }
        if let Some(seed) = g.seed {
            cfg.seed = seed;
        }
        if let Some(dr) = g.domain_rand {
            cfg.domain_rand.enabled = dr == Switch::On;
        }
        if let Some(cap) = thread_cap() {
            cfg.threads = cfg.threads.min(cap as i64);
        }
        cfg.validate()?;
        let hash = cfg.hash();
        Ok(Run {
            cfg,
            hash,
            out_dir: g.out_dir.clone(),
        })
    }

    fn stamp(&self) -> serde_json::Value {
        json!({ "config_hash": self.hash, "seed": self.cfg.seed })
    }

    fn out_path(&self, explicit: &Option<PathBuf>, default: &str) -> Result<PathBuf, CliError> {
        let path = explicit.clone().unwrap_or_else(|| self.out_dir.join(default));
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        Ok(path)
    }

    fn write_json(&self, path: &Path, body: &impl Serialize) -> Result<(), CliError> {
        let mut value = serde_json::to_value(body)?;
        if let serde_json::Value::Object(map) = &mut value {
            map.insert("config_hash".into(), self.hash.clone().into());
            map.insert("seed".into(), self.cfg.seed.into());
        }
        fs::write(path, serde_json::to_string_pretty(&value)? + "\n")?;
        Ok(())
    }

    fn save_weights<M: laneforge::nn::Parameterized<f32>>(
        &self,
        module: &M,
        path: &Path,
        kind: &str,
    ) -> Result<(), CliError> {
        save_module(module, path)?;
        let mut meta = self.stamp();
        meta["kind"] = kind.into();
        meta["net"] = serde_json::to_value(self.cfg.net)?;
        fs::write(sidecar(path), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    fn load_dataset(&self, data: &Option<PathBuf>) -> Result<Dataset, CliError> {
        let dir = data.clone().unwrap_or_else(|| self.out_dir.join("dataset"));
        let mut ds = Dataset::load(&dir)?;
        if ds.split().is_none() {
            ds.split_by_seed(self.cfg.split_seed())?;
        }
        Ok(ds)
    }

    fn policy_net(&self, init: &Option<PathBuf>) -> Result<PolicyNet<f32>, CliError> {
        let mut net = PolicyNet::new(self.cfg.net, self.cfg.init_seed());
        if let Some(path) = init {
            load_into(&mut net, load_weights(path)?)?;
        }
        Ok(net)
    }
}

/// Overlays a TOML file on a preset by merging tables key by key.
fn layer(base: &RunConfig, src: &str) -> Result<RunConfig, CliError> {
    let mut merged: toml::Table = toml::from_str(&base.to_toml())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let overlay: toml::Table =
        toml::from_str(src).map_err(|e| laneforge::config::ConfigError::Parse(e.to_string()))?;
    merge(&mut merged, overlay);
    Ok(RunConfig::from_toml(&toml::to_string(&merged).map_err(|e| CliError::Usage(e.to_string()))?)?)
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => merge(dst, src),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var("LANEFORGE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn map_names(paths: &[Arc<TrackMap>]) -> Vec<String> {
    paths.iter().map(|m| m.name().to_string()).collect()
}

pub(crate) fn run(cli: Cli) -> Result<(), CliError> {
    let run = Run::from_args(&cli.global)?;
    match cli.command {
        Command::Collect { episodes, steps, out } => collect(run, episodes, steps, out),
        Command::TrainBc(args) => train(run, Method::Bc, args),
        Command::TrainDagger(args) => train(run, Method::Dagger, args),
        Command::TrainGail(args) => train(run, Method::Gail, args),
        Command::Eval {
            policy,
            episodes,
            seeds,
            holdout,
            out,
            trace,
        } => eval(run, &policy, episodes, seeds, holdout, out, trace),
        Command::RenderPreview { map, pose, out } => render_preview(&map, &pose, &out),
    }
}

fn collect(
    mut run: Run,
    episodes: Option<i64>,
    steps: Option<i64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    if let Some(n) = episodes {
        run.cfg.collect.episodes = n;
    }
    if let Some(n) = steps {
        run.cfg.collect.steps_per_episode = n;
    }
    run.cfg.validate()?;
    run.hash = run.cfg.hash();
    let maps = run.cfg.load_maps()?;
    let mut ds = collect_demonstrations(
        &maps,
        &run.cfg.domain_rand,
        &run.cfg.expert,
        &run.cfg.collect_config(),
    )?;
    match ds.split_by_seed(run.cfg.split_seed()) {
        Ok(_) | Err(IlError::TooFewRecords { .. }) => {}
        Err(e) => return Err(e.into()),
    }
    ds.manifest.config_hash = Some(run.hash.clone());
    ds.manifest.seed = run.cfg.seed;
    let dir = out.unwrap_or_else(|| run.out_dir.join("dataset"));
    ds.save(&dir)?;
    eprintln!("collected {} records into {}", ds.len(), dir.display());
    Ok(())
}

#[derive(Clone, Copy)]
enum Method {
    Bc,
    Dagger,
    Gail,
}

fn train(run: Run, method: Method, args: TrainArgs) -> Result<(), CliError> {
    let mut ds = run.load_dataset(&args.data)?;
    let mut net = run.policy_net(&args.init)?;
    let (name, report) = match method {
        Method::Bc => {
            let report = train_bc(&ds, &mut net, &run.cfg.bc_config())?;
            eprintln!(
                "bc: {} epochs, best val loss {:.5} at epoch {}",
                report.epochs_run, report.best_val_loss, report.best_epoch
            );
            ("bc", serde_json::to_value(report)?)
        }
        Method::Dagger => {
            let maps = run.cfg.load_maps()?;
            let report = train_dagger(
                &maps,
                &run.cfg.domain_rand,
                &run.cfg.expert,
                &mut net,
                &mut ds,
                &run.cfg.dagger_config(),
                &run.cfg.bc_config(),
            )?;
            eprintln!("dagger: dataset sizes {:?}", report.dataset_sizes);
            ("dagger", serde_json::to_value(report)?)
        }
        Method::Gail => {
            let maps = run.cfg.load_maps()?;
            if args.init.is_none() {
                train_bc(&ds, &mut net, &run.cfg.bc_config())?;
            }
            let gail = run.cfg.gail_config();
            let mut disc = Discriminator::new(run.cfg.net, run.cfg.init_seed() ^ 0xD15C);
            let mut buffer = ReplayBuffer::new(gail.buffer_capacity);
            let report = train_gail(
                &maps,
                &run.cfg.domain_rand,
                &ds,
                &mut net,
                &mut disc,
                &mut buffer,
                &gail,
            )?;
            let disc_path = run.out_path(&None, "gail_disc.lfw")?;
            run.save_weights(&disc, &disc_path, "discriminator")?;
            eprintln!("gail: {} epochs", report.epochs_run);
            ("gail", serde_json::to_value(report)?)
        }
    };
    let weights = run.out_path(&args.out, &format!("{name}.lfw"))?;
    run.save_weights(&net, &weights, "policy")?;
    let report_path = weights.with_extension("report.json");
    run.write_json(&report_path, &report)?;
    eprintln!("wrote {} and {}", weights.display(), report_path.display());
    Ok(())
}

fn parse_constant(args: &str) -> Result<Action, CliError> {
    let bad = || CliError::Usage(format!("policy `constant:{args}` needs THROTTLE,STEERING"));
    let (a, b) = args.split_once(',').ok_or_else(bad)?;
    let throttle = a.trim().parse::<f64>().map_err(|_| bad())?;
    let steering = b.trim().parse::<f64>().map_err(|_| bad())?;
    Ok(Action::new(throttle, steering))
}

#[allow(clippy::too_many_arguments)]
fn eval(
    mut run: Run,
    policy: &str,
    episodes: Option<i64>,
    seeds: Option<Vec<u64>>,
    holdout: bool,
    out: Option<PathBuf>,
    trace: Option<PathBuf>,
) -> Result<(), CliError> {
    match (episodes, seeds) {
        (_, Some(s)) => {
            run.cfg.eval.episodes = s.len() as i64;
            run.cfg.eval.seeds = s;
        }
        (Some(n), None) => {
            run.cfg.eval.episodes = n;
            run.cfg.eval.seeds = (1..=n.max(0) as u64).collect();
        }
        (None, None) => {}
    }
    run.cfg.eval.holdout |= holdout;
    run.cfg.validate()?;
    run.hash = run.cfg.hash();

    let maps = if run.cfg.eval.holdout {
        run.cfg.load_holdout_maps()?
    } else {
        run.cfg.load_maps()?
    };
    let map_names = map_names(&maps);
    let mut env = Env::new(maps, run.cfg.sim.episode_steps as usize, run.cfg.domain_rand);
    let net;
    let mut expert;
    let mut constant;
    let mut learner;
    let actor: &mut dyn Policy = if policy == "expert" {
        expert = ExpertPolicy::new(run.cfg.expert);
        &mut expert
    } else if let Some(args) = policy.strip_prefix("constant:") {
        constant = ConstantPolicy(parse_constant(args)?);
        &mut constant
    } else {
        net = run.policy_net(&Some(PathBuf::from(policy)))?;
        learner = NetPolicy { net: &net };
        &mut learner
    };
    let mut logs = Vec::new();
    let summary = evaluate_with_logs(
        actor,
        &mut env,
        MapChoice::Random,
        run.cfg.domain_rand.enabled,
        &run.cfg.eval.seeds,
        &mut logs,
    )?;
    if let Some(dir) = &trace {
        fs::create_dir_all(dir)?;
        for (ep, log) in summary.per_episode.iter().zip(&logs) {
            save_trace(log, dir.join(format!("episode_{}.csv", ep.seed)))?;
        }
    }
    let path = run.out_path(&out, "eval.json")?;
    let body = json!({ "policy": policy, "maps": map_names, "summary": summary });
    run.write_json(&path, &body)?;
    println!("{}", summary.to_text());
    Ok(())
}

fn render_preview(map: &str, pose: &str, out: &Path) -> Result<(), CliError> {
    let parts: Vec<f64> = pose
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("pose `{pose}` must be x,y,theta")))?;
    let [x, y, heading] = parts[..] else {
        return Err(CliError::Usage(format!("pose `{pose}` must be x,y,theta")));
    };
    let track = load_map(map)?;
    let state = RobotState {
        x,
        y,
        heading,
        ..RobotState::default()
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    render(&state, &track, &SimParams::nominal()).save_ppm(out)?;
    Ok(())
}
