use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn laneforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laneforge"))
        .current_dir(dir)
        .env_remove("LANEFORGE_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const TOY: &str = "[bc]\nmax_epochs = 2\npatience = 2\n\n[eval]\nepisodes = 2\nseeds = [3, 4]\n";

#[test]
fn collect_writes_flag_sized_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = laneforge(
        tmp.path(),
        &["collect", "--episodes", "2", "--steps", "16", "--seed", "1", "--out-dir", "run"],
    );
    ok(&out);
    let manifest = json(&tmp.path().join("run/dataset/manifest.json"));
    assert_eq!(manifest["record_count"], 32);
    assert_eq!(manifest["episodes"], 2);
    assert_eq!(manifest["steps_per_episode"], 16);
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["domain_rand"], false);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    let obs = fs::metadata(tmp.path().join("run/dataset/obs.f32")).unwrap().len();
    assert_eq!(obs, 32 * 60 * 80 * 3 * 4);
    let act = fs::metadata(tmp.path().join("run/dataset/act.f32")).unwrap().len();
    assert_eq!(act, 32 * 2 * 4);
}

#[test]
fn domain_rand_flag_reaches_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&laneforge(
        tmp.path(),
        &["collect", "--episodes", "1", "--steps", "4", "--domain-rand", "on"],
    ));
    assert_eq!(json(&tmp.path().join("runs/dataset/manifest.json"))["domain_rand"], true);
}

#[test]
fn negative_patience_exits_one_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[bc]\npatience = -1\n").unwrap();
    let out = laneforge(tmp.path(), &["--config", "bad.toml", "collect"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("patience"), "{stderr}");
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn unknown_config_key_and_bad_flags_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("typo.toml"), "[gail]\nepoch = 3\n").unwrap();
    assert_eq!(laneforge(tmp.path(), &["--config", "typo.toml", "collect"]).status.code(), Some(1));
    assert_eq!(laneforge(tmp.path(), &["collect", "--domain-rand", "maybe"]).status.code(), Some(1));
    assert_eq!(
        laneforge(tmp.path(), &["render-preview", "--map", "zigzag", "--pose", "1,2", "--out", "x.ppm"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn runtime_failures_exit_two_with_module_error_name() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("junk.lfw"), b"not weights").unwrap();
    let out = laneforge(tmp.path(), &["eval", "--policy", "junk.lfw", "--episodes", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NnError"));

    let out = laneforge(tmp.path(), &["train-bc"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("IlError"));
}

#[test]
fn render_preview_writes_binary_ppm() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&laneforge(
        tmp.path(),
        &["render-preview", "--map", "small_loop", "--pose", "0.9,0.3,-0.1", "--out", "view.ppm"],
    ));
    let bytes = fs::read(tmp.path().join("view.ppm")).unwrap();
    let header = b"P6\n640 480\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 640 * 480 * 3);
}

#[test]
fn eval_constant_policy_reports_off_road() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&laneforge(
        tmp.path(),
        &["eval", "--policy", "constant:0.8,0", "--seeds", "1,2,3", "--out", "c.json"],
    ));
    let v = json(&tmp.path().join("c.json"));
    let episodes = v["summary"]["per_episode"].as_array().unwrap();
    assert_eq!(episodes.len(), 3);
    for ep in episodes {
        assert_eq!(ep["done_reason"], "OffRoad");
    }
    assert!(v["summary"]["survival_time"].as_f64().unwrap() < 15.0);
}

#[test]
fn toy_pipeline_end_to_end_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("toy.toml"), TOY).unwrap();
    let run = |dir: &str| {
        let base = ["--config", "toy.toml", "--seed", "5", "--out-dir", dir];
        ok(&laneforge(tmp.path(), &[&base[..], &["collect", "--episodes", "2", "--steps", "24"]].concat()));
        ok(&laneforge(tmp.path(), &[&base[..], &["train-bc"]].concat()));
        let weights = format!("{dir}/bc.lfw");
        ok(&laneforge(tmp.path(), &[&base[..], &["eval", "--policy", &weights]].concat()));
    };
    run("a");
    run("b");

    let a = tmp.path().join("a");
    for artifact in ["dataset/manifest.json", "dataset/obs.f32", "dataset/act.f32", "bc.lfw", "bc.report.json"] {
        assert!(a.join(artifact).exists(), "{artifact} missing");
        assert_eq!(
            fs::read(a.join(artifact)).unwrap(),
            fs::read(tmp.path().join("b").join(artifact)).unwrap(),
            "{artifact} differs between identical runs"
        );
    }

    let report = json(&a.join("bc.report.json"));
    let sidecar = json(&a.join("bc.lfw.json"));
    let eval = json(&a.join("eval.json"));
    for v in [&report, &sidecar, &eval] {
        assert_eq!(v["seed"], 5);
        assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    }
    assert_eq!(report["epochs_run"], 2);
    assert_eq!(eval["policy"], "a/bc.lfw");
    assert_eq!(eval["summary"], json(&tmp.path().join("b/eval.json"))["summary"]);
    let episodes = eval["summary"]["per_episode"].as_array().unwrap();
    assert_eq!(episodes.iter().map(|e| e["seed"].as_u64().unwrap()).collect::<Vec<_>>(), [3, 4]);
}
