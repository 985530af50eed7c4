use std::sync::Arc;

use laneforge::expert::{expert_action, ExpertState, PurePursuitConfig};
use laneforge::sim::{action_to_pwm, bundled, DoneReason, DomainRandomization, Env, MapChoice};

fn drive(map: &str, seed: u64, dr: bool) -> (DoneReason, usize, usize, f64) {
    let track = Arc::new(bundled(map).unwrap());
    let mut env = Env::new(vec![track.clone()], 450, DomainRandomization::default());
    let (mut state, _) = env.reset(MapChoice::Fixed(0), dr, seed).unwrap();
    let cfg = PurePursuitConfig::default();
    let mut mem = ExpertState::default();
    let (mut in_lane, mut steps, mut max_d) = (0, 0, 0.0f64);
    loop {
        let (a, m) = expert_action(&state, &track, &cfg, mem).unwrap();
        mem = m;
        let r = env.step(action_to_pwm(a)).unwrap();
        steps += 1;
        if r.lane_pose.in_right_lane {
            in_lane += 1;
        }
        max_d = max_d.max(r.lane_pose.d.abs());
        state = r.state;
        if r.done {
            return (r.done_reason, steps, in_lane, max_d);
        }
    }
}

#[test]
fn expert_completes_every_bundled_map() {
    for map in laneforge::sim::track::bundled_names() {
        for dr in [false, true] {
            let (mut worst, mut lane_steps, mut total) = (0.0f64, 0, 0);
            for seed in 0..100 {
                let (reason, steps, in_lane, max_d) = drive(map, seed, dr);
                assert_eq!(reason, DoneReason::TimeLimit, "{map} seed {seed} dr {dr}");
                lane_steps += in_lane;
                total += steps;
                worst = worst.max(max_d);
            }
            let frac = lane_steps as f64 / total as f64;
            eprintln!("{map} dr={dr}: in-lane {frac:.4}, worst |d| {worst:.4}");
            assert!(frac >= 0.99);
        }
    }
}
