use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use followahead::config::Config;
use followahead::rl::checkpoint::Checkpoint;
use followahead::rl::trainer::{evaluate_policy, train, TrainConfig, TrainSetup};

fn small() -> (TrainConfig, TrainSetup) {
    let mut cfg = Config::from_toml(include_str!("../config/desk.toml")).unwrap();
    cfg.train.total_steps = 1_500;
    cfg.train.warmup = 300;
    cfg.train.log_every = 500;
    let setup = TrainSetup {
        episode: cfg.episode,
        planner: cfg.planner,
        library: Arc::new(cfg.library().unwrap()),
        seed: 21,
    };
    (cfg.train, setup)
}

#[test]
fn deterministic_training_is_reproducible() {
    let (cfg, setup) = small();
    let (a, ra) = train(&cfg, &setup).unwrap();
    let (b, rb) = train(&cfg, &setup).unwrap();
    assert_eq!(a.actor.params(), b.actor.params());
    assert_eq!(a.critic.params(), b.critic.params());
    assert_eq!(ra.curve, rb.curve);
    assert_eq!(ra.episodes, rb.episodes);
    assert_eq!(ra.steps, 1_500);

    let (c, _) = train(&cfg, &TrainSetup { seed: 22, ..setup }).unwrap();
    assert_ne!(a.actor.params(), c.actor.params());
}

#[test]
fn checkpoints_restore_the_same_policy() {
    let (cfg, setup) = small();
    let (agent, report) = train(&cfg, &setup).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    let ck = Checkpoint::from_agent(&agent, cfg.mode, report.steps, report.level, ChaCha8Rng::seed_from_u64(3));
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.step, report.steps);
    assert_eq!(back.mode, cfg.mode);

    // saving the loaded checkpoint gives the same bytes
    let again = dir.path().join("q.ckpt");
    back.clone().save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());

    let eval = TrainSetup { seed: 5, ..setup };
    let before = evaluate_policy(&agent.actor, cfg.mode, 1, 3, &eval).unwrap();
    let restored = back.into_agent(cfg.agent.clone());
    let after = evaluate_policy(&restored.actor, cfg.mode, 1, 3, &eval).unwrap();
    assert_eq!(before, after);
}
