use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use gagail::adversarial::{DemoStore, GoalLabelSet};
use gagail::config::ExperimentConfig;
use gagail::mdp::read_trajectories;
use gagail::trainer::{write_csv, Event, RunOutcome, Trainer};

fn small(overrides: &[&str]) -> Trainer {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/twice_reach_gagail.toml");
    let mut o: Vec<String> = ["iterations=3", "rollout.episodes=2", "rollout.steps=64", "discriminator.pretrain_steps=50"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    o.extend(overrides.iter().map(|s| s.to_string()));
    let cfg = ExperimentConfig::load(&path, &o).unwrap();
    let demos = DemoStore::new(read_trajectories(BufReader::new(File::open(&cfg.data.demos).unwrap())).unwrap());
    let goals = match (&cfg.data.goals, cfg.needs_goals()) {
        (Some(p), true) => GoalLabelSet::read_json(File::open(p).unwrap(), &demos).unwrap(),
        _ => GoalLabelSet::empty(),
    };
    Trainer::new(cfg, demos, goals).unwrap()
}

fn csv(out: &RunOutcome) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, &out.rows).unwrap();
    String::from_utf8(buf).unwrap()
}

fn phase(e: &Event) -> Option<(usize, &'static str)> {
    Some(match e {
        Event::Rollouts { iteration, .. } => (*iteration, "rollouts"),
        Event::DiscriminatorUpdate { iteration, .. } => (*iteration, "discriminator"),
        Event::RewardFill { iteration, .. } => (*iteration, "reward"),
        Event::GeneratorUpdate { iteration, .. } => (*iteration, "generator"),
        Event::TargetSync { iteration } => (*iteration, "sync"),
        Event::Evaluation { iteration, .. } => (*iteration, "evaluation"),
        _ => return None,
    })
}

#[test]
fn each_iteration_runs_the_phases_in_order() {
    let mut t = small(&[]);
    let out = t.run().unwrap();
    assert!(out.aborted.is_none());
    let phases: Vec<_> = t.events.iter().filter_map(phase).collect();
    let expected = ["rollouts", "discriminator", "reward", "generator", "sync", "evaluation"];
    assert_eq!(phases.len(), 3 * expected.len());
    for (k, (iteration, name)) in phases.iter().enumerate() {
        assert_eq!(*iteration, k / expected.len());
        assert_eq!(*name, expected[k % expected.len()]);
    }
}

#[test]
fn samples_advance_by_one_rollout_budget_per_iteration() {
    let mut t = small(&[]);
    let out = t.run().unwrap();
    let samples: Vec<usize> = out.rows.iter().map(|r| r.samples).collect();
    assert_eq!(samples, vec![128, 256, 384]);
    assert_eq!(t.memory().len(), 128);
    assert!(t.memory().iter().all(|tr| tr.reward.is_some()));
    let iterations: Vec<usize> = out.rows.iter().map(|r| r.iteration).collect();
    assert_eq!(iterations, vec![0, 1, 2]);
}

#[test]
fn goal_aware_without_goal_discriminator_is_plain_gail() {
    let a = small(&["variant=no_goal"]).run().unwrap();
    let b = small(&["method=gail_edpn"]).run().unwrap();
    assert_eq!(csv(&a), csv(&b));
    assert!(a.rows.iter().all(|r| r.loss_goal_disc.is_none() && r.loss_demo_disc.is_some()));
}

#[test]
fn reruns_are_identical_and_seeds_differ() {
    let a = csv(&small(&[]).run().unwrap());
    assert_eq!(a, csv(&small(&[]).run().unwrap()));
    assert_ne!(a, csv(&small(&["seed=7"]).run().unwrap()));
}

#[test]
fn fixed_goal_pretrains_once_before_the_loop() {
    let mut t = small(&["variant=fixed_goal"]);
    assert!(matches!(t.events.first(), Some(Event::GoalPretrain { steps: 50, .. })));
    let frozen = t.discriminators().unwrap().goal.as_ref().unwrap().params.fingerprint();
    let out = t.run().unwrap();
    assert_eq!(t.events.iter().filter(|e| matches!(e, Event::GoalPretrain { .. })).count(), 1);
    // Its loss is still reported, but its parameters never move.
    assert!(out.rows.iter().all(|r| r.loss_goal_disc.is_some()));
    assert_eq!(t.discriminators().unwrap().goal.as_ref().unwrap().params.fingerprint(), frozen);
}

#[test]
fn no_demo_variant_trains_only_the_goal_discriminator() {
    let out = small(&["variant=no_demo"]).run().unwrap();
    assert!(out.rows.iter().all(|r| r.loss_demo_disc.is_none() && r.loss_goal_disc.is_some()));
}

#[test]
fn behavior_cloning_has_no_discriminators() {
    let mut t = small(&["method=bc"]);
    assert!(t.discriminators().is_none());
    let out = t.run().unwrap();
    assert!(t.events.iter().any(|e| matches!(e, Event::BcUpdate { .. })));
    assert!(!t.events.iter().any(|e| matches!(e, Event::Rollouts { .. })));
    assert!(out.rows.iter().all(|r| r.loss_demo_disc.is_none() && r.loss_generator.is_some()));
    assert_eq!(out.rows.last().unwrap().samples, 384);
}

#[test]
fn dqn_generator_runs_the_same_loop() {
    let out = small(&["method=gagail_dqn"]).run().unwrap();
    assert_eq!(out.rows.len(), 3);
    assert!(out.rows.iter().all(|r| r.scaled_perf.is_finite()));
}

#[test]
fn huge_learning_rate_aborts_with_kept_rows() {
    let mut t = small(&["optimizer.generator.learning_rate=1e300"]);
    let out = t.run().unwrap();
    assert!(out.aborted.is_some());
    assert!(out.rows.len() < 3);
    assert!(matches!(t.events.last(), Some(Event::Abort { .. })));
}
