//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 1-5 check the soft operator, teaching signals, gradients and
//! reward arithmetic against independent implementations written here.
//! Criteria 6-9 train the shipped experiment configs over five seeds and
//! compare final scaled performance; criterion 10 re-runs experiments and
//! compares the metrics CSV byte for byte.
//!
//! The process exits non-zero when an oracle criterion (1-5, 10) fails.
//! The learning-curve orderings (6-9) are reported either way and only fail
//! the process when `GAGAIL_ACCEPTANCE_STRICT=1`. Set
//! `GAGAIL_ACCEPTANCE_SKIP_LEARNING=1` to skip them entirely.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use gagail::adversarial::{reward_from_outputs, DemoStore, GoalLabelSet};
use gagail::config::ExperimentConfig;
use gagail::demos::goal_reach_fraction;
use gagail::mdp::{read_trajectories, ActionId, Observation, Transition};
use gagail::nn::{
    grad_check, ClampedBinaryCrossEntropy, Mlp, MlpSpec, OutputActivation, SelectedSquaredError,
    SoftmaxCrossEntropy, SquaredError,
};
use gagail::rng::{rng_from, Rng};
use gagail::soft::{
    dpp_operator, edpn_target, policy_of, PreferenceFunction, SoftPolicyParams, TabularMdp, TabularPreferences,
};
use gagail::trainer::{write_csv, MetricsRow, Trainer};
use rand::Rng as _;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn lse(xs: &[f64], k: f64) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (k * (x - m)).exp()).sum::<f64>().ln() / k
}

fn random_mdp(rng: &mut Rng, gamma: f64) -> TabularMdp {
    let n = rng.gen_range(2..=10);
    let a = rng.gen_range(2..=4);
    let mut t = vec![vec![vec![0.0; n]; a]; n];
    let mut r = vec![vec![vec![0.0; n]; a]; n];
    for s in 0..n {
        for act in 0..a {
            let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let z: f64 = w.iter().sum();
            t[s][act] = w.iter().map(|x| x / z).collect();
            r[s][act] = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        }
    }
    TabularMdp::new(t, r, gamma).expect("random MDP is well formed")
}

/// Optimal action values by plain value iteration.
fn value_iteration(mdp: &TabularMdp) -> Vec<Vec<f64>> {
    let mut v = vec![0.0; mdp.state_count];
    loop {
        let q: Vec<Vec<f64>> = (0..mdp.state_count)
            .map(|s| {
                (0..mdp.action_count)
                    .map(|a| {
                        (0..mdp.state_count)
                            .map(|s2| mdp.transitions[s][a][s2] * (mdp.rewards[s][a][s2] + mdp.gamma * v[s2]))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let next: Vec<f64> = q.iter().map(|row: &Vec<f64>| row.iter().cloned().fold(f64::MIN, f64::max)).collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < 1e-14 {
            return q;
        }
    }
}

fn criterion_1() -> Outcome {
    let params = SoftPolicyParams::new(10.0, 0.0, 0.9).unwrap();
    let mut rng = rng_from(1, &[]);
    let mut mismatches = 0;
    let mut checked = 0;
    let mut worst_delta = 0.0_f64;
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, params.gamma);
        let q = value_iteration(&mdp);
        let mut prefs = PreferenceFunction::Tabular(TabularPreferences::zeros(mdp.state_count, mdp.action_count));
        let values = |p: &PreferenceFunction| -> Vec<f64> {
            let PreferenceFunction::Tabular(t) = p else { unreachable!() };
            t.table.iter().map(|row| lse(row, params.eta)).collect()
        };
        let mut last = values(&prefs);
        let mut delta = f64::INFINITY;
        for _ in 0..500 {
            prefs = dpp_operator(&prefs, &mdp, &params).unwrap();
            let v = values(&prefs);
            delta = v.iter().zip(&last).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            last = v;
        }
        worst_delta = worst_delta.max(delta);
        let PreferenceFunction::Tabular(table) = &prefs else { unreachable!() };
        for s in 0..mdp.state_count {
            let mut sorted = q[s].clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            if sorted[0] - sorted[1] <= 0.01 {
                continue;
            }
            checked += 1;
            let best_vi = (0..mdp.action_count).max_by(|&a, &b| q[s][a].total_cmp(&q[s][b])).unwrap();
            let row = table.row(s);
            let best = (0..mdp.action_count).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            if best != best_vi {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0 && worst_delta < 1e-8,
        format!("{mismatches} greedy mismatches over {checked} states; final sweep delta {worst_delta:.2e}"),
    )
}

fn state(s: usize) -> Observation {
    Observation::new(vec![s as f64]).unwrap()
}

fn criterion_2() -> Outcome {
    let mut rng = rng_from(2, &[]);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=10);
        let a = rng.gen_range(2..=6);
        let scale = rng.gen_range(0.1..10.0);
        let table: Vec<Vec<f64>> = (0..n).map(|_| (0..a).map(|_| rng.gen_range(-scale..scale)).collect()).collect();
        let eta = rng.gen_range(0.01..20.0);
        let gamma = rng.gen_range(0.01..0.999);
        let params = SoftPolicyParams::new(eta, 0.0, gamma).unwrap();
        let (s, act, s2) = (rng.gen_range(0..n), rng.gen_range(0..a), rng.gen_range(0..n));
        let r = rng.gen_range(-5.0..5.0);
        let mut t = Transition::new(state(s), ActionId::raw(act), state(s2), 0.0);
        t.reward = Some(r);
        let prefs = PreferenceFunction::Tabular(TabularPreferences {
            action_count: a,
            table: table.clone(),
        });
        let y = edpn_target(&prefs, &t, &params).unwrap();
        let dpn = table[s][act] - lse(&table[s], eta) + r + gamma * lse(&table[s2], eta);
        worst = worst.max((y - dpn).abs() / dpn.abs());
    }
    outcome(worst <= 1e-12, format!("max relative error {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut rng = rng_from(3, &[]);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let a = rng.gen_range(2..=8);
        let prefs: Vec<f64> = (0..a).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let eta = rng.gen_range(0.01..10.0);
        let sigma = rng.gen_range(0.0..5.0);
        let regularized = policy_of(&prefs, &SoftPolicyParams::new(eta, sigma, 0.9).unwrap());
        let k = eta / (1.0 + sigma * eta);
        let plain = policy_of(&prefs, &SoftPolicyParams::new(k, 0.0, 0.9).unwrap());
        let z = lse(&prefs, k);
        let softmax: Vec<f64> = prefs.iter().map(|p| (k * (p - z)).exp()).collect();
        for ((x, y), o) in regularized.iter().zip(&plain).zip(&softmax) {
            worst = worst.max((x - y).abs()).max((x - o).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max probability difference {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = rng_from(4, &[]);
    let batch = 16;
    let inputs = |dim: usize, rng: &mut Rng| -> Vec<Vec<f64>> {
        (0..batch).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    };
    let mut worst = 0.0_f64;
    let mut failed = Vec::new();
    let mut record = |name: &str, err: f64, passed: bool| {
        worst = worst.max(err);
        if !passed {
            failed.push(name.to_string());
        }
    };

    // Generator: linear outputs, regression on the taken action.
    let net = Mlp::new(MlpSpec::with_hidden(6, &[32, 32], 4, OutputActivation::Identity).unwrap(), &mut rng);
    let x = inputs(6, &mut rng);
    let actions: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..4)).collect();
    let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let rep = grad_check(&net, &x, SelectedSquaredError { actions: &actions, targets: &targets }, 1e-4).unwrap();
    record("generator/selected squared error", rep.max_rel_error, rep.passed);

    // Discriminators: sigmoid output, two-sided cross-entropy.
    for (name, dim) in [("demo discriminator", 8), ("goal discriminator", 6)] {
        let net = Mlp::new(MlpSpec::with_hidden(dim, &[32, 32], 1, OutputActivation::Sigmoid).unwrap(), &mut rng);
        let x = inputs(dim, &mut rng);
        let labels: Vec<bool> = (0..batch).map(|i| i % 3 == 0).collect();
        let rep = grad_check(&net, &x, ClampedBinaryCrossEntropy { labels: &labels, eps: 1e-6 }, 1e-4).unwrap();
        record(name, rep.max_rel_error, rep.passed);
    }

    // Behavior cloning: logits with softmax cross-entropy.
    let net = Mlp::new(MlpSpec::with_hidden(6, &[32, 32], 4, OutputActivation::Identity).unwrap(), &mut rng);
    let x = inputs(6, &mut rng);
    let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..4)).collect();
    let rep = grad_check(&net, &x, SoftmaxCrossEntropy { labels: &labels }, 1e-4).unwrap();
    record("behavior cloning/softmax cross-entropy", rep.max_rel_error, rep.passed);

    // Dense squared error on every output.
    let net = Mlp::new(MlpSpec::with_hidden(5, &[16], 3, OutputActivation::Identity).unwrap(), &mut rng);
    let x = inputs(5, &mut rng);
    let t: Vec<Vec<f64>> = (0..batch).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let rep = grad_check(&net, &x, SquaredError { targets: &t }, 1e-4).unwrap();
    record("squared error", rep.max_rel_error, rep.passed);

    let detail = if failed.is_empty() {
        format!("5 pairings, max relative error {worst:.2e}")
    } else {
        format!("failed: {}; max relative error {worst:.2e}", failed.join(", "))
    };
    outcome(failed.is_empty(), detail)
}

fn criterion_5() -> Outcome {
    let eps = 1e-6;
    let center = reward_from_outputs(Some(0.5), Some(0.5), eps);
    let exact = center == 2.0 * std::f64::consts::LN_2;
    let bound = 2.0 * -(eps.ln());
    let mut rng = rng_from(5, &[]);
    let spec = MlpSpec::with_hidden(4, &[8], 1, OutputActivation::Sigmoid).unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut negative = false;
    for _ in 0..10_000 {
        // Random parameters at a random scale so that many draws saturate.
        let scale = 10f64.powf(rng.gen_range(-1.0..3.0));
        let mut nets = [Mlp::new(spec.clone(), &mut rng), Mlp::new(spec.clone(), &mut rng)];
        for net in &mut nets {
            for p in net.params.values_mut() {
                *p *= scale;
            }
        }
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dd = nets[0].forward_one(&x).unwrap()[0];
        let dg = nets[1].forward_one(&x).unwrap()[0];
        let r = reward_from_outputs(Some(dd), Some(dg), eps);
        worst = worst.max(r);
        negative |= r < 0.0;
    }
    outcome(
        exact && worst <= bound && !negative,
        format!("r(0.5, 0.5) = {center} (exact: {exact}); max over draws {worst:.4} <= {bound:.4}"),
    )
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn load(config: &str, overrides: &[String]) -> (ExperimentConfig, DemoStore, GoalLabelSet) {
    let cfg = ExperimentConfig::load(&repo_path(config), overrides).expect("shipped config loads");
    let file = File::open(&cfg.data.demos).expect("shipped demonstrations exist");
    let demos = DemoStore::new(read_trajectories(BufReader::new(file)).unwrap());
    let goals = match (&cfg.data.goals, cfg.needs_goals()) {
        (Some(path), true) => GoalLabelSet::read_json(File::open(path).unwrap(), &demos).unwrap(),
        _ => GoalLabelSet::empty(),
    };
    (cfg, demos, goals)
}

struct Run {
    finals: f64,
    csv: Vec<u8>,
}

fn train(config: &str, overrides: &[String]) -> Run {
    let (cfg, demos, goals) = load(config, overrides);
    let mut trainer = Trainer::new(cfg, demos, goals).unwrap();
    let out = trainer.run().unwrap();
    let rows: &[MetricsRow] = &out.rows;
    let mut csv = Vec::new();
    write_csv(&mut csv, rows).unwrap();
    let finals = match &out.aborted {
        Some(_) => f64::NAN,
        None => rows.last().map_or(f64::NAN, |r| r.scaled_perf),
    };
    Run { finals, csv }
}

struct Bench {
    name: &'static str,
    config: &'static str,
    data: &'static str,
}

const TWICE_REACH: Bench = Bench {
    name: "twice_reach",
    config: "configs/twice_reach_gagail.toml",
    data: "../data/twice_reach",
};
const PICK_PLACE: Bench = Bench {
    name: "pick_place",
    config: "configs/pick_place_gagail.toml",
    data: "../data/pick_place",
};

/// Final scaled performance per (benchmark, arm), one entry per seed.
#[derive(Default)]
struct Grid {
    finals: BTreeMap<(String, String), Vec<f64>>,
    csv_seed0: BTreeMap<(String, String), Vec<u8>>,
}

impl Grid {
    fn run(&mut self, bench: &Bench, arm: &str, set: &[String]) {
        let start = Instant::now();
        let mut finals = Vec::new();
        for seed in SEEDS {
            let mut o = set.to_vec();
            o.push(format!("seed={seed}"));
            let run = train(bench.config, &o);
            finals.push(run.finals);
            if seed == SEEDS[0] {
                self.csv_seed0.insert((bench.name.into(), arm.into()), run.csv);
            }
        }
        println!(
            "    {:<12} {:<18} {}  ({:.0} s)",
            bench.name,
            arm,
            finals.iter().map(|v| format!("{v:7.3}")).collect::<Vec<_>>().join(" "),
            start.elapsed().as_secs_f64()
        );
        self.finals.insert((bench.name.into(), arm.into()), finals);
    }

    fn get(&self, bench: &Bench, arm: &str) -> &[f64] {
        &self.finals[&(bench.name.to_string(), arm.to_string())]
    }

    fn mean(&self, bench: &Bench, arm: &str) -> f64 {
        let v = self.get(bench, arm);
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn std(&self, bench: &Bench, arm: &str) -> f64 {
        let v = self.get(bench, arm);
        let m = self.mean(bench, arm);
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    }
}

fn learning_runs() -> Grid {
    let mut grid = Grid::default();
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    for bench in [&TWICE_REACH, &PICK_PLACE] {
        let last_of_best = format!("data.goals={}/goals_last_of_best.json", bench.data);
        grid.run(bench, "full", &[]);
        grid.run(bench, "no_demo", &set(&["variant=no_demo"]));
        grid.run(bench, "fixed_goal", &set(&["variant=fixed_goal"]));
        grid.run(bench, "last_of_best", &[last_of_best]);
    }
    grid.run(&TWICE_REACH, "gail_edpn", &set(&["method=gail_edpn"]));
    grid.run(&TWICE_REACH, "gagail_dqn", &set(&["method=gagail_dqn"]));
    grid
}

fn criterion_6(grid: &Grid) -> Outcome {
    let (cfg, demos, _) = load(TWICE_REACH.config, &[]);
    let reach = goal_reach_fraction(&demos, &cfg.env);
    let full = grid.get(&TWICE_REACH, "full");
    let above = full.iter().filter(|&&v| v > 1.0).count();
    let (m_full, m_gail) = (grid.mean(&TWICE_REACH, "full"), grid.mean(&TWICE_REACH, "gail_edpn"));
    outcome(
        reach > 0.0 && reach < 1.0 && above >= 3 && m_full > m_gail,
        format!("demo reach {reach:.2}; {above}/5 seeds above 1.0; mean {m_full:.3} vs GAIL {m_gail:.3}"),
    )
}

fn criterion_7(grid: &Grid) -> Outcome {
    let mut parts = Vec::new();
    let mut no_demo_ok = true;
    let mut fixed_ok = false;
    for bench in [&TWICE_REACH, &PICK_PLACE] {
        let full = grid.mean(bench, "full");
        let nd = grid.mean(bench, "no_demo");
        let fg = grid.mean(bench, "fixed_goal");
        no_demo_ok &= full > nd;
        fixed_ok |= full > fg;
        parts.push(format!("{}: full {full:.3}, no_demo {nd:.3}, fixed_goal {fg:.3}", bench.name));
    }
    outcome(no_demo_ok && fixed_ok, parts.join("; "))
}

fn criterion_8(grid: &Grid) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for bench in [&TWICE_REACH, &PICK_PLACE] {
        let all = grid.std(bench, "full");
        let lob = grid.std(bench, "last_of_best");
        ok &= all <= lob;
        parts.push(format!("{}: std all_goals {all:.3}, last_of_best {lob:.3}", bench.name));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_9(grid: &Grid) -> Outcome {
    let edpn = grid.mean(&TWICE_REACH, "full");
    let dqn = grid.mean(&TWICE_REACH, "gagail_dqn");
    outcome(edpn >= dqn, format!("mean EDPN {edpn:.3} vs DQN {dqn:.3}"))
}

fn criterion_10(grid: Option<&Grid>) -> Outcome {
    let mut checked = 0;
    let mut differ = Vec::new();
    match grid {
        Some(grid) => {
            for bench in [&TWICE_REACH, &PICK_PLACE] {
                let again = train(bench.config, &["seed=0".into()]);
                checked += 1;
                if again.csv != grid.csv_seed0[&(bench.name.to_string(), "full".to_string())] {
                    differ.push(bench.name);
                }
            }
        }
        None => {
            let short = ["iterations=3".to_string(), "rollout.episodes=2".into(), "rollout.steps=100".into()];
            for bench in [&TWICE_REACH, &PICK_PLACE] {
                let a = train(bench.config, &short);
                let b = train(bench.config, &short);
                checked += 1;
                if a.csv != b.csv {
                    differ.push(bench.name);
                }
            }
        }
    }
    outcome(
        differ.is_empty(),
        format!("{checked} re-runs, {} differ {:?}", differ.len(), differ),
    )
}

fn report(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    println!(
        "criterion {n:>2} {} {name}: {} ({:.2} s)",
        if o.passed { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
    o.passed
}

fn flag(name: &str) -> bool {
    std::env::var(name).is_ok_and(|v| v == "1")
}

fn main() -> ExitCode {
    let mut hard = true;
    hard &= report(1, "operator matches value iteration", criterion_1);
    hard &= report(2, "teaching signal reduces at sigma = 0", criterion_2);
    hard &= report(3, "temperature equivalence", criterion_3);
    hard &= report(4, "gradient fidelity", criterion_4);
    hard &= report(5, "composite reward arithmetic", criterion_5);

    let mut soft = true;
    let grid = if flag("GAGAIL_ACCEPTANCE_SKIP_LEARNING") {
        println!("criteria  6-9 skipped (GAGAIL_ACCEPTANCE_SKIP_LEARNING=1)");
        None
    } else {
        println!("training 5 seeds per arm:");
        let grid = learning_runs();
        soft &= report(6, "imperfect demonstrations are outperformed", || criterion_6(&grid));
        soft &= report(7, "ablation ordering", || criterion_7(&grid));
        soft &= report(8, "goal strategy stability", || criterion_8(&grid));
        soft &= report(9, "soft generator beats Q-learning", || criterion_9(&grid));
        Some(grid)
    };
    hard &= report(10, "determinism", || criterion_10(grid.as_ref()));

    if !hard || (!soft && flag("GAGAIL_ACCEPTANCE_STRICT")) {
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
