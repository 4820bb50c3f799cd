//! Acceptance gate: one test per criterion, each printing a PASS line with
//! the measured values. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines.

#![allow(clippy::needless_range_loop)]

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lexnav::gridworld::{ApartmentMap, Episode, Pos, ACTIONS, SLACK_PENALTY, SUCCESS_BONUS};
use lexnav::harness::{
    evaluate_spawn_sweep, run_training, run_transfer, AgentKind, RunConfig, TransferConfig,
};
use lexnav::nn::{DenseNet, Layer};
use lexnav::qlearn::{QError, ValueAgent};
use lexnav::transfer::{explore_action, DecisionSource, PriorPolicy};

use common::{data_path, default_map_text, dijkstra_distances, median};

fn base_config(goals: &[&str], agent: AgentKind, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(
        data_path("apartment.map"),
        goals.iter().map(|s| s.to_string()).collect(),
        agent,
    );
    cfg.decay_steps = 30_000;
    cfg.seed = seed;
    cfg
}

// -------------------------------------------------------------------------
// 1. Oracle equivalence: BFS vs Dijkstra, and the telescoping reward identity
// -------------------------------------------------------------------------

#[test]
fn criterion_1_environment_oracles() {
    let started = Instant::now();
    let text = default_map_text();
    let map = ApartmentMap::parse(&text).unwrap();

    let mut checked = 0usize;
    for goal in map.object_words() {
        let oracle = dijkstra_distances(&text, &goal);
        for y in 0..map.height() {
            for x in 0..map.width() {
                let pos = Pos::new(x, y);
                if map.is_passable(pos) {
                    let got = map.bfs_distance(pos, &goal).unwrap();
                    let want = *oracle.get(&(x, y)).expect("oracle covers passable cells");
                    assert_eq!(got, want, "goal {goal} at {pos}");
                    checked += 1;
                }
            }
        }
    }

    // telescoping: return == d(s0) - d(sT) - 0.01 T + 10 [success], with the
    // distance term exact in integers
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let goals = map.object_words();
    for trajectory in 0..1000 {
        let goal = &goals[trajectory % goals.len()];
        let field = map.distance_field(goal).unwrap();
        let (mut episode, _) = Episode::reset(&map, &field, &mut rng, 1.0);
        let d0 = field.at(episode.state().position).unwrap() as i64;
        let mut improvement = 0i64;
        let mut ret = 0.0;
        let mut steps = 0i64;
        while !episode.done() {
            let out = episode.step(ACTIONS[rng.random_range(0..4)]).unwrap();
            let (before, after) = out.source_distances;
            improvement += before as i64 - after as i64;
            ret += out.reward;
            steps += 1;
        }
        let d_final = field.at(episode.state().position).unwrap() as i64;
        assert_eq!(
            improvement,
            d0 - d_final,
            "integer distance term telescopes"
        );
        let expected = improvement as f64 - SLACK_PENALTY * steps as f64
            + if episode.succeeded() {
                SUCCESS_BONUS
            } else {
                0.0
            };
        assert!((ret - expected).abs() < 1e-9);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "ran in {elapsed:?}");
    println!(
        "ACCEPTANCE 1 PASS: bfs == dijkstra on {checked} (cell, goal) pairs; telescoping held on 1000 trajectories ({elapsed:?})"
    );
}

// -------------------------------------------------------------------------
// 2. Gradient check against central finite differences, via the public API
// -------------------------------------------------------------------------

fn flat_params(net: &DenseNet) -> Vec<f64> {
    net.layers()
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

fn with_param(net: &DenseNet, index: usize, delta: f64) -> DenseNet {
    let mut layers: Vec<Layer> = net.layers().to_vec();
    let mut k = 0;
    for layer in &mut layers {
        let w = layer.weights.len();
        if index < k + w {
            layer.weights[index - k] += delta;
            return DenseNet::from_layers(layers).unwrap();
        }
        k += w;
        let b = layer.bias.len();
        if index < k + b {
            layer.bias[index - k] += delta;
            return DenseNet::from_layers(layers).unwrap();
        }
        k += b;
    }
    panic!("parameter index out of range");
}

#[test]
fn criterion_2_gradient_check() {
    let started = Instant::now();
    let shapes: [&[usize]; 5] = [
        &[3, 4, 2],
        &[2, 6, 4, 1],
        &[5, 3, 3, 2],
        &[1, 7, 3],
        &[4, 4, 4, 4],
    ];
    let h = 1e-5;
    let mut nets_checked = 0;
    for (i, sizes) in shapes.iter().enumerate() {
        'seed: for seed in 0..6u64 {
            if nets_checked >= 24 {
                break;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(7_000 + 100 * i as u64 + seed);
            let net = DenseNet::init(sizes, &mut rng).unwrap();
            let input: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let out_grad: Vec<f64> = (0..*sizes.last().unwrap())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();

            // skip draws where a hidden pre-activation sits on the ReLU kink
            let mut acts = input.clone();
            for (li, layer) in net.layers().iter().enumerate() {
                let mut pre = layer.bias.clone();
                for r in 0..layer.rows {
                    for c in 0..layer.cols {
                        pre[r] += layer.weights[r * layer.cols + c] * acts[c];
                    }
                }
                if li + 1 < net.layers().len() {
                    if pre.iter().any(|z| z.abs() < 1e-3) {
                        continue 'seed;
                    }
                    acts = pre.iter().map(|&z| z.max(0.0)).collect();
                }
            }

            let trace = net.forward_cached(&input).unwrap();
            let grads = net.backward(&trace, &out_grad).unwrap();
            let analytic: Vec<f64> = grads
                .layers
                .iter()
                .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
                .collect();
            let scalar = |probe: &DenseNet| -> f64 {
                probe
                    .forward(&input)
                    .unwrap()
                    .iter()
                    .zip(&out_grad)
                    .map(|(o, g)| o * g)
                    .sum()
            };
            for k in 0..flat_params(&net).len() {
                let up = scalar(&with_param(&net, k, h));
                let down = scalar(&with_param(&net, k, -h));
                let numeric = (up - down) / (2.0 * h);
                let denom = numeric.abs().max(analytic[k].abs()).max(1e-8);
                let rel = (numeric - analytic[k]).abs() / denom;
                assert!(
                    rel < 1e-4,
                    "sizes {sizes:?} seed {seed} param {k}: rel error {rel}"
                );
            }
            nets_checked += 1;
        }
    }
    assert!(nets_checked >= 20, "only {nets_checked} nets checked");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "ran in {elapsed:?}");
    println!(
        "ACCEPTANCE 2 PASS: analytic gradients within 1e-4 of finite differences on {nets_checked} random nets ({elapsed:?})"
    );
}

// -------------------------------------------------------------------------
// 3. Mixing law of the three-way exploration policy
// -------------------------------------------------------------------------

struct Fixed(usize);
impl ValueAgent for Fixed {
    fn q_values(&self, _: &[f64], _: &str) -> Result<[f64; 4], QError> {
        let mut q = [0.0; 4];
        q[self.0] = 1.0;
        Ok(q)
    }
}

fn source_counts(epsilon: f64, alpha: f64, n: usize, seed: u64) -> (f64, f64, f64) {
    let agent = Fixed(0);
    let prior = PriorPolicy::new("omega", Box::new(Fixed(1)) as _);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let decision =
            explore_action(&agent, &[], "goal", Some(&prior), epsilon, alpha, &mut rng).unwrap();
        counts[match decision.source {
            DecisionSource::Greedy => 0,
            DecisionSource::Prior => 1,
            DecisionSource::Random => 2,
        }] += 1;
    }
    let n = n as f64;
    (
        counts[0] as f64 / n,
        counts[1] as f64 / n,
        counts[2] as f64 / n,
    )
}

fn assert_frequency(observed: f64, p: f64, n: usize, what: &str) {
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!(
        (observed - p).abs() <= 3.0 * sigma,
        "{what}: observed {observed:.4}, expected {p} ± {:.4}",
        3.0 * sigma
    );
}

#[test]
fn criterion_3_mixing_law() {
    let started = Instant::now();
    let n = 100_000;

    let (greedy, prior, random) = source_counts(1.0, 0.2, n, 31);
    assert_eq!(greedy, 0.0);
    assert_frequency(prior, 0.2, n, "prior at eps=1");
    assert_frequency(random, 0.8, n, "random at eps=1");

    let (greedy, prior, random) = source_counts(0.5, 0.2, n, 32);
    assert_frequency(greedy, 0.5, n, "greedy at eps=0.5");
    assert_frequency(prior, 0.1, n, "prior at eps=0.5");
    assert_frequency(random, 0.4, n, "random at eps=0.5");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "ran in {elapsed:?}");
    println!(
        "ACCEPTANCE 3 PASS: branch frequencies within 3 sigma of (0.2, 0.8) and (0.5, 0.1, 0.4) over {n} decisions ({elapsed:?})"
    );
}

// -------------------------------------------------------------------------
// 4. Single-goal optimality for the tabular learner
// -------------------------------------------------------------------------

#[test]
fn criterion_4_single_goal_optimality() {
    let started = Instant::now();
    let mut cfg = base_config(&["toilet"], AgentKind::Tabular, 7);
    cfg.decay_steps = 20_000;
    let run = run_training(&cfg).unwrap();

    let steps = run
        .metrics
        .steps_to_criterion
        .expect("criterion reached within budget");
    assert!(steps <= cfg.max_env_steps);
    assert!(steps < 100_000, "took {steps} steps");

    let sweep = evaluate_spawn_sweep(&run.agent, &run.map, "toilet", 4242).unwrap();
    for (spawn, success, taken) in &sweep {
        let optimal = run.map.bfs_distance(*spawn, "toilet").unwrap();
        assert!(success, "greedy policy failed from {spawn}");
        assert_eq!(*taken, optimal, "greedy policy suboptimal from {spawn}");
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "ran in {elapsed:?}");
    println!(
        "ACCEPTANCE 4 PASS: criterion at step {steps}; greedy episode length equals BFS distance from all {} spawn cells ({elapsed:?})",
        sweep.len()
    );
}

// -------------------------------------------------------------------------
// 5. E1: one-hot vs embedding goal vectors
// -------------------------------------------------------------------------

#[test]
fn criterion_5_e1_onehot_vs_embedding() {
    let started = Instant::now();
    let goals = ["shower", "toilet", "bed", "toaster"];
    let seeds = [1u64, 2, 3];

    let mut results = Vec::new();
    for kind in [AgentKind::DenseOneHot, AgentKind::DenseEmbedding] {
        let mut arm = Vec::new();
        for &seed in &seeds {
            let mut cfg = base_config(&goals, kind, seed);
            if kind == AgentKind::DenseEmbedding {
                cfg.embedding_path = Some(data_path("objects_glove50.txt"));
            }
            let run = run_training(&cfg).unwrap();
            let steps = run
                .metrics
                .steps_to_criterion
                .unwrap_or_else(|| panic!("{} seed {seed} exhausted budget", kind.name()));
            arm.push(steps);
        }
        results.push(arm);
    }
    let onehot = median(&results[0]);
    let embedding = median(&results[1]);
    let ratio = embedding as f64 / onehot as f64;
    assert!(
        ratio <= 2.0,
        "median steps_to_criterion ratio embedding/onehot = {ratio:.3}"
    );

    let elapsed = started.elapsed();
    println!(
        "ACCEPTANCE 5 PASS: one-hot median {onehot}, embedding median {embedding}, ratio {ratio:.3} <= 2.0 ({elapsed:?})"
    );
}

// -------------------------------------------------------------------------
// 6. E2: goal-set scaling
// -------------------------------------------------------------------------

#[test]
fn criterion_6_e2_goal_set_scaling() {
    let started = Instant::now();
    let sets: [&[&str]; 3] = [
        &["shower", "toilet"],
        &["shower", "toilet", "bed", "toaster"],
        &[
            "bathtub",
            "bed",
            "microwave",
            "nightstand",
            "shower",
            "stove",
            "table",
            "toaster",
            "toilet",
            "wardrobe",
        ],
    ];
    let seeds = [1u64, 2, 3];
    let mut medians = Vec::new();
    for set in sets {
        let mut arm = Vec::new();
        for &seed in &seeds {
            let mut cfg = base_config(set, AgentKind::Tabular, seed);
            // sparse rewards: learning speed is then set by how often each
            // goal gets an episode, which is what this experiment varies
            cfg.distance_scale = 0.0;
            let run = run_training(&cfg).unwrap();
            arm.push(
                run.metrics.steps_to_criterion.unwrap_or_else(|| {
                    panic!("|goals|={} seed {seed} exhausted budget", set.len())
                }),
            );
        }
        medians.push(median(&arm));
    }
    assert!(
        medians[0] < medians[1] && medians[1] < medians[2],
        "medians not strictly increasing: {medians:?}"
    );

    let elapsed = started.elapsed();
    println!(
        "ACCEPTANCE 6 PASS: median steps_to_criterion strictly increasing over goal sets 2/4/10: {medians:?} ({elapsed:?})"
    );
}

// -------------------------------------------------------------------------
// 7. E3: transfer ordering with priors of varying relatedness
// -------------------------------------------------------------------------

#[test]
fn criterion_7_e3_transfer_ordering() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let prior_path = tmp.path().join("priors.ckpt");

    // master the four prior goals in one tabular policy
    let mut prior_cfg = base_config(
        &["shower", "toilet", "bed", "toaster"],
        AgentKind::Tabular,
        100,
    );
    prior_cfg.out_policy = Some(prior_path.clone());
    let prior_run = run_training(&prior_cfg).unwrap();
    assert!(prior_run.metrics.steps_to_criterion.is_some());

    let seeds = [11u64, 12, 13];
    let run_arm = |prior: Option<&str>| -> (Vec<u64>, Vec<String>) {
        let mut steps = Vec::new();
        let mut chosen = Vec::new();
        for &seed in &seeds {
            let mut cfg = base_config(&["bathtub"], AgentKind::Tabular, seed);
            cfg.alpha = 0.2;
            cfg.embedding_path = Some(data_path("objects_glove50.txt"));
            cfg.transfer = Some(TransferConfig {
                checkpoint: prior_path.clone(),
                prior: prior.map(str::to_string),
                target: "bathtub".into(),
                mastered: None,
            });
            let run = run_transfer(&cfg).unwrap();
            steps.push(run.metrics.steps_to_criterion.expect("within budget"));
            chosen.push(run.prior_goal.expect("transfer run has a prior"));
        }
        (steps, chosen)
    };

    let mut baseline = Vec::new();
    for &seed in &seeds {
        let cfg = base_config(&["bathtub"], AgentKind::Tabular, seed);
        let run = run_training(&cfg).unwrap();
        baseline.push(run.metrics.steps_to_criterion.expect("within budget"));
    }
    let baseline_median = median(&baseline);

    let (shower_steps, _) = run_arm(Some("shower"));
    let (bed_steps, _) = run_arm(Some("bed"));
    let (toaster_steps, _) = run_arm(Some("toaster"));
    let (auto_steps, auto_chosen) = run_arm(None);

    let shower_median = median(&shower_steps);
    let bed_median = median(&bed_steps);
    let toaster_median = median(&toaster_steps);

    // (a) positive transfer from the related prior
    assert!(
        shower_median < baseline_median,
        "shower {shower_median} vs baseline {baseline_median}"
    );
    // (b) unrelated priors do not help
    assert!(
        bed_median >= baseline_median,
        "bed {bed_median} vs baseline {baseline_median}"
    );
    assert!(
        toaster_median >= baseline_median,
        "toaster {toaster_median} vs baseline {baseline_median}"
    );
    // (c) automatic selection picks the goal closest in embedding space
    assert!(
        auto_chosen.iter().all(|w| w == "shower"),
        "auto selected {auto_chosen:?}"
    );

    let elapsed = started.elapsed();
    println!(
        "ACCEPTANCE 7 PASS: medians baseline {baseline_median}, shower {shower_median} (<), bed {bed_median} (>=), toaster {toaster_median} (>=); auto picked shower; auto medians {:?} ({elapsed:?})",
        median(&auto_steps)
    );
}

// -------------------------------------------------------------------------
// 8. Determinism: (config, seed) fixes every CSV byte
// -------------------------------------------------------------------------

#[test]
fn criterion_8_determinism() {
    let started = Instant::now();

    let mut cfg = base_config(&["toilet"], AgentKind::Tabular, 5);
    cfg.max_env_steps = 15_000;
    let a = run_training(&cfg).unwrap().metrics.to_csv();
    let b = run_training(&cfg).unwrap().metrics.to_csv();
    assert_eq!(a, b, "tabular run not byte-reproducible");
    cfg.seed = 6;
    let c = run_training(&cfg).unwrap().metrics.to_csv();
    assert_ne!(a, c, "different seeds produced identical runs");

    let mut dense = base_config(&["toilet"], AgentKind::DenseOneHot, 5);
    dense.max_env_steps = 6_000;
    let d1 = run_training(&dense).unwrap().metrics.to_csv();
    let d2 = run_training(&dense).unwrap().metrics.to_csv();
    assert_eq!(d1, d2, "dense run not byte-reproducible");

    let elapsed = started.elapsed();
    println!("ACCEPTANCE 8 PASS: repeated seeded runs reproduce CSV byte-for-byte ({elapsed:?})");
}
