//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`cargo test --test acceptance`). A FAIL is printed
//! and counted but does not change the exit status unless
//! `ACCEPTANCE_STRICT=1` is set. Pass criterion numbers as arguments to run
//! a subset, e.g. `cargo test --test acceptance -- 3 4`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use maxent_ig::attribution::{ig_path_integral, integrated_gradients, AttributionMap, Explainer, ExplainerConfig, Method};
use maxent_ig::baselines::{entropy, entropy_curve, logits_entropy, BaselineFactory, BaselineKind, BaselineParams};
use maxent_ig::data::{bundled_digits, toy_generate, GroundTruthMask, LabeledDataset, ToySpec, ValueRange};
use maxent_ig::evaluation::{
    entropy_phase_gap, instance_seed, kl_loss, linear_transform_test, mean_baseline_sweep, nonconservation_demo,
    run_matrix, AblationReport, BaselinePolicy, DemoTarget, Evaluator, LossKind, Reference, ShiftShape, ShiftSpec,
    KL_EPS,
};
use maxent_ig::nn::{train, Dense, Layer, Network, Optimizer, TrainConfig};
use maxent_ig::runner::{self, DatasetConfig, ModelKind, RunConfig};
use maxent_ig::TensorF;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IG_STEPS: usize = 100;
const DIGITS_RANGE: (f64, f64) = (-0.42, 2.82);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Models shared across criteria, built on first use.
struct Models {
    data: LabeledDataset,
    fc: BTreeMap<u64, Network>,
    cnn: Option<Network>,
}

impl Models {
    fn new() -> Self {
        let data = bundled_digits()
            .unwrap()
            .normalize(ValueRange::new(DIGITS_RANGE.0, DIGITS_RANGE.1).unwrap())
            .unwrap();
        Self {
            data,
            fc: BTreeMap::new(),
            cnn: None,
        }
    }

    fn range(&self) -> ValueRange {
        self.data.value_range()
    }

    fn digits_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            seed,
            optimizer: Optimizer::Adam,
        }
    }

    fn fc(&mut self, seed: u64) -> &Network {
        if !self.fc.contains_key(&seed) {
            let net = Network::fully_connected(&[1, 8, 8], &[64, 32], 10, seed).unwrap();
            let (net, rep) = train(net, &self.data, &Self::digits_config(seed)).unwrap();
            println!("    digits FC seed {seed}: test accuracy {:.4}", rep.test_accuracy);
            self.fc.insert(seed, net.into_inner());
        }
        &self.fc[&seed]
    }

    fn cnn(&mut self) -> &Network {
        if self.cnn.is_none() {
            let net = Network::small_cnn(&[1, 8, 8], 8, 3, &[32], 10, 0).unwrap();
            let (net, rep) = train(net, &self.data, &Self::digits_config(0)).unwrap();
            println!("    digits CNN seed 0: test accuracy {:.4}", rep.test_accuracy);
            self.cnn = Some(net.into_inner());
        }
        self.cnn.as_ref().unwrap()
    }

    fn test_instances(&self, n: usize) -> Vec<TensorF> {
        self.data.test_indices()[..n].iter().map(|&i| self.data.instance(i)).collect()
    }
}

/// The twelve (f, k, c) toy configurations with binary features and c <= 2^k.
fn toy_configs() -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for f in 2..=4 {
        for k in 1..=2 {
            for c in 2..=4 {
                if c <= 1 << k {
                    out.push((f, k, c));
                }
            }
        }
    }
    out
}

struct Toy {
    net: Network,
    mask: GroundTruthMask,
    range: ValueRange,
    /// Every distinct binary input with the class the model predicts for it.
    inputs: Vec<(TensorF, usize)>,
}

fn toy(f: usize, k: usize, c: usize, seed: u64) -> Toy {
    let spec = ToySpec {
        features: f,
        relevant: k,
        classes: c,
        values: 2,
        instances: 10_000,
        seed,
    };
    let (data, mask) = toy_generate(&spec).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 32,
        learning_rate: 1e-2,
        seed,
        optimizer: Optimizer::Adam,
    };
    let net = Network::fully_connected(&[f], &[16], c, seed).unwrap();
    let net = train(net, &data, &cfg).unwrap().0.into_inner();
    let inputs = (0..1usize << f)
        .map(|bits| {
            let x = TensorF::vector((0..f).map(|j| ((bits >> j) & 1) as f64).collect());
            let class = net.predict(&x).unwrap();
            (x, class)
        })
        .collect();
    Toy {
        net,
        mask,
        range: spec.value_range(),
        inputs,
    }
}

fn toy_coincidence() -> Verdict {
    let mut hits = 0;
    let mut parts = Vec::new();
    let configs = toy_configs();
    for &(f, k, c) in &configs {
        let t = toy(f, k, c, 0);
        let curve = mean_baseline_sweep(&t.net, &t.inputs, &Reference::Mask(t.mask.clone()), t.range, 200, LossKind::Kl, IG_STEPS)
            .unwrap();
        let (u_loss, _) = curve.argmin();
        let (u_ent, _) = entropy_curve(&t.net, t.range, 200).unwrap().argmax();
        let ok = (u_loss - u_ent).abs() <= 0.05 * t.range.width();
        hits += ok as usize;
        parts.push(format!("({f},{k},{c}) {u_loss:.3}/{u_ent:.3}{}", if ok { "" } else { "x" }));
    }
    verdict(
        hits >= 9,
        format!("{hits}/{} configs with KL argmin within 5% of entropy argmax (need 9): {}", configs.len(), parts.join(" ")),
    )
}

fn baseline_dominance() -> Verdict {
    let rivals = [BaselineKind::Zero, BaselineKind::Black, BaselineKind::White, BaselineKind::UniformNoise];
    let mut wins = 0;
    let mut const_wins = 0;
    let mut total = 0;
    let mut losses = Vec::new();
    for &(f, k, c) in &toy_configs() {
        for seed in 0..5 {
            let t = toy(f, k, c, seed);
            let factory = BaselineFactory::new(&t.net, t.range, BaselineParams::default(), seed);
            let mean_kl = |kind: BaselineKind| -> f64 {
                let s: f64 = t
                    .inputs
                    .iter()
                    .enumerate()
                    .map(|(j, (x, class))| {
                        let b = factory.build(kind, x, instance_seed(seed, j)).unwrap();
                        let ig = integrated_gradients(&t.net, x, &b, IG_STEPS, *class).unwrap();
                        kl_loss(&ig, &t.mask, KL_EPS).unwrap()
                    })
                    .sum();
                s / t.inputs.len() as f64
            };
            let ours = mean_kl(BaselineKind::MaxEntropyUniform);
            let beaten = rivals.iter().all(|&r| ours < mean_kl(r));
            // alternative reading: "random" as a constant input at a random level
            let constant: f64 = t
                .inputs
                .iter()
                .enumerate()
                .map(|(j, (x, class))| {
                    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(seed, j));
                    let b = TensorF::filled(x.shape(), rng.random_range(t.range.lo..=t.range.hi));
                    let values = ig_path_integral(&t.net, x, &b, IG_STEPS, *class).unwrap();
                    let map = AttributionMap {
                        values,
                        class: *class,
                        method: "ig".into(),
                        baseline: None,
                    };
                    kl_loss(&map, &t.mask, KL_EPS).unwrap()
                })
                .sum::<f64>()
                / t.inputs.len() as f64;
            let deterministic = rivals[..3].iter().all(|&r| ours < mean_kl(r));
            const_wins += (deterministic && ours < constant) as usize;
            total += 1;
            if beaten {
                wins += 1;
            } else {
                losses.push(format!("({f},{k},{c})s{seed}"));
            }
        }
    }
    let share = wins as f64 / total as f64;
    verdict(
        share >= 0.9,
        format!(
            "max-entropy-uniform KL strictly below zero/black/white/uniform-noise in {wins}/{total} = {:.1}% of (config, seed) pairs (need 90%); not lowest: {}; with a random constant as the random baseline instead: {const_wins}/{total}",
            100.0 * share,
            losses.join(" ")
        ),
    )
}

fn shift_invariance(m: &mut Models) -> Verdict {
    let xs = m.test_instances(10);
    let net = m.fc(0).clone();
    let zero = TensorF::zeros(&[1, 8, 8]);
    let run = |shape, policy| {
        linear_transform_test(&net, &xs, &ShiftSpec { shape, amplitude: 0.5 }, policy, &zero, IG_STEPS).unwrap()
    };
    let moved = run(ShiftShape::Uniform, BaselinePolicy::ShiftWithInput);
    let held = run(ShiftShape::Uniform, BaselinePolicy::Hold);
    let cross = run(ShiftShape::Cross, BaselinePolicy::ShiftWithInput);
    let logit = moved.max_logit_diff.max(held.max_logit_diff).max(cross.max_logit_diff);
    let cnn = m.cnn().clone();
    let cnn_moved = linear_transform_test(
        &cnn,
        &xs,
        &ShiftSpec {
            shape: ShiftShape::Uniform,
            amplitude: 0.5,
        },
        BaselinePolicy::ShiftWithInput,
        &zero,
        IG_STEPS,
    )
    .unwrap();
    verdict(
        moved.max_abs_diff < 1e-6 && held.max_abs_diff > 1e-3 && cross.max_abs_diff > 1e-3 && logit < 1e-12,
        format!(
            "FC: shifted baseline {:.2e} (< 1e-6), held {:.2e} (> 1e-3), cross {:.2e} (> 1e-3), logits {:.2e} (< 1e-12); CNN shifted baseline {:.2e}",
            moved.max_abs_diff, held.max_abs_diff, cross.max_abs_diff, logit, cnn_moved.max_abs_diff
        ),
    )
}

fn phase_identity(m: &mut Models) -> Verdict {
    let r = m.range();
    let fc = entropy_phase_gap(m.fc(0), 0.5, r, 500).unwrap();
    let cnn = entropy_phase_gap(m.cnn(), 0.5, r, 500).unwrap();
    let t = toy(4, 2, 4, 0);
    let tg = entropy_phase_gap(&t.net, 0.5, t.range, 500).unwrap();
    let worst = fc.max(cnn).max(tg);
    verdict(worst < 1e-9, format!("max gap FC {fc:.2e}, CNN {cnn:.2e}, toy {tg:.2e} (< 1e-9)"))
}

fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], r: ValueRange) -> TensorF {
    let n = shape.iter().product();
    TensorF::new(shape.to_vec(), (0..n).map(|_| rng.random_range(r.lo..=r.hi)).collect()).unwrap()
}

fn nonconservation(m: &mut Models) -> Verdict {
    let r = m.range();
    let x = m.test_instances(1).remove(0);
    let lr = 0.01 * r.width();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, net) in [("FC", m.fc(0).clone()), ("CNN", m.cnn().clone())] {
        let class = net.predict(&x).unwrap();
        let zero = vec![("zero".to_string(), TensorF::zeros(&[1, 8, 8]))];
        let rep = nonconservation_demo(&net, DemoTarget::Logit, class, &x, 1000, lr, r, &zero).unwrap();
        let at_zero = rep.markers[0].value;
        let logit_ok = rep.min_found <= at_zero - 0.1 * at_zero.abs();

        let factory = BaselineFactory::new(&net, r, BaselineParams::default(), 0);
        let h_star = factory.max_entropy_full().unwrap().entropy;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut h_probe = f64::NEG_INFINITY;
        for _ in 0..20 {
            let start = uniform_tensor(&mut rng, &[1, 8, 8], r);
            let d = nonconservation_demo(&net, DemoTarget::Entropy, class, &start, 1000, lr, r, &[]).unwrap();
            h_probe = h_probe.max(-d.min_found);
        }
        for _ in 0..10_000 {
            h_probe = h_probe.max(logits_entropy(&net, &uniform_tensor(&mut rng, &[1, 8, 8], r)).unwrap());
        }
        let entropy_ok = h_probe <= h_star + 1e-3;
        ok &= logit_ok && entropy_ok;
        parts.push(format!(
            "{name}: logit min {:.3} vs zero substitute {at_zero:.3} ({}); best probe entropy {h_probe:.6} vs max-entropy {h_star:.6} ({})",
            rep.min_found,
            if logit_ok { "ok" } else { "not 10% below" },
            if entropy_ok { "ok" } else { "exceeds" }
        ));
    }
    verdict(ok, parts.join("; "))
}

fn median_of(reports: &[AblationReport], method: &str) -> f64 {
    let r = reports.iter().find(|r| r.method == method).unwrap();
    assert!(r.error.is_none(), "{method}: {:?}", r.error);
    r.median
}

fn evaluate_fc(m: &mut Models, seed: u64, methods: &[Method]) -> Vec<AblationReport> {
    let r = m.range();
    let net = m.fc(seed).clone();
    let factory = BaselineFactory::new(&net, r, BaselineParams::default(), seed).with_training_data(&m.data);
    let ex = Explainer::new(&factory, ExplainerConfig::default());
    let test = m.data.test_indices().to_vec();
    run_matrix(&ex, &m.data, &test, methods, &Evaluator::default(), seed)
}

fn gradient_methods() -> Vec<Method> {
    let mut v = Method::GRADIENT_FAMILY.to_vec();
    v.extend(BaselineKind::ALL.iter().map(|&k| Method::IntegratedGradients(k)));
    v
}

fn method_ranking(m: &mut Models, cache: &mut BTreeMap<u64, Vec<AblationReport>>) -> Verdict {
    let mut methods = vec![Method::Random];
    methods.extend(gradient_methods());
    let reports = evaluate_fc(m, 0, &methods);
    let n = reports[0].scores.len();
    let rnd = median_of(&reports, "random");
    let grads: Vec<(String, f64)> = gradient_methods().iter().map(|g| (g.tag(), median_of(&reports, &g.tag()))).collect();
    let worst = grads.iter().cloned().fold((String::new(), f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    cache.insert(0, reports);
    verdict(
        n >= 500 && rnd.abs() < 0.02 && worst.1 > 0.0,
        format!(
            "{n} test instances, ablating 10% of features: random median {rnd:.4} (|.| < 0.02); lowest gradient-method median {} {:.4} (> 0)",
            worst.0, worst.1
        ),
    )
}

const NON_UNIFORM: [BaselineKind; 6] = [
    BaselineKind::Xdist,
    BaselineKind::TrainAvg,
    BaselineKind::Blur,
    BaselineKind::UniformNoise,
    BaselineKind::GaussianNoise,
    BaselineKind::MaxEntropyFull,
];

fn xdist_inferiority(m: &mut Models, cache: &mut BTreeMap<u64, Vec<AblationReport>>) -> Verdict {
    let methods: Vec<Method> = NON_UNIFORM.iter().map(|&k| Method::IntegratedGradients(k)).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 0..3 {
        let reports = match cache.get(&seed) {
            Some(r) => r.clone(),
            None => evaluate_fc(m, seed, &methods),
        };
        let med: Vec<(BaselineKind, f64)> = NON_UNIFORM
            .iter()
            .map(|&k| (k, median_of(&reports, &Method::IntegratedGradients(k).tag())))
            .collect();
        let xd = med[0].1;
        let lowest = med[1..].iter().all(|&(_, v)| xd < v);
        ok &= lowest;
        let rank = 1 + med[1..].iter().filter(|&&(_, v)| v <= xd).count();
        let list: Vec<String> = med.iter().map(|(k, v)| format!("{}={v:.3}", k.tag())).collect();
        parts.push(format!("seed {seed}: xdist ranks {rank}/6 [{}]", list.join(" ")));
    }
    verdict(ok, parts.join("; "))
}

fn completeness_error(net: &Network, pairs: &[(TensorF, TensorF)], steps: usize) -> f64 {
    pairs
        .iter()
        .map(|(x, b)| {
            let class = net.predict(x).unwrap();
            let ig = ig_path_integral(net, x, b, steps, class).unwrap();
            let gap = net.forward(x).unwrap().data()[class] - net.forward(b).unwrap().data()[class];
            (ig.sum() - gap).abs()
        })
        .fold(0.0, f64::max)
}

fn random_pairs(shape: &[usize], r: ValueRange, seed: u64) -> Vec<(TensorF, TensorF)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..100)
        .map(|_| (uniform_tensor(&mut rng, shape, r), uniform_tensor(&mut rng, shape, r)))
        .collect()
}

fn completeness(m: &mut Models) -> Verdict {
    let r = m.range();
    let t = toy(4, 2, 2, 0);
    let nets: Vec<(&str, Network, Vec<(TensorF, TensorF)>)> = vec![
        ("toy FC", t.net.clone(), random_pairs(&[4], t.range, 1)),
        ("digits FC", m.fc(0).clone(), random_pairs(&[1, 8, 8], r, 2)),
        ("digits CNN", m.cnn().clone(), random_pairs(&[1, 8, 8], r, 3)),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, net, pairs) in &nets {
        let e = completeness_error(net, pairs, 100);
        ok &= e <= 1e-3;
        let fine = completeness_error(net, pairs, 1000);
        parts.push(format!("{name} {e:.2e} (1000 steps: {fine:.2e})"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w: Vec<f64> = (0..15).map(|_| rng.random_range(-2.0..2.0)).collect();
    let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let linear = Network::new(vec![Layer::Dense(Dense::new(5, 3, w, b).unwrap())], vec![5]).unwrap();
    let pairs = random_pairs(&[5], ValueRange::new(-1.0, 1.0).unwrap(), 5);
    let lin = [1, 2, 3, 10, 100].iter().map(|&s| completeness_error(&linear, &pairs, s)).fold(0.0, f64::max);
    ok &= lin <= 1e-6;
    verdict(
        ok,
        format!(
            "max |sum IG - (F(x) - F(x'))| at 100 steps over 100 random pairs (<= 1e-3): {}; linear model at 1-100 steps {lin:.2e} (<= 1e-6)",
            parts.join(", ")
        ),
    )
}

fn entropy_primitives(m: &mut Models) -> Verdict {
    let mut worst: f64 = 0.0;
    for c in 2..=10 {
        worst = worst.max((entropy(&vec![1.0 / c as f64; c]).unwrap() - (c as f64).ln()).abs());
        for hot in 0..c {
            let mut p = vec![0.0; c];
            p[hot] = 1.0;
            worst = worst.max(entropy(&p).unwrap().abs());
        }
    }
    let r = m.range();
    let mut excess = f64::NEG_INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t = toy(3, 2, 3, 0);
    let nets: Vec<(Network, ValueRange)> = vec![(m.fc(0).clone(), r), (m.cnn().clone(), r), (t.net, t.range)];
    let mut evaluated = 0;
    for (net, range) in &nets {
        let bound = (net.classes() as f64).ln();
        for (_, h) in entropy_curve(net, *range, 500).unwrap().samples {
            excess = excess.max(h - bound);
            evaluated += 1;
        }
        for _ in 0..2000 {
            let x = uniform_tensor(&mut rng, net.input_shape(), *range);
            excess = excess.max(logits_entropy(net, &x).unwrap() - bound);
            evaluated += 1;
        }
        let factory = BaselineFactory::new(net, *range, BaselineParams::default(), 0);
        excess = excess.max(factory.max_entropy_full().unwrap().entropy - bound);
    }
    verdict(
        worst <= 1e-12 && excess <= 0.0,
        format!("uniform/one-hot error {worst:.1e} (<= 1e-12); max H - ln(c) over {evaluated} inputs and ascent optima {excess:.2e} (<= 0)"),
    )
}

fn small_config(root: &Path, dataset: DatasetConfig, hidden: Vec<usize>, epochs: usize, lr: f64) -> RunConfig {
    let mut cfg = RunConfig {
        seed: 3,
        output_dir: Some(root.to_path_buf()),
        dataset,
        ..RunConfig::default()
    };
    cfg.model.kind = ModelKind::Fc;
    cfg.model.hidden = hidden;
    cfg.train.epochs = epochs;
    cfg.train.learning_rate = lr;
    cfg.baselines.params.ascent_steps = 200;
    cfg.explainer.ig_steps = 30;
    cfg.explainer.smoothgrad.samples = 10;
    cfg.explain.methods = vec![Method::Random, Method::SmoothGrad, Method::IntegratedGradients(BaselineKind::UniformNoise)];
    cfg.evaluate.instances = 30;
    cfg.sweep.grid = 41;
    cfg.sweep.instances = 8;
    cfg.sweep.hybrid_instances = 8;
    cfg.invariance.instances = 4;
    cfg.nonconservation.steps = 200;
    cfg
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Verdict {
    type Cmd = fn(&RunConfig) -> maxent_ig::Result<runner::CommandSummary>;
    let commands: [(&str, Cmd); 7] = [
        ("train", runner::cmd_train),
        ("baseline", runner::cmd_baseline),
        ("sweep", runner::cmd_sweep),
        ("invariance", runner::cmd_invariance),
        ("evaluate", runner::cmd_evaluate),
        ("nonconservation", runner::cmd_nonconservation),
        ("explain", runner::cmd_explain),
    ];
    let tmp = tempfile::tempdir().unwrap();
    let toy_ds = DatasetConfig::Toy {
        features: 3,
        relevant: 2,
        classes: 2,
        values: 2,
        instances: 2000,
    };
    let digits_ds = DatasetConfig::Digits {
        range: [DIGITS_RANGE.0, DIGITS_RANGE.1],
    };
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (label, ds, hidden, epochs, lr) in [("toy", toy_ds, vec![16], 20, 1e-2), ("digits", digits_ds, vec![32], 5, 1e-3)] {
        let first = tmp.path().join(label).join("first");
        let second = tmp.path().join(label).join("second");
        let cfg = small_config(&first, ds, hidden, epochs, lr);
        for (name, cmd) in commands {
            cmd(&cfg).unwrap();
            let archived = fs::read_to_string(first.join(name).join("config.toml")).unwrap();
            let mut again = RunConfig::from_toml(&archived).unwrap();
            assert_eq!(again, cfg);
            again.output_dir = Some(second.clone());
            cmd(&again).unwrap();
        }
        let (a, b) = (csv_files(&first), csv_files(&second));
        if a.keys().ne(b.keys()) {
            mismatched.push(format!("{label}: file sets differ"));
        }
        for (k, v) in &a {
            compared += 1;
            if b.get(k) != Some(v) {
                mismatched.push(format!("{label}/{k}"));
            }
        }
    }
    verdict(
        mismatched.is_empty() && compared > 0,
        format!("{compared} CSV files from 7 subcommands on toy and digits configs rerun from archived configs; mismatches: {}", if mismatched.is_empty() { "none".into() } else { mismatched.join(", ") }),
    )
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |id: u32| wanted.is_empty() || wanted.contains(&id);
    let mut models = Models::new();
    let mut cache = BTreeMap::new();
    let mut results = Vec::new();
    let mut check = |id: u32, name: &str, f: &mut dyn FnMut() -> Verdict| {
        if !run(id) {
            return;
        }
        let start = Instant::now();
        let v = f();
        println!(
            "{} [{id:>2}] {name} ({:.1}s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
        results.push((id, v.pass));
    };
    check(1, "toy coincidence", &mut toy_coincidence);
    check(2, "baseline dominance on toys", &mut baseline_dominance);
    check(3, "uniform-shift invariance", &mut || shift_invariance(&mut models));
    check(4, "entropy phase identity", &mut || phase_identity(&mut models));
    check(5, "non-conservation", &mut || nonconservation(&mut models));
    check(6, "method sanity ranking", &mut || method_ranking(&mut models, &mut cache));
    check(7, "xdist inferiority", &mut || xdist_inferiority(&mut models, &mut cache));
    check(8, "IG completeness", &mut || completeness(&mut models));
    check(9, "entropy primitives", &mut || entropy_primitives(&mut models));
    check(10, "determinism", &mut determinism);

    let failed: Vec<u32> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({failed:?})") }
    );
    if !failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
