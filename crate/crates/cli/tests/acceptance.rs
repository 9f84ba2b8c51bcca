//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p mcme-cli --test acceptance`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use mcme::data::{three_class_2d, NoiseSpec};
use mcme::dropout::{generate_masks, masksembles_forward, mcd_forward, DropoutConfig, Granularity, MaskSet, RngStream};
use mcme::explorer::{enumerate_design_points, explore, optimal_selections, Constraints, EvalContext, Grids};
use mcme::inference::{site_masks, ExitMode, Executor};
use mcme::mapping::{build_mapping, estimate_latency, estimate_resources, HardwareModel};
use mcme::metrics::{
    average_predictive_entropy, cost_multi_exit, cost_single_exit, count_flops, evaluate, expected_calibration_error,
    predictive_entropy, reduction_rate, EvalOptions, FlopReport,
};
use mcme::netspec::{default_head_template, insert_dropout, place_exits, zoo};
use mcme::tensor::{train_toy, Objective, Tensor, TrainParams, WeightStore};
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::Rng;

const REL_TOL_COST: f64 = 1e-12;
const TOL_8_3: f64 = 1e-12;
const MCD_DRAWS: usize = 100_000;
const TOL_ECE: f64 = 1e-12;
const TOL_ENTROPY: f64 = 1e-12;
const TOL_APE: f64 = 1e-9;
const E2E_MARGIN: f64 = 0.02;
const TOL_GRAD: f64 = 1e-4;

const LIMIT_AC1: Duration = Duration::from_secs(5);
const LIMIT_AC3: Duration = Duration::from_secs(10);
const LIMIT_AC5: Duration = Duration::from_secs(30);
const LIMIT_AC9: Duration = Duration::from_secs(120);

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ac1() -> Check {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let main = r.random_range(1..1_000_000_000u64);
        let exit = r.random_range(1..1_000_000_000u64);
        let n_exit = r.random_range(1..=16u64);
        let n_sample = n_exit * r.random_range(1..=16u64);
        let report = FlopReport::new(main, vec![exit]);
        let single = cost_single_exit(&report, n_sample) as f64;
        let multi = cost_multi_exit(&report, n_sample, n_exit, false).map_err(|e| e.to_string())?;
        let rel = (reduction_rate(report.alpha, n_sample, n_exit) * multi - single).abs() / single;
        worst = worst.max(rel);
    }
    ensure(worst <= REL_TOL_COST, format!("worst relative error {:e}", worst))?;
    for i in 0..5u64 {
        let mut r = rng(200 + i);
        let me = random_spec(&mut r, i % 2 == 1);
        let w = WeightStore::init_for(&me, i);
        let exec = Executor::new(&me, &w, None).map_err(|e| e.to_string())?;
        let n_pass = 1 + (i as usize % 2);
        let x = random_input(&mut r, &me.trunk.input_shape);
        let (_, flops) = exec.predict_counted(&x, n_pass, 3).map_err(|e| e.to_string())?;
        let report = count_flops(&me).map_err(|e| e.to_string())?;
        let n_exit = me.n_exit() as u64;
        let want = cost_multi_exit(&report, n_pass as u64 * n_exit, n_exit, true).map_err(|e| e.to_string())?;
        ensure(flops as f64 == want, format!("net {}: executed {} vs model {}", i, flops, want))?;
    }
    Ok(format!("worst relative error {:.1e}; 5 nets exact", worst))
}

fn ac2() -> Check {
    for n in 1..=64u64 {
        for alpha in [0.0, 0.1, 0.5, 1.0, 3.7] {
            let got = reduction_rate(alpha, n, n);
            ensure(got == n as f64, format!("alpha {} n {}: {}", alpha, n, got))?;
        }
    }
    let v = reduction_rate(1.0, 4, 2);
    ensure((v - 8.0 / 3.0).abs() <= TOL_8_3, format!("alpha=1, 4/2 gives {}", v))?;
    Ok(format!("Ns=Ne exact; 8/3 off by {:.1e}", (v - 8.0 / 3.0).abs()))
}

fn ac3() -> Check {
    let mut r = rng(3);
    let mut detail = Vec::new();
    for keep in [0.5, 0.625, 0.75, 0.875] {
        let xs: Vec<f32> = (0..MCD_DRAWS).map(|_| r.random_range(-10.0f32..10.0)).collect();
        let x = Tensor::vector(xs.clone());
        let y = mcd_forward(&x, keep, Granularity::Element, &mut RngStream::new(17, 0, "ac3"), false)
            .map_err(|e| e.to_string())?;
        let mut kept = 0usize;
        for (a, b) in xs.iter().zip(y.data()) {
            if *b != 0.0 {
                kept += 1;
                // the f64 product is exact (dyadic keep rates), so rounding it
                // once gives the correctly rounded f32 product
                ensure(*b == (*a as f64 * keep) as f32, format!("keep {}: {} -> {}", keep, a, b))?;
            }
        }
        let n = MCD_DRAWS as f64;
        let sigma = (n * keep * (1.0 - keep)).sqrt();
        let z = (kept as f64 - n * keep) / sigma;
        ensure(z.abs() <= 3.0, format!("keep {}: {} kept, z = {:.2}", keep, kept, z))?;
        detail.push(format!("{}:z={:+.2}", keep, z));
    }
    Ok(detail.join(" "))
}

fn overlap(m: &MaskSet) -> usize {
    let mut total = 0;
    for i in 0..m.num_masks {
        for j in i + 1..m.num_masks {
            total += (0..m.feature_count).filter(|&f| m.masks[i][f] & m.masks[j][f] == 1).count();
        }
    }
    total
}

fn ac4() -> Check {
    let mut r = rng(4);
    for (f, n) in [(8usize, 4usize), (16, 4), (12, 3)] {
        let mut prev = 0;
        let mut s = 1.0;
        while s <= n as f64 {
            let m = generate_masks(f, n, s).map_err(|e| e.to_string())?;
            ensure(m == generate_masks(f, n, s).unwrap(), "mask generation not deterministic")?;
            let k = m.popcount(0);
            ensure((0..n).all(|i| m.popcount(i) == k), format!("F={} N={} s={}: popcounts differ", f, n, s))?;
            let x = Tensor::vector((0..f).map(|_| r.random_range(-1.0f32..1.0)).collect());
            for i in 0..n {
                let a = masksembles_forward(&x, i, &m).map_err(|e| e.to_string())?;
                let b = masksembles_forward(&x, i, &m).map_err(|e| e.to_string())?;
                ensure(a.bit_eq(&b), "repeated mask application differs")?;
            }
            let o = overlap(&m);
            ensure(o >= prev, format!("F={} N={}: overlap drops at s={}", f, n, s))?;
            prev = o;
            s += 0.25;
        }
        if f % n == 0 {
            let m = generate_masks(f, n, 1.0).unwrap();
            for j in 0..f {
                let cover: usize = (0..n).map(|i| m.masks[i][j] as usize).sum();
                ensure(cover == 1, format!("F={} N={}: feature {} covered {} times", f, n, j, cover))?;
            }
        }
    }
    Ok("3 (F,N) pairs, s in 1..N step 0.25".into())
}

fn ac5() -> Check {
    let (mut spilled, mut conv, mut cases) = (0, 0, 0);
    for net in 0..10u64 {
        for masksembles in [false, true] {
            let mut r = rng(100 + net);
            let me = random_spec(&mut r, masksembles);
            spilled += usize::from(me.exits.iter().any(|e| !e.trunk_dropout.is_empty()));
            conv += usize::from(me.trunk.input_shape.len() == 3);
            let w = WeightStore::init_for(&me, net);
            let exec = Executor::new(&me, &w, None).map_err(|e| e.to_string())?;
            let masks = site_masks(&me).map_err(|e| e.to_string())?;
            let n_pass = match me.dropout {
                Some(DropoutConfig::Masksembles { num_masks, .. }) => num_masks,
                _ => 3,
            };
            for seed in [0, 7, 12345] {
                let x = random_input(&mut r, &me.trunk.input_shape);
                let got = exec.predict(&x, n_pass, seed).map_err(|e| e.to_string())?;
                let want = oracle_predict(&me, &w, &masks, &x, n_pass, seed, None);
                let bits = |v: &Vec<Vec<Vec<f32>>>| -> Vec<u32> { v.iter().flatten().flatten().map(|f| f.to_bits()).collect() };
                ensure(
                    bits(&got.samples) == bits(&want),
                    format!("net {} masksembles {} seed {}", net, masksembles, seed),
                )?;
                cases += 1;
            }
        }
    }
    ensure(spilled > 0 && conv > 0, "fixtures miss spilled sites or conv nets")?;
    Ok(format!("{} cases bit-identical ({} with trunk spill, {} conv)", cases, spilled, conv))
}

fn ac6() -> Check {
    let mut runner = TestRunner::new(PropConfig {
        cases: 128,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let result = runner.run(&(0u64..1_000_000, proptest::bool::ANY, 1usize..6, 0u64..1000), |(s, mk, p, seed)| {
        let mut r = rng(s);
        let me = random_spec(&mut r, mk);
        let n_pass = match me.dropout {
            Some(DropoutConfig::Masksembles { num_masks, .. }) => p.min(num_masks),
            _ => p,
        };
        let w = WeightStore::init_for(&me, s);
        let exec = Executor::new(&me, &w, None).unwrap();
        let x = random_input(&mut r, &me.trunk.input_shape);
        let ps = exec.predict(&x, n_pass, seed).unwrap();
        proptest::prop_assert_eq!(ps.n_sample(), n_pass * me.n_exit());
        proptest::prop_assert_eq!(ps.samples.len(), me.n_exit());
        for k in 1..=me.n_exit() {
            proptest::prop_assert_eq!(ps.exit(k).len(), n_pass);
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    Ok("128 random configs".into())
}

fn ac7() -> Check {
    let mut r = rng(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.random_range(1..80);
        let k = r.random_range(2..8);
        let bins = r.random_range(1..25);
        let probs: Vec<Vec<f64>> = (0..n).map(|_| random_simplex(&mut r, k)).collect();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let got = expected_calibration_error(&probs, &labels, bins).map_err(|e| e.to_string())?;
        worst = worst.max((got - ece_brute(&probs, &labels, bins)).abs());
    }
    ensure(worst <= TOL_ECE, format!("ECE off brute force by {:e}", worst))?;
    let h = predictive_entropy(&[0.1; 10]).map_err(|e| e.to_string())?;
    ensure((h - 10f64.ln()).abs() <= TOL_ENTROPY, format!("uniform-10 entropy {}", h))?;
    let h1 = predictive_entropy(&[0.0, 0.0, 1.0, 0.0]).map_err(|e| e.to_string())?;
    ensure(h1 == 0.0, format!("one-hot entropy {}", h1))?;
    let classes = 5;
    let me = insert_dropout(
        &place_exits(&zoo::block_mlp(3, 6, 3, classes), &default_head_template()).map_err(|e| e.to_string())?,
        DropoutConfig::mcd(0.5),
        1,
    )
    .map_err(|e| e.to_string())?;
    let mut w = WeightStore::init_for(&me, 3);
    for e in &me.exits {
        for l in e.head_layers.iter().filter(|l| l.is_learnable()) {
            for (name, shape) in l.weight_shapes() {
                w.insert(&l.id, name, Tensor::zeros(shape));
            }
        }
    }
    let noise = NoiseSpec {
        mean: vec![0.0; 3],
        std: vec![1.0; 3],
        count: 50,
        seed: 1,
    };
    let ape = average_predictive_entropy(&me, &w, &noise, 3, 9, None).map_err(|e| e.to_string())?;
    let gap = (ape - (classes as f64).ln()).abs();
    ensure(gap <= TOL_APE, format!("zero-head aPE {} vs ln {}", ape, classes))?;
    Ok(format!("ECE worst {:.1e}; zero-head aPE off by {:.1e}", worst, gap))
}

fn ac8() -> Check {
    let hw = HardwareModel::default();
    let base = place_exits(&zoo::block_mlp(2, 16, 3, 3), &default_head_template()).map_err(|e| e.to_string())?;
    let me = insert_dropout(&base, DropoutConfig::mcd(0.75), 1).map_err(|e| e.to_string())?;
    let report = count_flops(&me).map_err(|e| e.to_string())?;
    let spatial: Vec<f64> = (1..=12)
        .map(|n| estimate_latency(&build_mapping(n, n).unwrap(), &report, &hw).cycles)
        .collect();
    ensure(spatial.iter().all(|&c| c == spatial[0]), "spatial latency varies with N_sample")?;
    let slope = report.exit_per_sample() / hw.ops_per_cycle_per_engine;
    for n in 1..12 {
        let a = estimate_latency(&build_mapping(n, 1).unwrap(), &report, &hw).cycles;
        let b = estimate_latency(&build_mapping(n + 1, 1).unwrap(), &report, &hw).cycles;
        ensure((b - a - slope).abs() <= 1e-9 * slope.max(1.0), format!("temporal step {} is {}", n, b - a))?;
    }
    let n_sample = 12;
    let mut prev = None;
    for e in 1..=n_sample {
        let res = estimate_resources(&build_mapping(n_sample, e).unwrap(), &me, &hw).resources;
        if let Some(p) = prev {
            ensure(mcme::mapping::Resources::le(&p, &res), format!("resources drop at {} engines", e))?;
        }
        prev = Some(res);
    }
    let plan = build_mapping(n_sample, 2).unwrap();
    let by_depth: Vec<_> = (1..=2)
        .map(|d| {
            let me = insert_dropout(&base, DropoutConfig::mcd(0.75), d).unwrap();
            (me.dropout_layer_count(), estimate_resources(&plan, &me, &hw).resources)
        })
        .collect();
    for pair in by_depth.windows(2) {
        let ((la, a), (lb, b)) = (pair[0], pair[1]);
        ensure(lb > la, "depth did not add MCD layers")?;
        ensure(a.dsp == b.dsp && a.bram == b.bram, "DSP/BRAM change with MCD layer count")?;
        ensure(b.lut > a.lut, "LUT does not grow with MCD layer count")?;
    }
    Ok(format!("temporal slope {:.3} cycles/sample", slope))
}

fn ac9() -> Check {
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let train = three_class_2d(100, seed);
        // large enough that ECE sampling noise stays well below the margin
        let test = three_class_2d(500, seed + 1);
        let me = place_exits(&zoo::block_mlp(2, 16, 3, 3), &default_head_template()).map_err(|e| e.to_string())?;
        ensure(me.n_exit() == 3, format!("{} exits placed", me.n_exit()))?;
        let me = insert_dropout(&me, DropoutConfig::mcd(0.75), 1).map_err(|e| e.to_string())?;
        let hp = TrainParams {
            epochs: 60,
            seed,
            ..TrainParams::default()
        };
        let w = train_toy(&me, &train, &hp).map_err(|e| e.to_string())?;
        let exec = Executor::new(&me, &w, None).map_err(|e| e.to_string())?;
        let opts = EvalOptions {
            n_pass: 4,
            seed,
            noise: Some(train.noise_spec(100, seed)),
            ..EvalOptions::default()
        };
        let m = evaluate(&exec, &test, &opts).map_err(|e| e.to_string())?;
        let best_single = m.per_exit_accuracy.iter().cloned().fold(f64::MIN, f64::max);
        let final_ece = *m.per_exit_ece.last().unwrap();
        ensure(
            m.accuracy >= best_single - E2E_MARGIN,
            format!("seed {}: accuracy {:.3} vs best exit {:.3}", seed, m.accuracy, best_single),
        )?;
        ensure(
            m.ece <= final_ece + E2E_MARGIN,
            format!("seed {}: ECE {:.4} vs final exit {:.4}", seed, m.ece, final_ece),
        )?;
        lines.push(format!("s{} acc {:.3}/{:.3} ece {:.3}/{:.3}", seed, m.accuracy, best_single, m.ece, final_ece));
    }
    let train = three_class_2d(100, 11);
    let ctx = EvalContext {
        base_net: zoo::block_mlp(2, 16, 3, 3),
        head_template: default_head_template(),
        noise: train.noise_spec(100, 11),
        test: three_class_2d(50, 12),
        train,
        hw: HardwareModel::default(),
        train_params: TrainParams {
            epochs: 60,
            seed: 11,
            ..TrainParams::default()
        },
        dropout_depth: 1,
        num_masks: 8,
        channel_mode: mcme::explorer::ChannelMode::Slice,
        exit_mode: ExitMode::PerExit,
        ece_bins: 15,
        seed: 11,
    };
    let points = enumerate_design_points(&Grids::dropout_defaults()).map_err(|e| e.to_string())?;
    let results = explore(&points, &ctx, 4).map_err(|e| e.to_string())?;
    ensure(results.iter().all(|r| r.outcome.is_ok()), "a design point failed")?;
    let constraints = Constraints {
        min_accuracy: Some(0.0),
        ..Constraints::default()
    };
    let sel = optimal_selections(&results, &constraints).map_err(|e| e.to_string())?;
    let (a, e, p) = match (sel.acc_opt, sel.ece_opt, sel.ape_opt) {
        (Some(a), Some(e), Some(p)) => (a, e, p),
        _ => return Err("missing optimal selection".into()),
    };
    lines.push(format!("{} points; Acc-Opt #{} ECE-Opt #{} aPE-Opt #{}", results.len(), a, e, p));
    Ok(lines.join("; "))
}

fn ac10() -> Check {
    let mut r = rng(10);
    let mut worst = 0.0f64;
    for i in 0..5u64 {
        let input = r.random_range(2..5);
        let width = r.random_range(3..7);
        let blocks = r.random_range(2..4);
        let classes = r.random_range(2..5);
        let base = place_exits(&zoo::block_mlp(input, width, blocks, classes), &default_head_template())
            .map_err(|e| e.to_string())?;
        let cfg = if i % 2 == 0 {
            DropoutConfig::mcd([0.5, 0.75, 0.875][r.random_range(0..3)])
        } else {
            DropoutConfig::masksembles(2, 1.5)
        };
        let me = insert_dropout(&base, cfg, r.random_range(1..=2)).map_err(|e| e.to_string())?;
        let obj = Objective::new(&me).map_err(|e| e.to_string())?;
        // jitter away from zero biases so no ReLU sits exactly on its kink
        let params: Vec<f64> = obj
            .params_from(&WeightStore::init_for(&me, i))
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|p| p + r.random_range(-0.1..0.1))
            .collect();
        let xs: Vec<Vec<f32>> = (0..3).map(|_| (0..input).map(|_| r.random_range(-1.5f32..1.5)).collect()).collect();
        let batch: Vec<(&[f32], usize, u64)> = xs
            .iter()
            .enumerate()
            .map(|(j, x)| (x.as_slice(), r.random_range(0..classes), j as u64))
            .collect();
        let (_, g) = obj.loss_and_grad(&params, &batch, i);
        let h = 1e-6;
        let num: Vec<f64> = (0..params.len())
            .map(|k| {
                let mut p = params.clone();
                p[k] += h;
                let up = obj.loss(&p, &batch, i);
                p[k] -= 2.0 * h;
                (up - obj.loss(&p, &batch, i)) / (2.0 * h)
            })
            .collect();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: Vec<f64> = g.iter().zip(&num).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / (norm(&g) + norm(&num));
        ensure(rel <= TOL_GRAD, format!("net {} ({:?}): relative error {:e}", i, cfg, rel))?;
        worst = worst.max(rel);
    }
    Ok(format!("worst relative error {:.1e}", worst))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mcme"))
        .current_dir(dir)
        .env_remove("MCME_HW_MODEL")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("{:?}: {}", args, String::from_utf8_lossy(&out.stderr).trim()),
    )
}

fn collect_files(root: &Path, dir: &Path, into: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, into);
        } else {
            into.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
        }
    }
}

const EXPLORE_CONFIG: &str = r#"{
  "data": { "kind": "three_class_2d", "train_per_class": 40, "test_per_class": 20 },
  "block_width": 8,
  "grids": {
    "dropout_kinds": ["mcd", "masksembles"],
    "mcd_drop_rates": [0.25],
    "mask_scales": [2.0],
    "n_exit": [3],
    "n_pass": [2],
    "bitwidth": [null, 8],
    "mapping_engines": [2]
  },
  "constraints": { "min_accuracy": 0.0 },
  "priority": [{ "metric": "accuracy" }, { "metric": "ece" }],
  "seed": 5,
  "train": { "epochs": 15 },
  "num_masks": 4,
  "noise_count": 20
}
"#;

fn cli_session(dir: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    std::fs::write(dir.join("explore.json"), EXPLORE_CONFIG).map_err(|e| e.to_string())?;
    let steps: [&[&str]; 9] = [
        &["--seed", "9", "--out", "data", "synth", "--train-per-class", "60", "--test-per-class", "30", "--width", "8"],
        &["--out", "mcd", "transform", "data/network.json", "--dropout", "mcd", "--keep-rate", "0.75"],
        &["--out", "mask", "transform", "data/network.json", "--dropout", "masksembles", "--num-masks", "4", "--scale", "2"],
        &["--seed", "9", "--out", "w", "train", "mcd/multi_exit.json", "--data", "data/train.csv", "--epochs", "15"],
        &["--seed", "9", "--out", "eval", "evaluate", "mcd/multi_exit.json", "--weights", "w/weights.json", "--data", "data/test.csv", "--n-pass", "3", "--bits", "8"],
        &["--seed", "9", "--out", "eval_t", "evaluate", "mcd/multi_exit.json", "--weights", "w/weights.json", "--data", "data/test.csv", "--n-pass", "2", "--threshold", "0.9"],
        &["--seed", "9", "--jobs", "2", "--out", "x", "explore", "explore.json"],
        &["--out", "m", "map", "mask/multi_exit.json", "--n-pass", "4", "--engines", "2"],
        &["--seed", "9", "--out", "p", "emit", "mcd/multi_exit.json", "--n-pass", "2", "--engines", "3", "--bits", "8", "--metrics", "eval/metrics.json"],
    ];
    for args in steps {
        run_cli(dir, args)?;
    }
    let mut files = BTreeMap::new();
    collect_files(dir, dir, &mut files);
    Ok(files)
}

fn ac11() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fa = cli_session(a.path())?;
    let fb = cli_session(b.path())?;
    ensure(
        fa.keys().eq(fb.keys()),
        format!("file sets differ: {:?} vs {:?}", fa.keys(), fb.keys()),
    )?;
    let differing: Vec<String> = fa
        .iter()
        .filter(|(k, v)| fb[*k] != **v)
        .map(|(k, _)| k.display().to_string())
        .collect();
    ensure(differing.is_empty(), format!("differ: {}", differing.join(", ")))?;
    Ok(format!("7 commands, {} files byte-identical", fa.len()))
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    run: fn() -> Check,
    limit: Option<Duration>,
}

fn main() {
    let criteria = [
        Criterion { id: "AC1", name: "cost-model equivalence", run: ac1, limit: Some(LIMIT_AC1) },
        Criterion { id: "AC2", name: "reduction-rate algebra", run: ac2, limit: None },
        Criterion { id: "AC3", name: "MCD statistics", run: ac3, limit: Some(LIMIT_AC3) },
        Criterion { id: "AC4", name: "Masksembles properties", run: ac4, limit: None },
        Criterion { id: "AC5", name: "trunk-cache equivalence", run: ac5, limit: Some(LIMIT_AC5) },
        Criterion { id: "AC6", name: "sample-count law", run: ac6, limit: None },
        Criterion { id: "AC7", name: "metric oracles", run: ac7, limit: None },
        Criterion { id: "AC8", name: "mapping trends", run: ac8, limit: None },
        Criterion { id: "AC9", name: "end-to-end desk experiment", run: ac9, limit: Some(LIMIT_AC9) },
        Criterion { id: "AC10", name: "gradient check", run: ac10, limit: None },
        Criterion { id: "AC11", name: "CLI reproducibility", run: ac11, limit: None },
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {}", msg))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {:.1?}, limit {:?}", elapsed, limit)),
            (o, _) => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => {
                failed += 1;
                ("FAIL", d.clone())
            }
        };
        println!("{:<5} {} {:<28} [{:>7.2?}] {}", c.id, tag, c.name, elapsed, detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
