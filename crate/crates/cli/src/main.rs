//! `mcme`: transform, train, evaluate, explore, map and emit multi-exit
//! Bayesian networks from the command line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mcme::data::{three_class_2d, Dataset};
use mcme::dropout::{load_mask_tables, mask_tables_to_json, DropoutConfig, Granularity, MaskSet};
use mcme::emitter::{emit_plan, render_report, Estimates};
use mcme::explorer::{
    build_spec, enumerate_design_points, explore, filter_and_rank, ledger_csv, ledger_json, optimal_selections,
    DesignPoint, ExploreConfig, Ranking, Selections,
};
use mcme::inference::{site_masks, Executor, ExitMode};
use mcme::mapping::{build_mapping, estimate_latency, estimate_resources, pareto_mappings, HardwareModel};
use mcme::metrics::{count_flops, evaluate, EvalOptions, MetricsReport, DEFAULT_ECE_BINS};
use mcme::netspec::{
    default_head_template, insert_dropout, load_multi_exit_file, load_network_file, place_exits, select_exits, zoo,
    MultiExitSpec, SiteLocation,
};
use mcme::tensor::{train_toy, QFormat, TrainParams, WeightStore};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "mcme", version, about = "Multi-exit MC-dropout / Masksembles network toolkit")]
struct Cli {
    /// Seed for data generation, training and MC sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for `explore`; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Hardware model JSON; defaults to built-in illustrative numbers.
    #[arg(long, global = true, env = "MCME_HW_MODEL")]
    hw: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Mcd,
    Masksembles,
}

#[derive(Clone, Copy, ValueEnum)]
enum Gran {
    Element,
    Channel,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    PerExit,
    EnsembleSoFar,
}

#[derive(Subcommand)]
enum Command {
    /// Write a toy dataset, a matching network and the default hardware model.
    Synth {
        #[arg(long, default_value_t = 100)]
        train_per_class: usize,
        #[arg(long, default_value_t = 50)]
        test_per_class: usize,
        /// Hidden width of the three-block MLP.
        #[arg(long, default_value_t = 16)]
        width: usize,
    },
    /// Turn a plain network into a multi-exit Bayesian spec.
    Transform {
        net: PathBuf,
        /// `auto` for one exit per pooling block, or the number of exits to keep.
        #[arg(long, default_value = "auto")]
        exits: String,
        #[arg(long, value_enum)]
        dropout: Kind,
        #[arg(long)]
        keep_rate: Option<f64>,
        #[arg(long, value_enum)]
        granularity: Option<Gran>,
        #[arg(long)]
        num_masks: Option<usize>,
        #[arg(long)]
        scale: Option<f64>,
        /// Dropout layers per exit, counted back from the exit.
        #[arg(long, default_value_t = 1)]
        depth: usize,
    },
    /// Train a spec on a labeled CSV with plain SGD.
    Train {
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch: usize,
    },
    /// Score a trained spec: accuracy, ECE, aPE and FLOPs.
    Evaluate {
        spec: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        n_pass: usize,
        #[arg(long)]
        bits: Option<u32>,
        /// Confidence threshold for early exiting.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum, default_value = "per-exit")]
        exit_mode: Mode,
        #[arg(long, default_value_t = DEFAULT_ECE_BINS)]
        ece_bins: usize,
        /// Gaussian-noise inputs for aPE; defaults to the dataset size.
        #[arg(long)]
        noise_count: Option<usize>,
    },
    /// Grid-search design points, rank them and emit the best plan.
    Explore { config: PathBuf },
    /// Spatial/temporal mapping estimates and the Pareto frontier.
    Map {
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        n_pass: usize,
        /// Engine count to estimate; the frontier is always written.
        #[arg(long)]
        engines: Option<usize>,
    },
    /// Write the accelerator plan and its report for one mapping.
    Emit {
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        n_pass: usize,
        #[arg(long, default_value_t = 1)]
        engines: usize,
        #[arg(long)]
        bits: Option<u32>,
        /// Metrics report to embed in the plan.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Infeasible(String),
    Internal(mcme::Error),
}

impl From<mcme::Error> for Failure {
    fn from(e: mcme::Error) -> Self {
        Failure::Internal(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {}", m),
            Failure::Infeasible(m) => write!(f, "{}", m),
            Failure::Internal(e) => write!(f, "{}", e),
        }
    }
}

type Res<T = ()> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Res<T> {
    Err(Failure::Usage(msg.into()))
}

struct Ctx {
    seed: u64,
    jobs: usize,
    out: PathBuf,
    hw: Option<PathBuf>,
}

impl Ctx {
    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Res<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| mcme::Error::Io {
            path: self.out.clone(),
            source: e,
        })?;
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|e| mcme::Error::Io {
            path: path.clone(),
            source: e,
        })?;
        Ok(path)
    }

    fn hardware(&self) -> Res<HardwareModel> {
        Ok(match &self.hw {
            Some(p) => HardwareModel::load(p)?,
            None => HardwareModel::default(),
        })
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

/// Mask tables referenced by the spec, resolved against the spec's directory.
fn spec_masks(me: &MultiExitSpec, spec_path: &Path) -> Res<Option<BTreeMap<String, MaskSet>>> {
    match &me.mask_file {
        None => Ok(None),
        Some(f) => {
            let p = spec_path.parent().unwrap_or(Path::new(".")).join(f);
            Ok(Some(load_mask_tables(&p)?))
        }
    }
}

fn qformat(bits: Option<u32>) -> Res<Option<QFormat>> {
    Ok(bits.map(QFormat::for_bitwidth).transpose()?)
}

fn cmd_synth(ctx: &Ctx, train_per_class: usize, test_per_class: usize, width: usize) -> Res {
    if train_per_class == 0 || test_per_class == 0 || width == 0 {
        return usage("sizes must be positive");
    }
    let train = three_class_2d(train_per_class, ctx.seed);
    let test = three_class_2d(test_per_class, ctx.seed.wrapping_add(1));
    std::fs::create_dir_all(&ctx.out).map_err(|e| mcme::Error::Io {
        path: ctx.out.clone(),
        source: e,
    })?;
    train.save_csv(&ctx.out.join("train.csv"))?;
    test.save_csv(&ctx.out.join("test.csv"))?;
    ctx.write("network.json", zoo::block_mlp(2, width, 3, 3).to_json() + "\n")?;
    ctx.write("hardware.json", HardwareModel::default().to_json())?;
    println!(
        "wrote train.csv ({} rows), test.csv ({} rows), network.json, hardware.json to {}",
        train.len(),
        test.len(),
        ctx.out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_transform(
    ctx: &Ctx,
    net: &Path,
    exits: &str,
    kind: Kind,
    keep_rate: Option<f64>,
    granularity: Option<Gran>,
    num_masks: Option<usize>,
    scale: Option<f64>,
    depth: usize,
) -> Res {
    let cfg = match kind {
        Kind::Mcd => {
            if num_masks.is_some() || scale.is_some() {
                return usage("--num-masks/--scale apply to masksembles only");
            }
            let Some(keep_rate) = keep_rate else {
                return usage("--dropout mcd needs --keep-rate");
            };
            DropoutConfig::Mcd {
                keep_rate,
                granularity: match granularity {
                    Some(Gran::Element) => Granularity::Element,
                    Some(Gran::Channel) | None => Granularity::Channel,
                },
                inverted: false,
            }
        }
        Kind::Masksembles => {
            if keep_rate.is_some() || granularity.is_some() {
                return usage("--keep-rate/--granularity apply to mcd only");
            }
            match (num_masks, scale) {
                (Some(n), Some(s)) => DropoutConfig::masksembles(n, s),
                _ => return usage("--dropout masksembles needs --num-masks and --scale"),
            }
        }
    };
    let net = load_network_file(net)?;
    let all = place_exits(&net, &default_head_template())?;
    let me = match exits {
        "auto" => all,
        n => match n.parse::<usize>() {
            Ok(n) => select_exits(&all, n)?,
            Err(_) => return usage(format!("--exits expects `auto` or a count, got `{}`", n)),
        },
    };
    let mut me = insert_dropout(&me, cfg, depth)?;
    let masks = site_masks(&me)?;
    if !masks.is_empty() {
        ctx.write("masks.json", mask_tables_to_json(&masks))?;
        me.mask_file = Some("masks.json".into());
    }
    ctx.write("multi_exit.json", me.to_json() + "\n")?;

    let flops = count_flops(&me)?;
    println!("exits: {}", me.n_exit());
    println!("dropout sites: {}", me.dropout_layer_count());
    for s in me.dropout_sites()? {
        let place = match s.location {
            SiteLocation::Head { .. } => "head",
            SiteLocation::Trunk { .. } => "trunk",
        };
        println!("  exit {} {} {} {:?}", s.exit_index, place, s.id, s.shape);
    }
    println!("flop_main: {}", flops.flop_main);
    println!("flop_exit: {} {:?}", flops.flop_exit_total, flops.per_exit);
    println!("alpha: {:.6}", flops.alpha);
    Ok(())
}

fn cmd_train(ctx: &Ctx, spec: &Path, data: &Path, lr: f64, epochs: usize, batch: usize) -> Res {
    let me = load_multi_exit_file(spec)?;
    let data = Dataset::load_csv(data, Some(me.trunk.input_shape.clone()))?;
    let hp = TrainParams {
        lr,
        epochs,
        batch,
        seed: ctx.seed,
    };
    let store = train_toy(&me, &data, &hp)?;
    std::fs::create_dir_all(&ctx.out).map_err(|e| mcme::Error::Io {
        path: ctx.out.clone(),
        source: e,
    })?;
    let path = store.save(&ctx.out, "weights")?;
    println!("trained {} tensors on {} samples -> {}", store.tensor_count(), data.len(), path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    ctx: &Ctx,
    spec: &Path,
    weights: &Path,
    data: &Path,
    n_pass: usize,
    bits: Option<u32>,
    threshold: Option<f64>,
    mode: Mode,
    ece_bins: usize,
    noise_count: Option<usize>,
) -> Res {
    let me = load_multi_exit_file(spec)?;
    let store = WeightStore::load(weights)?;
    let data = Dataset::load_csv(data, Some(me.trunk.input_shape.clone()))?;
    let mut exec = Executor::new(&me, &store, qformat(bits)?)?;
    if let Some(m) = spec_masks(&me, spec)? {
        exec = exec.with_masks(m)?;
    }
    let opts = EvalOptions {
        n_pass,
        seed: ctx.seed,
        ece_bins,
        threshold,
        exit_mode: match mode {
            Mode::PerExit => ExitMode::PerExit,
            Mode::EnsembleSoFar => ExitMode::EnsembleSoFar,
        },
        noise: Some(data.noise_spec(noise_count.unwrap_or(data.len()), ctx.seed)),
        base_flops: None,
    };
    let report = evaluate(&exec, &data, &opts)?;
    ctx.write("metrics.json", report.to_json())?;
    let mut csv = MetricsReport::csv_header().join(",") + "\n";
    csv += &(report.csv_record().join(",") + "\n");
    ctx.write("metrics.csv", csv)?;
    println!(
        "accuracy {:.4}  ece {:.4}  ape {:.4}  flops_fraction {:.4}  n_sample {}",
        report.accuracy, report.ece, report.ape, report.flops_fraction, report.n_sample
    );
    Ok(())
}

#[derive(Serialize)]
struct RankingFile<'a> {
    ranking: &'a Ranking,
    selections: &'a Selections,
    best: Option<&'a DesignPoint>,
}

fn cmd_explore(ctx: &Ctx, config: &Path) -> Res {
    let cfg = ExploreConfig::load(config)?;
    let hw = match &ctx.hw {
        Some(p) => Some(HardwareModel::load(p)?),
        None => None,
    };
    let ectx = cfg.context(hw)?;
    let points = enumerate_design_points(&cfg.grids)?;
    let results = explore(&points, &ectx, ctx.jobs)?;
    ctx.write("ledger.csv", ledger_csv(&results)?)?;
    ctx.write("ledger.json", ledger_json(&results))?;
    let ranking = filter_and_rank(&results, &cfg.constraints, &cfg.priority)?;
    let selections = optimal_selections(&results, &cfg.constraints)?;
    let best = ranking.best.map(|i| &results[i]);
    ctx.write(
        "ranking.json",
        pretty(&RankingFile {
            ranking: &ranking,
            selections: &selections,
            best: best.map(|r| &r.point),
        }),
    )?;
    let ok = results.iter().filter(|r| r.evaluation().is_some()).count();
    println!(
        "{} points: {} evaluated, {} failed, {} infeasible, {} feasible",
        results.len(),
        ok,
        ranking.failed,
        ranking.infeasible,
        ranking.order.len()
    );
    let Some(best) = best else {
        return Err(Failure::Infeasible("no feasible point satisfies the constraints".into()));
    };
    let eval = best.evaluation().expect("ranked points are evaluated");
    let me = build_spec(&best.point, &ectx, best.point.channel_fraction)?;
    let plan = emit_plan(
        &best.point,
        &eval.mapping,
        &me,
        None,
        &Estimates {
            flops: eval.flops.clone(),
            latency: eval.latency,
            resources: eval.resources,
            metrics: Some(eval.metrics.clone()),
        },
        &ectx.hw,
        cfg.seed,
    )?;
    ctx.write("best.multi_exit.json", me.to_json() + "\n")?;
    ctx.write("best.plan.json", plan.to_json())?;
    ctx.write("best.plan.txt", render_report(&plan))?;
    println!("best: #{} {}", best.index, best.point.label());
    let show = |name: &str, i: Option<usize>| match i {
        Some(i) => println!("{}: #{} {}", name, i, results[i].point.label()),
        None => println!("{}: -", name),
    };
    show("acc-opt", selections.acc_opt);
    show("ece-opt", selections.ece_opt);
    show("ape-opt", selections.ape_opt);
    Ok(())
}

#[derive(Serialize)]
struct MappingFile {
    n_sample: usize,
    selected: Option<mcme::mapping::ParetoPoint>,
    fits: Option<bool>,
    frontier: Vec<mcme::mapping::ParetoPoint>,
}

fn cmd_map(ctx: &Ctx, spec: &Path, n_pass: usize, engines: Option<usize>) -> Res {
    let me = load_multi_exit_file(spec)?;
    let hw = ctx.hardware()?;
    if n_pass == 0 {
        return usage("--n-pass must be at least 1");
    }
    let n_sample = n_pass * me.n_exit();
    let flops = count_flops(&me)?;
    let frontier = pareto_mappings(n_sample, &flops, &hw)?;
    let (selected, fits) = match engines {
        Some(e) => {
            let plan = build_mapping(n_sample, e)?;
            let res = estimate_resources(&plan, &me, &hw);
            let p = mcme::mapping::ParetoPoint {
                latency: estimate_latency(&plan, &flops, &hw),
                resources: res.resources,
                plan,
            };
            (Some(p), Some(res.fits))
        }
        None => (None, None),
    };
    ctx.write(
        "mapping.json",
        pretty(&MappingFile {
            n_sample,
            selected: selected.clone(),
            fits,
            frontier: frontier.clone(),
        }),
    )?;
    println!("n_sample {}", n_sample);
    println!("{:>8} {:>10} {:>14} {:>8}", "engines", "strategy", "cycles", "dsp");
    for p in &frontier {
        println!(
            "{:>8} {:>10} {:>14.1} {:>8.0}",
            p.plan.n_engines,
            format!("{:?}", p.plan.strategy).to_lowercase(),
            p.latency.cycles,
            p.resources.dsp
        );
    }
    if let (Some(p), Some(fits)) = (selected, fits) {
        println!(
            "selected: {} engines, {:.1} cycles, {:.6} ms{}",
            p.plan.n_engines,
            p.latency.cycles,
            p.latency.ms,
            if fits { "" } else { " (over budget)" }
        );
    }
    Ok(())
}

fn cmd_emit(ctx: &Ctx, spec: &Path, n_pass: usize, engines: usize, bits: Option<u32>, metrics: Option<&Path>) -> Res {
    let me = load_multi_exit_file(spec)?;
    let hw = ctx.hardware()?;
    let dp = DesignPoint::for_spec(&me, n_pass, bits, engines, None)?;
    qformat(bits)?;
    let plan = build_mapping(dp.n_sample(), engines)?;
    let flops = count_flops(&me)?;
    let metrics = match metrics {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| mcme::Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            Some(
                serde_json::from_str::<MetricsReport>(&text)
                    .map_err(|e| mcme::Error::Parse(format!("{}: {}", p.display(), e)))?,
            )
        }
        None => None,
    };
    let est = Estimates {
        latency: estimate_latency(&plan, &flops, &hw),
        resources: estimate_resources(&plan, &me, &hw),
        flops,
        metrics,
    };
    let masks = spec_masks(&me, spec)?;
    let doc = emit_plan(&dp, &plan, &me, masks.as_ref(), &est, &hw, ctx.seed)?;
    ctx.write("accelerator.plan.json", doc.to_json())?;
    ctx.write("accelerator.plan.txt", render_report(&doc))?;
    println!(
        "{} layers, {} dropout units, {:.1} cycles{}",
        doc.layers.len(),
        doc.dropout_units.len(),
        doc.estimates.latency.cycles,
        if doc.estimates.resources.fits { "" } else { " - WARNING: over budget" }
    );
    Ok(())
}

fn run(cli: Cli) -> Res {
    if cli.jobs == 0 {
        return usage("--jobs must be at least 1");
    }
    let ctx = Ctx {
        seed: cli.seed,
        jobs: cli.jobs,
        out: cli.out,
        hw: cli.hw,
    };
    match cli.cmd {
        Command::Synth {
            train_per_class,
            test_per_class,
            width,
        } => cmd_synth(&ctx, train_per_class, test_per_class, width),
        Command::Transform {
            net,
            exits,
            dropout,
            keep_rate,
            granularity,
            num_masks,
            scale,
            depth,
        } => cmd_transform(&ctx, &net, &exits, dropout, keep_rate, granularity, num_masks, scale, depth),
        Command::Train {
            spec,
            data,
            lr,
            epochs,
            batch,
        } => cmd_train(&ctx, &spec, &data, lr, epochs, batch),
        Command::Evaluate {
            spec,
            weights,
            data,
            n_pass,
            bits,
            threshold,
            exit_mode,
            ece_bins,
            noise_count,
        } => cmd_evaluate(
            &ctx, &spec, &weights, &data, n_pass, bits, threshold, exit_mode, ece_bins, noise_count,
        ),
        Command::Explore { config } => cmd_explore(&ctx, &config),
        Command::Map { spec, n_pass, engines } => cmd_map(&ctx, &spec, n_pass, engines),
        Command::Emit {
            spec,
            n_pass,
            engines,
            bits,
            metrics,
        } => cmd_emit(&ctx, &spec, n_pass, engines, bits, metrics.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f);
            ExitCode::from(match f {
                Failure::Usage(_) => 2,
                Failure::Infeasible(_) => 3,
                Failure::Internal(_) => 1,
            })
        }
    }
}
