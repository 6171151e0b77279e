use std::fmt::Write as _;
use std::path::PathBuf;

use agformer::anchor::{louvain, modularity};
use agformer::attack::{attack_modes, robustness_csv, robustness_curve, TrainedRun, DEFAULT_RATES};
use agformer::bench::{mode_slope, scaling_sweep, timings_csv, AnchorCount, BenchMode, TimingRecord};
use agformer::train::{cross_validate, evaluate, mean_std, prepare_for_run, RunConfig};
use agformer::{par, Error, Result};
use clap::Args;

use crate::args::{load_dataset, parse_list, write_file, DataArgs, RunArgs};
use crate::run_dir::{load_run, save_run};

fn dataset_name(data: &DataArgs, cfg: Option<&RunConfig>) -> String {
    data.dataset
        .clone()
        .or_else(|| cfg.map(|c| c.dataset.clone()))
        .unwrap_or_else(|| "MUTAG".to_string())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,

    /// Output directory for results.csv, timing.csv, manifest.cfg and
    /// checkpoints.
    #[arg(long, default_value = "runs/train")]
    out: PathBuf,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let bundle = load_dataset(&a.run.data.data_dir, &cfg.dataset)?;
    log::info!(
        "{} {} anchors={} folds={} epochs={} seed={}",
        cfg.dataset,
        cfg.backbone,
        cfg.anchor_mode,
        cfg.folds,
        cfg.epochs,
        cfg.seed
    );
    let cv = par::with_workers(a.run.workers, || cross_validate(&bundle, &cfg))?;
    save_run(&a.out, &cfg, &cv)?;
    println!("{} {} {}: {}", cfg.dataset, cfg.backbone, cfg.anchor_mode, cv.summary());
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Directory written by `agf train`.
    #[arg(long)]
    run: PathBuf,

    /// Write per-fold accuracies here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let manifest = crate::run_dir::load_manifest(&a.run)?;
    let name = dataset_name(&a.data, Some(&manifest));
    let bundle = load_dataset(&a.data.data_dir, &name)?;
    let run = load_run(&a.run, &bundle)?;
    let graphs = prepare_for_run(&bundle, &run.cfg)?;
    let mut csv = String::from("fold,accuracy\n");
    let mut accs = Vec::new();
    for (model, split) in run.models.iter().zip(&run.splits) {
        let acc = evaluate(model, &graphs, &split.test)?;
        let _ = writeln!(csv, "{},{acc:.6}", split.fold);
        accs.push(acc);
    }
    let (mean, std) = mean_std(&accs);
    let _ = writeln!(csv, "mean,{mean:.6}\nstd,{std:.6}");
    match &a.out {
        Some(p) => write_file(p, &csv)?,
        None => print!("{csv}"),
    }
    println!("{name}: {:.2}±{:.2}", 100.0 * mean, 100.0 * std);
    Ok(())
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[command(flatten)]
    run: RunArgs,

    /// Train the anchor and full-attention models first (saved under
    /// <out>/anchor and <out>/full).
    #[arg(long, conflicts_with = "from")]
    retrain: bool,

    /// Directory holding `anchor` and `full` training runs to attack.
    #[arg(long)]
    from: Option<PathBuf>,

    /// Comma-separated edge insertion rates.
    #[arg(long, value_parser = parse_list::<f64>, default_value = "0,0.05,0.10,0.15,0.20")]
    flip_rates: Vec<Vec<f64>>,

    /// Output directory for robustness.csv.
    #[arg(long, default_value = "runs/attack")]
    out: PathBuf,
}

pub fn attack(a: AttackArgs) -> Result<()> {
    let rates: Vec<f64> = a.flip_rates.into_iter().flatten().collect();
    let rates = if rates.is_empty() { DEFAULT_RATES.to_vec() } else { rates };
    let cfg = a.run.resolve()?;
    let bundle = load_dataset(&a.run.data.data_dir, &cfg.dataset)?;
    let runs: Vec<TrainedRun> = if a.retrain {
        let mut runs = Vec::new();
        for mode_cfg in attack_modes(&cfg) {
            let cv = par::with_workers(a.run.workers, || cross_validate(&bundle, &mode_cfg))?;
            let run = TrainedRun {
                cfg: mode_cfg.clone(),
                models: cv.models.clone(),
                splits: cv.splits.clone(),
            };
            save_run(&a.out.join(run.label()), &mode_cfg, &cv)?;
            log::info!("{} clean accuracy {}", run.label(), cv.summary());
            runs.push(run);
        }
        runs
    } else {
        let from = a
            .from
            .as_ref()
            .ok_or_else(|| Error::Config("attack needs --retrain or --from <dir>".into()))?;
        ["anchor", "full"]
            .iter()
            .map(|m| load_run(&from.join(m), &bundle))
            .collect::<Result<_>>()?
    };
    let rows = par::with_workers(a.run.workers, || robustness_curve(&bundle, &runs, &rates, cfg.seed))?;
    let csv = robustness_csv(&rows);
    write_file(&a.out.join("robustness.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated node counts, ascending.
    #[arg(long, value_parser = parse_list::<usize>, default_value = "512,1024,2048,4096,8192")]
    sizes: Vec<Vec<usize>>,

    /// Fixed anchor count for the anchor mode.
    #[arg(long, default_value_t = 128)]
    anchors: usize,

    /// Edge probability of the synthetic graphs.
    #[arg(long, default_value_t = 0.01)]
    edge_rate: f64,

    /// Timed repetitions per point (after one warm-up).
    #[arg(long, default_value_t = 5)]
    reps: usize,

    /// Attention width.
    #[arg(long, default_value_t = 256)]
    dim: usize,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// CSV output path.
    #[arg(long, default_value = "runs/bench/timings.csv")]
    out: PathBuf,

    /// Also sweep with Louvain-derived anchor counts and write that CSV here.
    #[arg(long)]
    louvain_out: Option<PathBuf>,
}

fn report_slopes(records: &[TimingRecord]) {
    if records.len() >= 6 {
        if let (Ok(full), Ok(anchor)) = (
            mode_slope(records, BenchMode::Full),
            mode_slope(records, BenchMode::Anchor),
        ) {
            println!("log-log slope: full {full:.3}, anchor {anchor:.3}");
        }
    }
    let n_max = records.iter().map(|r| r.n).max().unwrap_or(0);
    let at = |m| records.iter().find(|r| r.mode == m && r.n == n_max).map(|r| r.median_seconds);
    if let (Some(a), Some(f)) = (at(BenchMode::Anchor), at(BenchMode::Full)) {
        println!("n={n_max}: anchor/full time ratio {:.3}", a / f);
    }
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let sizes: Vec<usize> = a.sizes.into_iter().flatten().collect();
    let records = scaling_sweep(&sizes, AnchorCount::Fixed(a.anchors), a.dim, a.reps, a.edge_rate, a.seed)?;
    let csv = timings_csv(&records);
    write_file(&a.out, &csv)?;
    print!("{csv}");
    report_slopes(&records);
    if let Some(path) = &a.louvain_out {
        let records = scaling_sweep(&sizes, AnchorCount::Louvain, a.dim, a.reps, a.edge_rate, a.seed)?;
        write_file(path, &timings_csv(&records))?;
        println!("louvain anchors:");
        print!("{}", timings_csv(&records));
        report_slopes(&records);
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct AnchorsArgs {
    #[command(flatten)]
    data: DataArgs,

    /// CSV output path.
    #[arg(long, default_value = "runs/anchors.csv")]
    out: PathBuf,
}

pub fn anchors(a: AnchorsArgs) -> Result<()> {
    let name = dataset_name(&a.data, None);
    let bundle = load_dataset(&a.data.data_dir, &name)?;
    let mut csv = String::from("graph_id,n,c,ratio,modularity\n");
    let mut ratios = Vec::with_capacity(bundle.graphs.len());
    for (i, g) in bundle.graphs.iter().enumerate() {
        let p = louvain(g, 0);
        let n = g.num_nodes();
        let c = p.num_communities();
        let ratio = c as f64 / n as f64;
        let q = match modularity(g, &p) {
            Ok(q) => format!("{q:.6}"),
            Err(_) => "nan".to_string(),
        };
        let _ = writeln!(csv, "{i},{n},{c},{ratio:.6},{q}");
        ratios.push(ratio);
    }
    write_file(&a.out, &csv)?;
    let (mean, _) = mean_std(&ratios);
    println!("{name}: {} graphs, mean anchor ratio C/N = {mean:.4}", ratios.len());
    Ok(())
}
