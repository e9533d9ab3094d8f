use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::info;
use rayon::prelude::*;
use slrl_core::data::{read_labels, save_dataset, write_labels, synth_multiview, MatrixFormat, MultiViewDataset, SynthSpec};
use slrl_core::metrics::{evaluate, summarize, MetricsReport, MetricsSummary};
use slrl_core::train::{ablate, gradcheck, save_checkpoint, train, AblationMode, TrainConfig, TrainReport};

use crate::args::EvalArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::{DataSource, Invocation, RunManifest};
use crate::project::pca_2d;

/// Gradient groups must agree with central differences below this.
pub const GRADCHECK_TOL: f64 = 1e-4;

/// Row-sum drift of Q, P or attention that counts as a broken run.
const ROW_SUM_TOL: f64 = 1e-9;

/// The small dataset gradcheck uses when none is given.
pub fn gradcheck_default_spec(seed: u64) -> SynthSpec {
    SynthSpec { clusters: 3, per_cluster: 4, view_dims: vec![5, 4], noise: 0.1, seed }
}

/// Writes the manifest, runs the invocation, then stamps the outcome.
pub fn execute(invocation: Invocation, out: &Path) -> CliResult {
    let manifest = RunManifest::new(invocation, out);
    manifest.write()?;
    let res = match &manifest.invocation {
        Invocation::Train { data, config, repeats } => run_train(data, config, *repeats, out),
        Invocation::Sweep { data, config, repeats, gammas, ks } => run_sweep(data, config, *repeats, gammas, ks, out),
        Invocation::Ablate { data, config, repeats } => run_ablate(data, config, *repeats, out),
        Invocation::Gradcheck { data, config } => run_gradcheck(data, config, out),
        Invocation::Synth { spec, binary } => run_synth(spec, *binary, out),
    };
    let code = match &res {
        Ok(()) => 0,
        Err(CliError::Usage(_)) => 2,
        Err(CliError::Failed(_)) => 1,
    };
    manifest.finish(code)?;
    res
}

fn write(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn with_seed(cfg: &TrainConfig, offset: usize) -> TrainConfig {
    TrainConfig { seed: cfg.seed.wrapping_add(offset as u64), ..cfg.clone() }
}

fn check_repeats(repeats: usize) -> CliResult {
    if repeats == 0 {
        return Err(CliError::usage("--repeats must be >= 1"));
    }
    Ok(())
}

fn require_labels(ds: &MultiViewDataset, command: &str) -> CliResult {
    if ds.labels().is_none() {
        return Err(CliError::usage(format!("{command} needs a labelled dataset")));
    }
    Ok(())
}

/// Fails the command if the run produced non-finite values or broke a
/// distribution invariant.
fn check_run(rep: &TrainReport) -> CliResult {
    if !rep.model.is_finite() {
        return Err(anyhow!("model parameters became non-finite").into());
    }
    for e in &rep.epochs {
        if !(e.recon.is_finite() && e.cluster.is_finite() && e.total.is_finite()) {
            return Err(anyhow!("non-finite loss at {:?} epoch {}", e.phase, e.epoch).into());
        }
        let worst = e.q_row_error.max(e.p_row_error).max(e.alpha_row_error);
        if worst > ROW_SUM_TOL {
            return Err(anyhow!("row sums drifted by {worst:e} at {:?} epoch {}", e.phase, e.epoch).into());
        }
    }
    Ok(())
}

fn run_metrics_block(rep: &TrainReport) -> String {
    let mut s = rep.metrics.map(|m| m.to_key_values()).unwrap_or_default();
    let joint = rep.joint().count();
    let _ = writeln!(s, "clusters {}", rep.clusters);
    let _ = writeln!(s, "joint_epochs {joint}");
    match rep.stopped_at {
        Some(e) => {
            let _ = writeln!(s, "stopped_at {e}");
        }
        None => s.push_str("stopped_at none\n"),
    }
    s
}

fn projection_csv(rep: &TrainReport, labels: Option<&[usize]>) -> CliResult<String> {
    let h = pca_2d(&rep.model.latent.h)?;
    let ht = pca_2d(&rep.ht)?;
    let mut s = String::from("sample,pred,label,h_x,h_y,ht_x,ht_y\n");
    for i in 0..h.len() {
        let label = labels.map(|l| l[i].to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{i},{},{label},{},{},{},{}",
            rep.predictions[i], h[i][0], h[i][1], ht[i][0], ht[i][1]
        );
    }
    Ok(s)
}

fn write_train_artifacts(rep: &TrainReport, ds: &MultiViewDataset, dir: &Path) -> CliResult {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("loss.csv"), &rep.loss_csv())?;
    write(&dir.join("metrics.txt"), &run_metrics_block(rep))?;
    write_labels(&dir.join("predictions.txt"), &rep.predictions)?;
    save_checkpoint(&rep.model, &dir.join("checkpoint"))?;
    write(&dir.join("projection.csv"), &projection_csv(rep, ds.labels())?)?;
    Ok(())
}

fn summary_line(s: &MetricsSummary) -> String {
    format!("runs,{}\n{},{}\n", MetricsSummary::csv_header(), s.runs, s.to_csv_cells())
}

pub fn run_train(data: &DataSource, cfg: &TrainConfig, repeats: usize, out: &Path) -> CliResult {
    check_repeats(repeats)?;
    let ds = data.load()?;
    let mut reports = Vec::new();
    for r in 0..repeats {
        let cfg_r = with_seed(cfg, r);
        info!("train: run {}/{repeats} seed {}", r + 1, cfg_r.seed);
        let rep = train(&ds, &cfg_r)?;
        check_run(&rep)?;
        let dir: PathBuf = if repeats == 1 { out.to_path_buf() } else { out.join(format!("repeat-{r}")) };
        write_train_artifacts(&rep, &ds, &dir)?;
        match &rep.metrics {
            Some(m) => println!("seed {}: {m}", cfg_r.seed),
            None => println!("seed {}: {} clusters, no labels to score", cfg_r.seed, rep.clusters),
        }
        if let Some(m) = rep.metrics {
            reports.push(m);
        }
    }
    if repeats > 1 {
        if let Some(s) = summarize(&reports) {
            println!("mean over {} runs: {s}", s.runs);
            write(&out.join("summary.csv"), &summary_line(&s))?;
        }
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

fn repeated(ds: &MultiViewDataset, cfg: &TrainConfig, repeats: usize) -> CliResult<Vec<MetricsReport>> {
    (0..repeats)
        .map(|r| {
            let rep = train(ds, &with_seed(cfg, r))?;
            check_run(&rep)?;
            rep.metrics.ok_or_else(|| CliError::usage("dataset has no labels"))
        })
        .collect()
}

pub fn run_sweep(
    data: &DataSource,
    cfg: &TrainConfig,
    repeats: usize,
    gammas: &[f64],
    ks: &[usize],
    out: &Path,
) -> CliResult {
    check_repeats(repeats)?;
    if gammas.is_empty() || ks.is_empty() {
        return Err(CliError::usage("sweep grids must be nonempty"));
    }
    let ds = data.load()?;
    require_labels(&ds, "sweep")?;
    let cells: Vec<(f64, usize)> = gammas.iter().flat_map(|&g| ks.iter().map(move |&k| (g, k))).collect();
    info!("sweep: {} cells x {repeats} repeats", cells.len());
    let rows: Vec<MetricsSummary> = cells
        .par_iter()
        .map(|&(gamma, k)| {
            let cell = TrainConfig { gamma, k, ..cfg.clone() };
            cell.validate()?;
            let reports = repeated(&ds, &cell, repeats)?;
            info!("sweep: gamma {gamma:e} k {k} done");
            Ok(summarize(&reports).expect("at least one repeat"))
        })
        .collect::<CliResult<_>>()?;

    let mut csv = format!("gamma,k,runs,{}\n", MetricsSummary::csv_header());
    for (&(gamma, k), s) in cells.iter().zip(&rows) {
        let _ = writeln!(csv, "{gamma:e},{k},{},{}", s.runs, s.to_csv_cells());
        println!("gamma {gamma:>8.0e}  k {k:>3}  {s}");
    }
    write(&out.join("grid.csv"), &csv)?;
    println!("grid in {}", out.join("grid.csv").display());
    Ok(())
}

pub fn run_ablate(data: &DataSource, cfg: &TrainConfig, repeats: usize, out: &Path) -> CliResult {
    check_repeats(repeats)?;
    let ds = data.load()?;
    require_labels(&ds, "ablate")?;
    let mut per_mode: Vec<Vec<MetricsReport>> = vec![Vec::new(); AblationMode::ALL.len()];
    for r in 0..repeats {
        let cfg_r = with_seed(cfg, r);
        info!("ablate: seed {}", cfg_r.seed);
        for (i, (_, rep)) in ablate(&ds, &cfg_r)?.into_iter().enumerate() {
            check_run(&rep)?;
            per_mode[i].push(rep.metrics.expect("labelled dataset"));
        }
    }
    let mut csv = format!("row,runs,{}\n", MetricsSummary::csv_header());
    for (mode, reports) in AblationMode::ALL.iter().zip(&per_mode) {
        let s = summarize(reports).expect("at least one repeat");
        let _ = writeln!(csv, "{},{},{}", mode.label(), s.runs, s.to_csv_cells());
        println!("{:<14} {s}", mode.label());
    }
    write(&out.join("ablation.csv"), &csv)?;
    Ok(())
}

pub fn run_gradcheck(data: &DataSource, cfg: &TrainConfig, out: &Path) -> CliResult {
    let ds = data.load()?;
    let rep = gradcheck(&ds, cfg)?;
    let mut text = String::new();
    for (name, err) in rep.groups() {
        let verdict = if err < GRADCHECK_TOL { "ok" } else { "FAIL" };
        let _ = writeln!(text, "{name:<10} {err:.3e} {verdict}");
    }
    let same = rep.loss.to_bits() == rep.loss_repeat.to_bits();
    let _ = writeln!(text, "loss       {} {}", rep.loss, if same { "repeatable" } else { "NOT repeatable" });
    print!("{text}");
    write(&out.join("gradcheck.txt"), &text)?;
    if rep.passes(GRADCHECK_TOL) {
        Ok(())
    } else {
        Err(anyhow!("gradient check failed: max error {:.3e} (tolerance {GRADCHECK_TOL:e})", rep.max_error()).into())
    }
}

pub fn run_synth(spec: &SynthSpec, binary: bool, out: &Path) -> CliResult {
    let ds = synth_multiview(spec)?;
    let format = if binary { MatrixFormat::Binary } else { MatrixFormat::Text };
    save_dataset(&ds, out, format)?;
    println!(
        "{} samples, {} clusters, views {:?} -> {}",
        ds.n_samples(),
        spec.clusters,
        ds.view_dims(),
        out.display()
    );
    Ok(())
}

pub fn run_eval(args: &EvalArgs) -> CliResult {
    let pred = read_labels(&args.pred)?;
    let truth = read_labels(&args.truth)?;
    if pred.len() != truth.len() {
        return Err(CliError::usage(format!(
            "{} has {} labels but {} has {}",
            args.pred.display(),
            pred.len(),
            args.truth.display(),
            truth.len()
        )));
    }
    let report = evaluate(&pred, &truth)?;
    let block = report.to_key_values();
    print!("{block}");
    if let Some(path) = &args.out {
        write(path, &block)?;
    }
    Ok(())
}
