use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rsgslm::config::{parse_synth_spec, synth_spec_to_string, RunConfig};
use rsgslm::dataset::{generate_synthetic, load_dataset, save_dataset, MultiViewDataset, SplitSpec};
use rsgslm::experiment::{
    self, build_artifacts, run_method, split_seeds, AblationRow, Method, PipelineArtifacts, SweepCell, Summary,
    LAMBDA_GRID, W_RANGE_GRID,
};
use rsgslm::io;
use rsgslm::trainer::{self, GradCheckSpec, RunResult, StageTimings};
use rsgslm::{DMatrix, Error};
use serde_json::{json, Value};

use crate::store::{self, Manifest};

/// Arguments shared by every command that reads a dataset.
#[derive(Debug, Clone)]
pub struct DataArgs {
    pub data: PathBuf,
    pub config_path: Option<PathBuf>,
    pub root: PathBuf,
    pub command: String,
}

pub struct Loaded {
    pub dataset: MultiViewDataset,
    pub config: RunConfig,
    pub fingerprint: String,
}

/// Usage problem detected after argument parsing (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

impl DataArgs {
    pub fn load(&self) -> Result<Loaded> {
        let config = load_config(self.config_path.as_deref())?;
        let dataset = load_dataset(&self.data)?.normalize_columns();
        let fingerprint = dataset.fingerprint();
        Ok(Loaded {
            dataset,
            config,
            fingerprint,
        })
    }
}

fn split_spec(config: &RunConfig, k: usize) -> SplitSpec {
    SplitSpec {
        seed: split_seeds(&config.split, k + 1)[k],
        ..config.split
    }
}

pub fn synth(spec_path: &Path, out: &Path) -> Result<()> {
    let text = io::read_string(spec_path)?;
    let spec = parse_synth_spec(&text, spec_path)?;
    let dataset = generate_synthetic(&spec)?;
    save_dataset(&dataset, out)?;
    io::write_string(&out.join("synth.txt"), &synth_spec_to_string(&spec))?;
    println!(
        "wrote {} views ({} rows, {} classes) to {}",
        dataset.num_views(),
        dataset.n(),
        dataset.num_classes,
        out.display()
    );
    Ok(())
}

pub fn graphs(ctx: &DataArgs, runs: usize, force: bool) -> Result<()> {
    let Loaded {
        dataset,
        config,
        fingerprint,
    } = ctx.load()?;
    let hash = config.graph_hash();
    for k in 0..runs {
        let spec = split_spec(&config, k);
        let dir = store::split_dir(&ctx.root, k);
        if !force {
            if let Some(m) = store::read_manifest(&dir)? {
                if m["config_hash"] == json!(hash) && m["dataset_fingerprint"] == json!(fingerprint) {
                    println!("split {k}: up to date in {}", dir.display());
                    continue;
                }
            }
        }
        let ds = dataset.make_split(&spec)?;
        let artifacts = build_artifacts(&ds, &config.train)?;
        let files = store::save_split_artifacts(&dir, &ds, &artifacts)?;
        let traces: Vec<Value> = artifacts
            .view_graphs
            .iter()
            .zip(&artifacts.traces)
            .map(|(g, t)| {
                json!({
                    "smoothness_trace": t,
                    "objective_trace": g.objective_trace,
                    "seconds": g.seconds,
                })
            })
            .collect();
        Manifest {
            command: ctx.command.clone(),
            config_hash: hash.clone(),
            dataset_fingerprint: fingerprint.clone(),
            seeds: vec![spec.seed],
            files: Vec::new(),
            extra: json!({
                "config": config.to_canonical_string(),
                "alphas": artifacts.fused.alphas,
                "views": traces,
                "seconds": artifacts.timings,
            }),
        }
        .write(&dir, &files)?;
        println!(
            "split {k}: {} view graphs + fused graph written to {}",
            artifacts.view_graphs.len(),
            dir.display()
        );
    }
    Ok(())
}

/// Checks that split `k` has graph artifacts built from this dataset and
/// configuration; returns the split's manifest.
fn check_artifacts(ctx: &DataArgs, loaded: &Loaded, k: usize) -> Result<Value> {
    let dir = store::split_dir(&ctx.root, k);
    let hint = format!(
        "run `rsgslm graphs --data {} --runs {}` first",
        ctx.data.display(),
        k + 1
    );
    let manifest = store::read_manifest(&dir)?
        .ok_or_else(|| Error::Data(format!("no graph artifacts in {}; {hint}", dir.display())))?;
    if manifest["dataset_fingerprint"] != json!(loaded.fingerprint) {
        return Err(Error::Data(format!("graph artifacts in {} belong to another dataset; {hint}", dir.display())).into());
    }
    if manifest["config_hash"] != json!(loaded.config.graph_hash()) {
        return Err(Error::Data(format!(
            "graph artifacts in {} were built with different solver/renode/split settings; {hint} with --force",
            dir.display()
        ))
        .into());
    }
    Ok(manifest)
}

fn check_all_artifacts(ctx: &DataArgs, loaded: &Loaded, runs: usize) -> Result<()> {
    (0..runs).try_for_each(|k| check_artifacts(ctx, loaded, k).map(|_| ()))
}

/// Loads the graph artifacts of split `k` and the dataset with that split.
fn artifacts_for(ctx: &DataArgs, loaded: &Loaded, k: usize) -> Result<(MultiViewDataset, PipelineArtifacts)> {
    let manifest = check_artifacts(ctx, loaded, k)?;
    let dir = store::split_dir(&ctx.root, k);
    let (split, mut artifacts) =
        store::load_split_artifacts(&dir, loaded.dataset.num_views(), loaded.dataset.n())?;
    if let Ok(t) = serde_json::from_value::<StageTimings>(manifest["extra"]["seconds"].clone()) {
        artifacts.timings = t;
    }
    let ds = loaded.dataset.clone().with_split(split)?;
    Ok((ds, artifacts))
}

fn loss_rows(k: usize, r: &RunResult) -> Vec<Vec<String>> {
    r.epoch_records
        .iter()
        .map(|e| {
            vec![
                k.to_string(),
                e.member.to_string(),
                e.epoch.to_string(),
                io::fmt_f64(e.loss.w_p),
                io::fmt_f64(e.loss.ce_renode),
                io::fmt_f64(e.loss.pseudo),
                io::fmt_f64(e.loss.smooth),
                io::fmt_f64(e.loss.total),
                io::fmt_f64(e.train_accuracy),
                io::fmt_f64(e.val_accuracy),
                io::fmt_f64(e.test_accuracy),
            ]
        })
        .collect()
}

const LOSS_HEADER: [&str; 11] = [
    "split",
    "member",
    "epoch",
    "w_p",
    "ce_renode",
    "pseudo",
    "smooth",
    "total",
    "train_accuracy",
    "val_accuracy",
    "test_accuracy",
];

fn summary_json(s: &Summary) -> Value {
    json!({ "mean": s.mean, "std": s.std, "count": s.count, "percent": s.percent() })
}

fn run_id(prefix: &str, loaded: &Loaded) -> String {
    format!("{prefix}-{}-{}", &loaded.config.hash()[..12], &loaded.fingerprint[..8])
}

fn write_config_snapshot(dir: &Path, config: &RunConfig) -> Result<PathBuf> {
    let path = dir.join("config.txt");
    io::write_string(&path, &config.to_canonical_string())?;
    Ok(path)
}

pub fn train(ctx: &DataArgs, method: Method, runs: usize, id: Option<String>) -> Result<PathBuf> {
    let loaded = ctx.load()?;
    let config = &loaded.config;
    let id = id.unwrap_or_else(|| run_id(method.as_str(), &loaded));
    let dir = store::run_dir(&ctx.root, &id);
    if method.needs_view_graphs() {
        check_all_artifacts(ctx, &loaded, runs)?;
    }
    let mut files = vec![write_config_snapshot(&dir, config)?];

    let mut losses = Vec::new();
    let mut per_run = Vec::new();
    let mut seeds = Vec::new();
    let mut test = Vec::new();
    let mut val = Vec::new();
    for k in 0..runs {
        let (ds, artifacts) = if method.needs_view_graphs() {
            let (ds, a) = artifacts_for(ctx, &loaded, k)?;
            (ds, Some(a))
        } else {
            (loaded.dataset.make_split(&split_spec(config, k))?, None)
        };
        let seed = split_spec(config, k).seed;
        let r = run_method(&ds, artifacts.as_ref(), method, &config.train)?;
        let ckpt = dir.join("checkpoints").join(format!("split_{k}"));
        if r.best_params.len() == 1 {
            files.extend(r.best_params[0].save(&ckpt)?);
        } else {
            for (m, p) in r.best_params.iter().enumerate() {
                files.extend(p.save(&ckpt.join(format!("member_{m}")))?);
            }
        }
        let z = ckpt.join("Z.csv");
        io::write_matrix(&z, &r.predictions)?;
        files.push(z);
        losses.extend(loss_rows(k, &r));
        println!(
            "split {k} (seed {seed}): val {:.4} test {:.4} best epoch {} of {}",
            r.best_val_accuracy, r.test_accuracy, r.best_epoch, r.epochs_ran
        );
        per_run.push(json!({
            "split": k,
            "split_seed": seed,
            "best_val_accuracy": r.best_val_accuracy,
            "test_accuracy": r.test_accuracy,
            "best_epoch": r.best_epoch,
            "epochs_ran": r.epochs_ran,
            "seconds": r.timings,
        }));
        seeds.push(seed);
        test.push(r.test_accuracy);
        val.push(r.best_val_accuracy);
    }

    let losses_path = dir.join("losses.csv");
    io::write_table(&losses_path, &LOSS_HEADER, &losses)?;
    files.push(losses_path);
    let test_summary = Summary::of(&test);
    let metrics = json!({
        "method": method.as_str(),
        "runs": runs,
        "split_seeds": seeds,
        "test_accuracy_mean": test_summary.mean,
        "test_accuracy_std": test_summary.std,
        "test_accuracy": summary_json(&test_summary),
        "val_accuracy": summary_json(&Summary::of(&val)),
        "per_run": per_run,
    });
    let metrics_path = dir.join("metrics.json");
    store::write_json(&metrics_path, &metrics)?;
    files.push(metrics_path);
    Manifest {
        command: ctx.command.clone(),
        config_hash: config.hash(),
        dataset_fingerprint: loaded.fingerprint.clone(),
        seeds: seeds.iter().copied().chain([config.train.seed]).collect(),
        files: Vec::new(),
        extra: json!({
            "method": method.as_str(),
            "runs": runs,
            "data": ctx.data.display().to_string(),
            "artifact_root": ctx.root.display().to_string(),
        }),
    }
    .write(&dir, &files)?;
    println!("{method}: test accuracy {} over {runs} run(s); outputs in {}", test_summary.percent(), dir.display());
    Ok(dir)
}

fn flags_cells(row: &AblationRow) -> Vec<String> {
    let f = row.flags;
    [f.smooth, f.pseudo, f.renode, f.oracle]
        .iter()
        .map(|b| if *b { "1" } else { "0" }.to_string())
        .collect()
}

pub fn ablate(ctx: &DataArgs, runs: usize) -> Result<PathBuf> {
    let loaded = ctx.load()?;
    check_all_artifacts(ctx, &loaded, runs)?;
    let dir = store::run_dir(&ctx.root, &run_id("ablate", &loaded));
    let mut files = vec![write_config_snapshot(&dir, &loaded.config)?];
    let mut cells = Vec::new();
    let mut per_row: Vec<Vec<f64>> = vec![Vec::new(); experiment::ablation_rows().len()];
    let mut seeds = Vec::new();
    for k in 0..runs {
        let (ds, artifacts) = artifacts_for(ctx, &loaded, k)?;
        let seed = split_spec(&loaded.config, k).seed;
        seeds.push(seed);
        let rows = experiment::run_ablation_suite(&ds, &artifacts, &loaded.config.train)?;
        for (i, row) in rows.iter().enumerate() {
            let mut cell = vec![(i + 1).to_string()];
            cell.extend(flags_cells(row));
            cell.extend([
                k.to_string(),
                seed.to_string(),
                row.seed.to_string(),
                io::fmt_f64(row.val_accuracy),
                io::fmt_f64(row.test_accuracy),
                row.epochs_ran.to_string(),
            ]);
            cells.push(cell);
            per_row[i].push(row.test_accuracy);
        }
    }
    let cells_path = dir.join("ablation_runs.csv");
    io::write_table(
        &cells_path,
        &[
            "row",
            "smooth",
            "pseudo",
            "renode",
            "oracle",
            "split",
            "split_seed",
            "seed",
            "val_accuracy",
            "test_accuracy",
            "epochs_ran",
        ],
        &cells,
    )?;
    files.push(cells_path);

    let mut table = Vec::new();
    for (i, flags) in experiment::ablation_rows().iter().enumerate() {
        let s = Summary::of(&per_row[i]);
        let onoff = |b: bool| if b { "1" } else { "0" }.to_string();
        table.push(vec![
            (i + 1).to_string(),
            onoff(flags.smooth),
            onoff(flags.pseudo),
            onoff(flags.renode),
            onoff(flags.oracle),
            io::fmt_f64(s.mean),
            io::fmt_f64(s.std),
            s.percent(),
        ]);
        println!(
            "row {:>2}  smooth={} pseudo={} renode={} oracle={}  {}",
            i + 1,
            onoff(flags.smooth),
            onoff(flags.pseudo),
            onoff(flags.renode),
            onoff(flags.oracle),
            s.percent()
        );
    }
    let table_path = dir.join("ablation.csv");
    io::write_table(
        &table_path,
        &["row", "smooth", "pseudo", "renode", "oracle", "mean", "std", "percent"],
        &table,
    )?;
    files.push(table_path);
    Manifest {
        command: ctx.command.clone(),
        config_hash: loaded.config.hash(),
        dataset_fingerprint: loaded.fingerprint.clone(),
        seeds: seeds.into_iter().chain([loaded.config.train.seed]).collect(),
        files: Vec::new(),
        extra: json!({ "runs": runs }),
    }
    .write(&dir, &files)?;
    println!("ablation written to {}", dir.display());
    Ok(dir)
}

fn sweep_rows(cells: &[SweepCell], split_seed: u64, w_min: f64) -> Vec<Vec<String>> {
    cells
        .iter()
        .map(|c| {
            vec![
                io::fmt_f64(c.lambda1),
                io::fmt_f64(c.lambda2),
                io::fmt_f64(w_min),
                io::fmt_f64(w_min + c.w_range),
                io::fmt_f64(c.w_range),
                split_seed.to_string(),
                c.seed.to_string(),
                io::fmt_f64(c.val_accuracy),
                io::fmt_f64(c.test_accuracy),
            ]
        })
        .collect()
}

const SWEEP_HEADER: [&str; 9] = [
    "lambda1",
    "lambda2",
    "w_min",
    "w_max",
    "w_range",
    "split_seed",
    "seed",
    "val_accuracy",
    "test_accuracy",
];

pub fn sweep(ctx: &DataArgs, k: usize) -> Result<PathBuf> {
    let loaded = ctx.load()?;
    let (ds, artifacts) = artifacts_for(ctx, &loaded, k)?;
    let cfg = &loaded.config.train;
    let split_seed = split_spec(&loaded.config, k).seed;
    let dir = store::run_dir(&ctx.root, &format!("{}-split{k}", run_id("sweep", &loaded)));
    let mut files = vec![write_config_snapshot(&dir, &loaded.config)?];

    let grid = experiment::sweep_lambdas(&ds, &artifacts, cfg, &LAMBDA_GRID)?;
    let grid_path = dir.join("lambda_grid.csv");
    io::write_table(&grid_path, &SWEEP_HEADER, &sweep_rows(&grid, split_seed, cfg.renode.w_min))?;
    files.push(grid_path);
    let best = grid
        .iter()
        .max_by(|a, b| a.val_accuracy.total_cmp(&b.val_accuracy))
        .expect("non-empty grid");
    println!(
        "lambda grid: {} cells, best val {:.4} at lambda1={:e} lambda2={:e}",
        grid.len(),
        best.val_accuracy,
        best.lambda1,
        best.lambda2
    );

    let w = experiment::sweep_w_range(&ds, &artifacts, cfg, &W_RANGE_GRID)?;
    let w_path = dir.join("w_range.csv");
    io::write_table(&w_path, &SWEEP_HEADER, &sweep_rows(&w, split_seed, cfg.renode.w_min))?;
    files.push(w_path);
    println!("w range sweep: {} cells", w.len());

    Manifest {
        command: ctx.command.clone(),
        config_hash: loaded.config.hash(),
        dataset_fingerprint: loaded.fingerprint.clone(),
        seeds: vec![split_seed, cfg.seed],
        files: Vec::new(),
        extra: json!({ "split": k }),
    }
    .write(&dir, &files)?;
    println!("sweep written to {}", dir.display());
    Ok(dir)
}

fn labeled_table(path: &Path, m: &DMatrix<f64>, labels: &[usize], prefix: &str) -> Result<()> {
    let mut header = vec!["label".to_string()];
    header.extend((0..m.ncols()).map(|j| format!("{prefix}{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..m.nrows())
        .map(|i| {
            std::iter::once(labels[i].to_string())
                .chain(m.row(i).iter().map(|&x| io::fmt_f64(x)))
                .collect()
        })
        .collect();
    io::write_table(path, &header, &rows)?;
    Ok(())
}

pub fn export_embeddings(run: &Path, k: usize, out: Option<PathBuf>) -> Result<PathBuf> {
    let manifest = store::read_manifest(run)?
        .ok_or_else(|| Error::Data(format!("{} has no manifest.json; not a training run", run.display())))?;
    let z_path = run.join("checkpoints").join(format!("split_{k}")).join("Z.csv");
    if !z_path.exists() {
        return Err(Error::Data(format!(
            "no checkpoint for split {k} in {}; train with --runs {} or pick another --split",
            run.display(),
            k + 1
        ))
        .into());
    }
    let extra = &manifest["extra"];
    let data = PathBuf::from(
        extra["data"]
            .as_str()
            .ok_or_else(|| Error::Data("run manifest lacks the dataset path".into()))?,
    );
    let root = PathBuf::from(extra["artifact_root"].as_str().unwrap_or("."));
    let dataset = load_dataset(&data)
        .with_context(|| format!("loading the dataset recorded in {}", run.display()))?
        .normalize_columns();
    let out = out.unwrap_or_else(|| run.join("embeddings").join(format!("split_{k}")));

    let z = io::read_matrix(&z_path)?;
    if z.nrows() != dataset.n() {
        return Err(Error::Dimension(format!("checkpoint has {} rows, dataset has {}", z.nrows(), dataset.n())).into());
    }
    let mut written = Vec::new();
    let p = out.join("Z.csv");
    labeled_table(&p, &z, &dataset.labels, "z")?;
    written.push(p);
    let p = out.join("X_star.csv");
    labeled_table(&p, &dataset.concat_views(), &dataset.labels, "x")?;
    written.push(p);

    let split_dir = store::split_dir(&root, k);
    if split_dir.join("features").is_dir() {
        let (_, artifacts) = store::load_split_artifacts(&split_dir, dataset.num_views(), dataset.n())?;
        let f_star = rsgslm::gcn::concat_features(&artifacts.view_graphs)?;
        let p = out.join("F_star.csv");
        labeled_table(&p, &f_star, &dataset.labels, "f")?;
        written.push(p);
    } else {
        eprintln!("note: no graph artifacts in {}; F_star not exported", split_dir.display());
    }
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(out)
}

pub fn gradcheck(config_path: Option<&Path>, tol: f64, spec: GradCheckSpec) -> Result<bool> {
    let config = load_config(config_path)?;
    let mut ok = true;
    println!("smooth pseudo renode  max_rel_error  max_abs_error  entries");
    for (smooth, pseudo, renode) in trainer::ablation_flags() {
        let loss = trainer::with_flags(&config.train.loss, smooth, pseudo, renode);
        let report = trainer::gradient_check(&loss, &spec)?;
        let pass = report.passes(tol);
        ok &= pass;
        println!(
            "{:>6} {:>6} {:>6}  {:>13.3e}  {:>13.3e}  {:>7}  {}",
            smooth as u8,
            pseudo as u8,
            renode as u8,
            report.max_rel_error,
            report.max_abs_error,
            report.entries,
            if pass { "ok" } else { "FAIL" }
        );
    }
    if !ok {
        println!("gradient check failed: relative error above {tol:e}");
    }
    Ok(ok)
}

pub fn check_runs(runs: usize) -> Result<()> {
    if runs == 0 {
        bail!(UsageError("--runs must be at least 1".into()));
    }
    Ok(())
}
