//! On-disk layout of graph artifacts and run outputs under the artifact root.
//!
//! ```text
//! <root>/split_<k>/manifest.json
//!                 split.csv
//!                 graphs/view_<v>.csv       dense Sᵥ
//!                 features/F_<v>.csv        Fᵥ
//!                 projections/Q_<v>.csv, b_<v>.csv
//!                 fused/S.csv, fused/alphas.csv
//!                 renode/weights.csv
//! <root>/runs/<id>/manifest.json, config.txt, ...
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rsgslm::dataset::{MultiViewDataset, Split};
use rsgslm::experiment::PipelineArtifacts;
use rsgslm::fusion;
use rsgslm::io;
use rsgslm::renode::NodeWeightTable;
use rsgslm::trainer::StageTimings;
use rsgslm::view_graph::ViewGraphResult;
use rsgslm::{DMatrix, Error};
use serde_json::{json, Value};

pub fn split_dir(root: &Path, k: usize) -> PathBuf {
    root.join(format!("split_{k}"))
}

pub fn run_dir(root: &Path, id: &str) -> PathBuf {
    root.join("runs").join(id)
}

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub dataset_fingerprint: String,
    pub seeds: Vec<u64>,
    /// Paths relative to the manifest's directory.
    pub files: Vec<String>,
    pub extra: Value,
}

impl Manifest {
    pub fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "config_hash": self.config_hash,
            "dataset_fingerprint": self.dataset_fingerprint,
            "seeds": self.seeds,
            "files": self.files,
            "version": env!("CARGO_PKG_VERSION"),
            "extra": self.extra,
        })
    }

    /// Writes `manifest.json` into `dir`; `files` are made relative to `dir`.
    pub fn write(mut self, dir: &Path, files: &[PathBuf]) -> Result<()> {
        self.files = files
            .iter()
            .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
            .collect();
        self.files.sort();
        write_json(&dir.join("manifest.json"), &self.to_json())
    }
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    io::write_string(path, &text)?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = io::read_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())).into())
}

/// Reads the manifest of a split directory, if there is one.
pub fn read_manifest(dir: &Path) -> Result<Option<Value>> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Ok(None);
    }
    read_json(&path).map(Some)
}

/// Writes every artifact of one split and returns the written paths.
pub fn save_split_artifacts(dir: &Path, dataset: &MultiViewDataset, a: &PipelineArtifacts) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let split_path = dir.join("split.csv");
    dataset.split()?.save(&split_path)?;
    files.push(split_path);
    for (v, g) in a.view_graphs.iter().enumerate() {
        let s = dir.join("graphs").join(format!("view_{v}.csv"));
        let f = dir.join("features").join(format!("F_{v}.csv"));
        let q = dir.join("projections").join(format!("Q_{v}.csv"));
        let b = dir.join("projections").join(format!("b_{v}.csv"));
        io::write_matrix(&s, &g.s)?;
        io::write_matrix(&f, &g.f)?;
        io::write_matrix(&q, &g.q)?;
        io::write_matrix(&b, &DMatrix::from_column_slice(g.b.len(), 1, &g.b))?;
        files.extend([s, f, q, b]);
    }
    let fused_s = dir.join("fused").join("S.csv");
    let alphas = dir.join("fused").join("alphas.csv");
    io::write_matrix(&fused_s, &a.fused.s)?;
    io::write_matrix(&alphas, &DMatrix::from_column_slice(a.fused.alphas.len(), 1, &a.fused.alphas))?;
    let weights = dir.join("renode").join("weights.csv");
    a.weights.save(&weights)?;
    files.extend([fused_s, alphas, weights]);
    Ok(files)
}

fn column(path: &Path) -> Result<Vec<f64>> {
    let m = io::read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(Error::Data(format!("{}: expected a single column", path.display())).into());
    }
    Ok(m.iter().copied().collect())
}

/// Loads the artifacts written by [`save_split_artifacts`] together with the
/// split they were built on. The fused graph is rebuilt from the per-view
/// graphs and the stored view weights, which reproduces it bit-exactly.
pub fn load_split_artifacts(dir: &Path, num_views: usize, n: usize) -> Result<(Split, PipelineArtifacts)> {
    let split = Split::load(&dir.join("split.csv"), n)?;
    let mut view_graphs = Vec::with_capacity(num_views);
    for v in 0..num_views {
        let read = |sub: &str, name: String| -> Result<DMatrix<f64>> {
            let path = dir.join(sub).join(name);
            io::read_matrix(&path).with_context(|| format!("reading graph artifacts for view {v}"))
        };
        view_graphs.push(ViewGraphResult {
            s: read("graphs", format!("view_{v}.csv"))?,
            f: read("features", format!("F_{v}.csv"))?,
            q: read("projections", format!("Q_{v}.csv"))?,
            b: column(&dir.join("projections").join(format!("b_{v}.csv")))?,
            objective_trace: Vec::new(),
            seconds: 0.0,
        });
    }
    let alphas = column(&dir.join("fused").join("alphas.csv"))?;
    if alphas.len() != num_views {
        return Err(Error::Data(format!(
            "{}: {} view weights for {num_views} views",
            dir.display(),
            alphas.len()
        ))
        .into());
    }
    let graphs: Vec<&DMatrix<f64>> = view_graphs.iter().map(|g| &g.s).collect();
    let fused = fusion::fuse(&graphs, &alphas)?;
    let weights = NodeWeightTable::load(&dir.join("renode").join("weights.csv"))?;
    Ok((
        split,
        PipelineArtifacts {
            view_graphs,
            fused,
            traces: Vec::new(),
            weights,
            timings: StageTimings::default(),
        },
    ))
}
