//! Multi-view datasets: on-disk layout, column normalization, stratified
//! splits and a synthetic generator.
//!
//! Directory layout:
//!
//! ```text
//! <root>/views/view_0.csv … view_{V-1}.csv   rows = samples, no header
//! <root>/labels.csv                          one integer per line
//! <root>/splits/<name>.csv                   optional, header `node_index,role`
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::io;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "val" => Ok(Role::Val),
            "test" => Ok(Role::Test),
            other => Err(Error::Data(format!("unknown split role {other:?}"))),
        }
    }
}

/// Assignment of every node to exactly one of train / val / test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    roles: Vec<Role>,
}

impl Split {
    pub fn from_roles(roles: Vec<Role>) -> Self {
        Split { roles }
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    /// Node indices with the given role, ascending.
    pub fn indices(&self, role: Role) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter_map(|(i, r)| (*r == role).then_some(i))
            .collect()
    }

    pub fn mask(&self, role: Role) -> Vec<bool> {
        self.roles.iter().map(|r| *r == role).collect()
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|r| **r == role).count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .roles
            .iter()
            .enumerate()
            .map(|(i, r)| vec![i.to_string(), r.as_str().to_string()])
            .collect();
        io::write_table(path, &["node_index", "role"], &rows)
    }

    /// Reads a split file; every node in `0..n` must appear exactly once.
    pub fn load(path: &Path, n: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let mut roles: Vec<Option<Role>> = vec![None; n];
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let parse_err = |message: String| Error::Parse {
                path: path.into(),
                line: line + 2,
                message,
            };
            if record.len() != 2 {
                return Err(parse_err("expected columns node_index,role".into()));
            }
            let idx: usize = record[0]
                .parse()
                .map_err(|_| parse_err(format!("bad node index {:?}", &record[0])))?;
            let role: Role = record[1].parse()?;
            let slot = roles
                .get_mut(idx)
                .ok_or_else(|| parse_err(format!("node index {idx} out of range (n = {n})")))?;
            if slot.replace(role).is_some() {
                return Err(parse_err(format!("node {idx} listed twice")));
            }
        }
        let roles = roles
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| Error::Data(format!("node {i} missing from split file"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Split { roles })
    }
}

/// Per-class counts for a stratified split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_per_class: 5,
            val_per_class: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    /// One `n × d_v` matrix per view; rows are samples.
    pub views: Vec<DMatrix<f64>>,
    /// Class index per sample, in `0..num_classes`.
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Option<Split>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<DMatrix<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let ds = MultiViewDataset {
            views,
            labels,
            num_classes,
            split: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.ncols()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::Data("no views found".into()));
        }
        let n = self.labels.len();
        for (v, x) in self.views.iter().enumerate() {
            if x.nrows() != n {
                return Err(Error::Data(format!(
                    "view {v} has {} rows but there are {n} labels",
                    x.nrows()
                )));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::Data(format!(
                "need at least 2 classes, found {}",
                self.num_classes
            )));
        }
        if let Some(bad) = self.labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::Data(format!(
                "label {bad} outside 0..{}",
                self.num_classes
            )));
        }
        if let Some(split) = &self.split {
            if split.len() != n {
                return Err(Error::Data(format!(
                    "split covers {} nodes, dataset has {n}",
                    split.len()
                )));
            }
            let mut seen = vec![false; self.num_classes];
            for i in split.indices(Role::Train) {
                seen[self.labels[i]] = true;
            }
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(Error::Data(format!(
                    "class {missing} has no training node"
                )));
            }
        }
        Ok(())
    }

    pub fn split(&self) -> Result<&Split> {
        self.split
            .as_ref()
            .ok_or_else(|| Error::Data("dataset has no train/val/test split".into()))
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        self.split = Some(split);
        self.validate()?;
        Ok(self)
    }

    /// `n × c` one-hot label matrix.
    pub fn one_hot(&self) -> DMatrix<f64> {
        one_hot(&self.labels, self.num_classes)
    }

    /// Nodes per class, ascending within each class.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            members[y].push(i);
        }
        members
    }

    /// `[X¹ | X² | … | Xⱽ]`.
    pub fn concat_views(&self) -> DMatrix<f64> {
        let blocks: Vec<&DMatrix<f64>> = self.views.iter().collect();
        crate::linalg::hconcat(&blocks).expect("views share the sample axis")
    }

    /// Divides each column of each view by its Euclidean norm. All-zero
    /// columns stay zero.
    pub fn normalize_columns(mut self) -> Self {
        for view in &mut self.views {
            normalize_columns_in_place(view);
        }
        self
    }

    /// Draws a stratified split: exactly `train_per_class` and
    /// `val_per_class` nodes of every class, the rest are test nodes.
    pub fn make_split(&self, spec: &SplitSpec) -> Result<Self> {
        let split = stratified_split(&self.labels, self.num_classes, spec)?;
        self.clone().with_split(split)
    }

    /// Content hash of the features and labels.
    pub fn fingerprint(&self) -> String {
        let mut parts: Vec<Vec<u8>> = Vec::new();
        parts.push(format!("n={};c={};", self.n(), self.num_classes).into_bytes());
        for x in &self.views {
            let mut bytes = format!("view:{}x{};", x.nrows(), x.ncols()).into_bytes();
            for i in 0..x.nrows() {
                for j in 0..x.ncols() {
                    bytes.extend_from_slice(&x[(i, j)].to_le_bytes());
                }
            }
            parts.push(bytes);
        }
        parts.push(
            self.labels
                .iter()
                .flat_map(|y| (*y as u64).to_le_bytes())
                .collect(),
        );
        io::sha256_hex(parts)
    }
}

pub fn one_hot(labels: &[usize], num_classes: usize) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(labels.len(), num_classes);
    for (i, &c) in labels.iter().enumerate() {
        y[(i, c)] = 1.0;
    }
    y
}

pub fn normalize_columns_in_place(x: &mut DMatrix<f64>) {
    for mut col in x.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
}

pub fn stratified_split(labels: &[usize], num_classes: usize, spec: &SplitSpec) -> Result<Split> {
    if spec.train_per_class == 0 {
        return Err(Error::Config("train_per_class must be at least 1".into()));
    }
    let mut members = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    let need = spec.train_per_class + spec.val_per_class;
    for (class, m) in members.iter().enumerate() {
        if m.len() < need {
            return Err(Error::Data(format!(
                "class {class} has {} nodes, split needs {need} ({} train + {} val)",
                m.len(),
                spec.train_per_class,
                spec.val_per_class
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut roles = vec![Role::Test; labels.len()];
    for m in &mut members {
        m.shuffle(&mut rng);
        for &i in &m[..spec.train_per_class] {
            roles[i] = Role::Train;
        }
        for &i in &m[spec.train_per_class..need] {
            roles[i] = Role::Val;
        }
    }
    Ok(Split { roles })
}

/// Reads a dataset directory. Labels are remapped to `0..c` in ascending
/// order of their original values.
pub fn load_dataset(root: &Path) -> Result<MultiViewDataset> {
    let views_dir = root.join("views");
    let mut views = Vec::new();
    loop {
        let path = views_dir.join(format!("view_{}.csv", views.len()));
        if !path.is_file() {
            break;
        }
        views.push(io::read_matrix(&path)?);
    }
    if views.is_empty() {
        return Err(Error::Data(format!("no views found under {}", views_dir.display())));
    }

    let label_path = root.join("labels.csv");
    let raw = io::read_string(&label_path)?;
    let mut raw_labels = Vec::new();
    for (line, text) in raw.lines().enumerate() {
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let y: i64 = text.parse().map_err(|_| Error::Parse {
            path: label_path.clone(),
            line: line + 1,
            message: format!("label {text:?} is not an integer"),
        })?;
        raw_labels.push(y);
    }

    let n = views[0].nrows();
    for (v, x) in views.iter().enumerate() {
        if x.nrows() != n {
            return Err(Error::Data(format!(
                "view_{v}.csv has {} rows but view_0.csv has {n}",
                x.nrows()
            )));
        }
    }
    if raw_labels.len() != n {
        return Err(Error::Data(format!(
            "labels.csv has {} entries but views have {n} rows",
            raw_labels.len()
        )));
    }

    let mut remap = BTreeMap::new();
    for &y in &raw_labels {
        remap.entry(y).or_insert(0usize);
    }
    for (k, v) in remap.values_mut().enumerate() {
        *v = k;
    }
    let labels: Vec<usize> = raw_labels.iter().map(|y| remap[y]).collect();
    MultiViewDataset::new(views, labels, remap.len())
}

/// Loads `splits/<name>.csv` and attaches it to the dataset.
pub fn load_named_split(root: &Path, name: &str, dataset: MultiViewDataset) -> Result<MultiViewDataset> {
    let split = Split::load(&root.join("splits").join(format!("{name}.csv")), dataset.n())?;
    dataset.with_split(split)
}

/// Writes the dataset in the layout read by [`load_dataset`]. A present split
/// is written as `splits/default.csv`.
pub fn save_dataset(dataset: &MultiViewDataset, root: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for (v, x) in dataset.views.iter().enumerate() {
        let path = root.join("views").join(format!("view_{v}.csv"));
        io::write_matrix(&path, x)?;
        written.push(path);
    }
    let labels: String = dataset.labels.iter().map(|y| format!("{y}\n")).collect();
    let path = root.join("labels.csv");
    io::write_string(&path, &labels)?;
    written.push(path);
    if let Some(split) = &dataset.split {
        let path = root.join("splits").join("default.csv");
        split.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// One rendered view of the synthetic latent clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthView {
    pub dim: usize,
    /// Scale applied to the class centroids before projection; larger means
    /// better separated classes.
    pub spread: f64,
    /// Standard deviation of the i.i.d. Gaussian noise added per entry.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub num_classes: usize,
    pub latent_dim: usize,
    pub views: Vec<SynthView>,
    pub seed: u64,
}

impl SynthSpec {
    /// Equal-quality views of the given widths.
    pub fn uniform(n: usize, num_classes: usize, dims: &[usize], noise: f64, seed: u64) -> Self {
        SynthSpec {
            n,
            num_classes,
            latent_dim: num_classes,
            views: dims
                .iter()
                .map(|&dim| SynthView {
                    dim,
                    spread: 1.0,
                    noise,
                })
                .collect(),
            seed,
        }
    }
}

/// Class `i mod c` for sample `i`; each class has a standard-normal latent
/// centroid. View `v` renders `spread_v · centroid · M_v + noise_v · ε` with a
/// random Gaussian map `M_v` (latent × d_v, entries of variance 1/latent).
pub fn generate_synthetic(spec: &SynthSpec) -> Result<MultiViewDataset> {
    if spec.num_classes < 2 {
        return Err(Error::Config("synthetic data needs at least 2 classes".into()));
    }
    if spec.n < spec.num_classes {
        return Err(Error::Config(format!(
            "n = {} is smaller than the number of classes {}",
            spec.n, spec.num_classes
        )));
    }
    if spec.views.is_empty() {
        return Err(Error::Config("synthetic spec has no views".into()));
    }
    if spec.latent_dim == 0 || spec.views.iter().any(|v| v.dim == 0) {
        return Err(Error::Config("dimensions must be positive".into()));
    }
    if spec.views.iter().any(|v| !(v.noise >= 0.0) || !v.spread.is_finite()) {
        return Err(Error::Config("noise must be >= 0 and spread finite".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let c = spec.num_classes;
    let centroids = DMatrix::from_fn(c, spec.latent_dim, |_, _| gauss());
    let labels: Vec<usize> = (0..spec.n).map(|i| i % c).collect();
    let scale = 1.0 / (spec.latent_dim as f64).sqrt();

    let mut views = Vec::with_capacity(spec.views.len());
    for view in &spec.views {
        let map = DMatrix::from_fn(spec.latent_dim, view.dim, |_, _| gauss() * scale);
        let rendered = &centroids * &map * view.spread;
        let x = DMatrix::from_fn(spec.n, view.dim, |i, j| {
            rendered[(labels[i], j)] + view.noise * gauss()
        });
        views.push(x);
    }
    MultiViewDataset::new(views, labels, c)
}
