//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be one
//! of [`KEYS`]; unknown or repeated keys are errors. Unset keys keep their
//! defaults. `train.max_epochs` also sets `loss.max_epochs` unless the latter
//! is given explicitly.
//!
//! The synthetic-data spec uses the same syntax with its own key set, see
//! [`parse_synth_spec`].

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::dataset::{SplitSpec, SynthSpec, SynthView};
use crate::io;
use crate::objective::{PseudoPool, Schedule};
use crate::optim::OptimizerKind;
use crate::trainer::TrainConfig;
use crate::view_graph::{GraphInit, LabelLaplacian};
use crate::{Error, Result};

/// Every accepted key, sorted.
pub const KEYS: &[&str] = &[
    "loss.lambda1",
    "loss.lambda2",
    "loss.max_epochs",
    "loss.normalize_pseudo",
    "loss.oracle_pseudo",
    "loss.pseudo",
    "loss.pseudo_pool",
    "loss.renode",
    "loss.schedule",
    "loss.smooth",
    "renode.w_max",
    "renode.w_min",
    "renode.xi",
    "solver.alpha",
    "solver.eta",
    "solver.gamma",
    "solver.init",
    "solver.label_laplacian",
    "solver.mu",
    "solver.outer_iters",
    "solver.p",
    "solver.rel_tol",
    "solver.u_label",
    "split.seed",
    "split.train_per_class",
    "split.val_per_class",
    "train.hidden_dim",
    "train.learning_rate",
    "train.max_epochs",
    "train.optimizer",
    "train.patience",
    "train.seed",
    "train.self_loops",
    "train.weight_decay",
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub split: SplitSpec,
}

fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut seen = BTreeMap::new();
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.into(),
            line: idx + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected `key = value`, got {line:?}")))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(parse_err("empty key".into()));
        }
        if let Some(prev) = seen.insert(key.clone(), idx + 1) {
            return Err(parse_err(format!("key `{key}` already set on line {prev}")));
        }
        pairs.push((idx + 1, key, value));
    }
    Ok(pairs)
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("bad value {raw:?} for `{key}`")))
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad value {raw:?} for `{key}`; expected true/false"))),
    }
}

fn laplacian_kind(raw: &str) -> Result<LabelLaplacian> {
    match raw {
        "pairwise" => Ok(LabelLaplacian::Pairwise),
        "normalized" => Ok(LabelLaplacian::Normalized),
        _ => Err(Error::Config(format!(
            "bad value {raw:?} for `solver.label_laplacian`; expected pairwise or normalized"
        ))),
    }
}

fn graph_init(raw: &str) -> Result<GraphInit> {
    match raw {
        "features" => Ok(GraphInit::Features),
        "labels" => Ok(GraphInit::Labels),
        _ => Err(Error::Config(format!(
            "bad value {raw:?} for `solver.init`; expected features or labels"
        ))),
    }
}

fn graph_init_name(init: GraphInit) -> &'static str {
    match init {
        GraphInit::Features => "features",
        GraphInit::Labels => "labels",
    }
}

fn laplacian_name(kind: LabelLaplacian) -> &'static str {
    match kind {
        LabelLaplacian::Pairwise => "pairwise",
        LabelLaplacian::Normalized => "normalized",
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut loss_max_set = false;
        let mut train_max = None;
        for (line, key, raw) in parse_pairs(text, origin)? {
            let t = &mut cfg.train;
            let k = key.as_str();
            let r = raw.as_str();
            match k {
                "loss.lambda1" => t.loss.lambda1 = value(k, r)?,
                "loss.lambda2" => t.loss.lambda2 = value(k, r)?,
                "loss.max_epochs" => {
                    t.loss.max_epochs = value(k, r)?;
                    loss_max_set = true;
                }
                "loss.normalize_pseudo" => t.loss.normalize_pseudo = flag(k, r)?,
                "loss.oracle_pseudo" => t.loss.oracle_pseudo = flag(k, r)?,
                "loss.pseudo" => t.loss.use_pseudo = flag(k, r)?,
                "loss.pseudo_pool" => t.loss.pseudo_pool = PseudoPool::from_str(r)?,
                "loss.renode" => t.loss.use_renode_weights = flag(k, r)?,
                "loss.schedule" => t.loss.schedule = Schedule::from_str(r)?,
                "loss.smooth" => t.loss.use_smooth = flag(k, r)?,
                "renode.w_max" => t.renode.w_max = value(k, r)?,
                "renode.w_min" => t.renode.w_min = value(k, r)?,
                "renode.xi" => t.renode.xi = value(k, r)?,
                "solver.alpha" => t.solver.alpha = value(k, r)?,
                "solver.eta" => t.solver.eta = value(k, r)?,
                "solver.gamma" => t.solver.gamma = value(k, r)?,
                "solver.init" => t.solver.init = graph_init(r)?,
                "solver.label_laplacian" => t.solver.label_laplacian = laplacian_kind(r)?,
                "solver.mu" => t.solver.mu = value(k, r)?,
                "solver.outer_iters" => t.solver.outer_iters = value(k, r)?,
                // The distance exponent is fixed at 2; other values are refused.
                "solver.p" => {
                    let p: f64 = value(k, r)?;
                    if p != 2.0 {
                        return Err(Error::Config(format!("solver.p = {p} is unsupported; only 2")));
                    }
                }
                "solver.rel_tol" => t.solver.rel_tol = value(k, r)?,
                "solver.u_label" => t.solver.u_label = value(k, r)?,
                "split.seed" => cfg.split.seed = value(k, r)?,
                "split.train_per_class" => cfg.split.train_per_class = value(k, r)?,
                "split.val_per_class" => cfg.split.val_per_class = value(k, r)?,
                "train.hidden_dim" => t.hidden_dim = value(k, r)?,
                "train.learning_rate" => t.learning_rate = value(k, r)?,
                "train.max_epochs" => {
                    let m = value(k, r)?;
                    t.max_epochs = m;
                    train_max = Some(m);
                }
                "train.optimizer" => t.optimizer = OptimizerKind::from_str(r)?,
                "train.patience" => t.patience = value(k, r)?,
                "train.seed" => t.seed = value(k, r)?,
                "train.self_loops" => t.add_self_loops = flag(k, r)?,
                "train.weight_decay" => t.weight_decay = value(k, r)?,
                _ => {
                    return Err(Error::Parse {
                        path: origin.into(),
                        line,
                        message: format!("unknown key `{key}`"),
                    })
                }
            }
        }
        if let (Some(m), false) = (train_max, loss_max_set) {
            cfg.train.loss.max_epochs = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&io::read_string(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.split.train_per_class == 0 {
            return Err(Error::Config("split.train_per_class must be at least 1".into()));
        }
        self.train.validate()
    }

    /// All keys with their effective values, sorted by key.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let t = &self.train;
        let f = io::fmt_f64;
        let b = |v: bool| v.to_string();
        let mut m = BTreeMap::new();
        m.insert("loss.lambda1", f(t.loss.lambda1));
        m.insert("loss.lambda2", f(t.loss.lambda2));
        m.insert("loss.max_epochs", t.loss.max_epochs.to_string());
        m.insert("loss.normalize_pseudo", b(t.loss.normalize_pseudo));
        m.insert("loss.oracle_pseudo", b(t.loss.oracle_pseudo));
        m.insert("loss.pseudo", b(t.loss.use_pseudo));
        m.insert("loss.pseudo_pool", t.loss.pseudo_pool.as_str().into());
        m.insert("loss.renode", b(t.loss.use_renode_weights));
        m.insert("loss.schedule", t.loss.schedule.as_str().into());
        m.insert("loss.smooth", b(t.loss.use_smooth));
        m.insert("renode.w_max", f(t.renode.w_max));
        m.insert("renode.w_min", f(t.renode.w_min));
        m.insert("renode.xi", f(t.renode.xi));
        m.insert("solver.alpha", f(t.solver.alpha));
        m.insert("solver.eta", f(t.solver.eta));
        m.insert("solver.gamma", f(t.solver.gamma));
        m.insert("solver.init", graph_init_name(t.solver.init).into());
        m.insert("solver.label_laplacian", laplacian_name(t.solver.label_laplacian).into());
        m.insert("solver.mu", f(t.solver.mu));
        m.insert("solver.outer_iters", t.solver.outer_iters.to_string());
        m.insert("solver.p", f(2.0));
        m.insert("solver.rel_tol", f(t.solver.rel_tol));
        m.insert("solver.u_label", f(t.solver.u_label));
        m.insert("split.seed", self.split.seed.to_string());
        m.insert("split.train_per_class", self.split.train_per_class.to_string());
        m.insert("split.val_per_class", self.split.val_per_class.to_string());
        m.insert("train.hidden_dim", t.hidden_dim.to_string());
        m.insert("train.learning_rate", f(t.learning_rate));
        m.insert("train.max_epochs", t.max_epochs.to_string());
        m.insert("train.optimizer", t.optimizer.as_str().into());
        m.insert("train.patience", t.patience.to_string());
        m.insert("train.seed", t.seed.to_string());
        m.insert("train.self_loops", b(t.add_self_loops));
        m.insert("train.weight_decay", f(t.weight_decay));
        m
    }

    /// Canonical text form: every key, sorted, one `key = value` per line.
    /// Parsing it back yields the same configuration.
    pub fn to_canonical_string(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of the canonical form; independent of key order and comments
    /// in the source file.
    pub fn hash(&self) -> String {
        io::sha256_hex([self.to_canonical_string()])
    }

    /// Hash of the keys that affect graph construction only.
    pub fn graph_hash(&self) -> String {
        let text: String = self
            .entries()
            .iter()
            .filter(|(k, _)| k.starts_with("solver.") || k.starts_with("renode.") || k.starts_with("split."))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        io::sha256_hex([text])
    }
}

/// Parses a synthetic-data spec.
///
/// Required keys: `n`, `classes`, `views`, `seed`, and for every view index
/// `i < views`: `view.i.dim`, `view.i.noise`. Optional: `latent_dim`
/// (defaults to `classes`) and `view.i.spread` (defaults to 1).
pub fn parse_synth_spec(text: &str, origin: &Path) -> Result<SynthSpec> {
    let pairs = parse_pairs(text, origin)?;
    let mut map: BTreeMap<String, (usize, String)> =
        pairs.into_iter().map(|(l, k, v)| (k, (l, v))).collect();
    let mut take = |key: &str| map.remove(key).map(|(_, v)| v);
    fn required<T: FromStr>(v: Option<String>, key: &str) -> Result<T> {
        let raw = v.ok_or_else(|| Error::Config(format!("synthetic spec is missing field `{key}`")))?;
        value(key, &raw)
    }
    let n: usize = required(take("n"), "n")?;
    let num_classes: usize = required(take("classes"), "classes")?;
    let views: usize = required(take("views"), "views")?;
    let seed: u64 = required(take("seed"), "seed")?;
    let latent_dim = match take("latent_dim") {
        Some(raw) => value("latent_dim", &raw)?,
        None => num_classes,
    };
    let mut rendered = Vec::with_capacity(views);
    for i in 0..views {
        let dim_key = format!("view.{i}.dim");
        let noise_key = format!("view.{i}.noise");
        let spread_key = format!("view.{i}.spread");
        let dim = required(take(&dim_key), &dim_key)?;
        let noise = required(take(&noise_key), &noise_key)?;
        let spread = match take(&spread_key) {
            Some(raw) => value(&spread_key, &raw)?,
            None => 1.0,
        };
        rendered.push(SynthView { dim, spread, noise });
    }
    if let Some((key, (line, _))) = map.into_iter().next() {
        return Err(Error::Parse {
            path: origin.into(),
            line,
            message: format!("unknown key `{key}`"),
        });
    }
    if views == 0 {
        return Err(Error::Config("synthetic spec needs views >= 1".into()));
    }
    Ok(SynthSpec {
        n,
        num_classes,
        latent_dim,
        views: rendered,
        seed,
    })
}

/// Renders a synthetic spec in the file format read by [`parse_synth_spec`].
pub fn synth_spec_to_string(spec: &SynthSpec) -> String {
    let mut out = format!(
        "n = {}\nclasses = {}\nlatent_dim = {}\nseed = {}\nviews = {}\n",
        spec.n,
        spec.num_classes,
        spec.latent_dim,
        spec.seed,
        spec.views.len()
    );
    for (i, v) in spec.views.iter().enumerate() {
        out.push_str(&format!(
            "view.{i}.dim = {}\nview.{i}.spread = {}\nview.{i}.noise = {}\n",
            v.dim,
            io::fmt_f64(v.spread),
            io::fmt_f64(v.noise)
        ));
    }
    out
}
