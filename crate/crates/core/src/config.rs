//! Run configuration in a flat `key = value` text format.
//!
//! ```text
//! # comment
//! languages.en = vectors/wiki.en.vec
//! languages.de = vectors/wiki.de.vec
//! vocab_size = 5000
//! barycenter.optimize_weights = true
//! ```
//!
//! Keys are dotted names, values run to the end of the line (trimmed). Each
//! key may appear once; unknown keys are errors. `languages.<tag>` entries
//! keep their order of appearance. Relative paths are resolved against the
//! directory of the config file. See [`KEYS`] for the full list.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::align::{PipelineConfig, TreeSpec};
use crate::error::{Error, Result};
use crate::ot::{Epsilon, Stabilization};

/// Every accepted key besides `languages.<tag>`, with its meaning.
pub const KEYS: &[(&str, &str)] = &[
    ("vocab_size", "most frequent words loaded per language"),
    ("mass_model", "uniform | zipf"),
    ("seed", "seed of the barycenter initialization"),
    ("out", "output directory"),
    ("outer_iters", "maximum refinement rounds"),
    ("early_stop", "relative objective change that ends refinement"),
    ("pivot", "language tag whose frame is used during initialization"),
    ("warm_start_support", "start each round's barycenter from the previous support"),
    ("tree", "indo-european or an inline tree such as ((en,de),fr)"),
    ("gw.epsilon", "entropic regularization of Gromov-Wasserstein"),
    ("gw.max_iters", "outer Gromov-Wasserstein iterations"),
    ("gw.tolerance", "largest coupling change that counts as converged"),
    ("sinkhorn.epsilon", "entropic regularization of the barycenter transports"),
    ("sinkhorn.epsilon_mode", "median (times the median cost) | absolute"),
    ("sinkhorn.max_iters", "scaling iterations per solve"),
    ("sinkhorn.tolerance", "marginal violation that counts as converged"),
    ("sinkhorn.log_domain_threshold", "scaling size at which factors are absorbed"),
    ("sinkhorn.stabilization", "never | auto | always"),
    ("sinkhorn.epsilon_scaling", "anneal epsilon on cold starts"),
    ("barycenter.support_size", "auto (2x mean vocabulary) | <x>mean | total | integer"),
    ("barycenter.lambda", "comma-separated language weights, uniform when empty"),
    ("barycenter.optimize_weights", "optimize the barycenter mass (weighted variant)"),
    ("barycenter.max_iters", "location/mass iterations per round"),
    ("barycenter.tolerance", "largest support move that counts as converged"),
    ("barycenter.restarts", "random starts per barycenter, best objective kept"),
    ("eval.dictionaries", "directory of <src>-<tgt>.txt gold dictionaries"),
    ("eval.k", "comma-separated k values for precision@k"),
    ("eval.nn_fallback", "rank rows without coupling mass by cosine similarity"),
    ("eval.map_depth", "ranking depth for MAP, 0 for the whole target vocabulary"),
    ("ablate.support_sizes", "comma-separated support sizes for the support-size ablation"),
    ("ablate.subsets", "language subsets for the subset ablation, `;` between subsets"),
    ("checkpoint.prune", "coupling entries below this fraction of the largest are not stored"),
];

/// Barycenter support size, possibly relative to the vocabularies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SupportSize {
    /// Multiple of the average vocabulary size.
    MeanMultiple(f64),
    /// Sum of all vocabulary sizes.
    Total,
    Fixed(usize),
}

impl SupportSize {
    pub fn resolve(self, sizes: &[usize]) -> usize {
        let total: usize = sizes.iter().sum();
        match self {
            SupportSize::MeanMultiple(x) => ((x * total as f64 / sizes.len().max(1) as f64).round() as usize).max(1),
            SupportSize::Total => total,
            SupportSize::Fixed(n) => n,
        }
    }
}

impl FromStr for SupportSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad support size `{s}`"));
        match s {
            "auto" => Ok(SupportSize::MeanMultiple(2.0)),
            "total" => Ok(SupportSize::Total),
            "mean" => Ok(SupportSize::MeanMultiple(1.0)),
            _ => {
                if let Some(x) = s.strip_suffix("mean") {
                    let x: f64 = x.parse().map_err(|_| bad())?;
                    if !(x > 0.0) || !x.is_finite() {
                        return Err(bad());
                    }
                    Ok(SupportSize::MeanMultiple(x))
                } else {
                    match s.parse::<usize>() {
                        Ok(n) if n > 0 => Ok(SupportSize::Fixed(n)),
                        _ => Err(bad()),
                    }
                }
            }
        }
    }
}

impl std::fmt::Display for SupportSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SupportSize::MeanMultiple(x) if *x == 2.0 => f.write_str("auto"),
            SupportSize::MeanMultiple(x) if *x == 1.0 => f.write_str("mean"),
            SupportSize::MeanMultiple(x) => write!(f, "{x}mean"),
            SupportSize::Total => f.write_str("total"),
            SupportSize::Fixed(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageEntry {
    pub tag: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub dictionaries: Option<PathBuf>,
    pub ks: Vec<usize>,
    pub nn_fallback: bool,
    pub map_depth: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            dictionaries: None,
            ks: vec![1, 10],
            nn_fallback: false,
            map_depth: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblateSettings {
    pub support_sizes: Vec<SupportSize>,
    pub subsets: Vec<Vec<String>>,
}

impl Default for AblateSettings {
    fn default() -> Self {
        Self {
            support_sizes: vec![SupportSize::MeanMultiple(1.0), SupportSize::MeanMultiple(2.0), SupportSize::Total],
            subsets: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub languages: Vec<LanguageEntry>,
    pub vocab_size: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Pivot language tag; the first language when unset.
    pub pivot: Option<String>,
    pub support_size: SupportSize,
    pub tree: Option<TreeSpec>,
    pub eval: EvalSettings,
    pub ablate: AblateSettings,
    pub checkpoint_prune: f64,
    /// Pipeline settings. `pivot_index`, `bary.seed` and `bary.support_size`
    /// are derived from the fields above by [`RunConfig::pipeline_for`].
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            languages: Vec::new(),
            vocab_size: 5000,
            seed: 0,
            out: PathBuf::from("out"),
            pivot: None,
            support_size: SupportSize::MeanMultiple(2.0),
            tree: None,
            eval: EvalSettings::default(),
            ablate: AblateSettings::default(),
            checkpoint_prune: 1e-12,
            pipeline: PipelineConfig::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_value(key, v))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: `{key}` given twice", no + 1)));
            }
            cfg.set(key, value, &resolve)
                .map_err(|e| Error::Config(format!("line {}: {}", no + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        if !seen.contains("out") {
            cfg.out = resolve("out");
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, resolve: &dyn Fn(&str) -> PathBuf) -> Result<()> {
        let p = &mut self.pipeline;
        match key {
            _ if key.starts_with("languages.") => {
                let tag = &key["languages.".len()..];
                if tag.is_empty() || value.is_empty() {
                    return Err(Error::Config(format!("`{key}` needs a tag and a path")));
                }
                self.languages.push(LanguageEntry {
                    tag: tag.to_string(),
                    path: resolve(value),
                });
            }
            "vocab_size" => self.vocab_size = parse_value(key, value)?,
            "mass_model" => p.mass_model = value.parse()?,
            "seed" => self.seed = parse_value(key, value)?,
            "out" => self.out = resolve(value),
            "outer_iters" => p.outer_iters = parse_value(key, value)?,
            "early_stop" => p.early_stop = parse_value(key, value)?,
            "pivot" => self.pivot = Some(value.to_string()),
            "warm_start_support" => p.warm_start_support = parse_bool(key, value)?,
            "tree" => self.tree = Some(TreeSpec::preset_or_inline(value)?),
            "gw.epsilon" => p.gw.epsilon = parse_value(key, value)?,
            "gw.max_iters" => p.gw.max_outer_iters = parse_value(key, value)?,
            "gw.tolerance" => p.gw.tolerance = parse_value(key, value)?,
            "sinkhorn.epsilon" => {
                let v = parse_value(key, value)?;
                p.ot.epsilon = match p.ot.epsilon {
                    Epsilon::Absolute(_) => Epsilon::Absolute(v),
                    Epsilon::MedianRelative(_) => Epsilon::MedianRelative(v),
                };
            }
            "sinkhorn.epsilon_mode" => {
                let v = p.ot.epsilon.value();
                p.ot.epsilon = match value {
                    "median" => Epsilon::MedianRelative(v),
                    "absolute" => Epsilon::Absolute(v),
                    _ => return Err(Error::Config(format!("`{key}`: expected median or absolute"))),
                };
            }
            "sinkhorn.max_iters" => p.ot.max_iters = parse_value(key, value)?,
            "sinkhorn.tolerance" => p.ot.tolerance = parse_value(key, value)?,
            "sinkhorn.log_domain_threshold" => p.ot.log_domain_threshold = parse_value(key, value)?,
            "sinkhorn.stabilization" => {
                p.ot.stabilization = match value {
                    "never" => Stabilization::Never,
                    "auto" => Stabilization::Auto,
                    "always" => Stabilization::Always,
                    _ => return Err(Error::Config(format!("`{key}`: expected never, auto or always"))),
                }
            }
            "sinkhorn.epsilon_scaling" => p.ot.epsilon_scaling = parse_bool(key, value)?,
            "barycenter.support_size" => self.support_size = value.parse()?,
            "barycenter.lambda" => {
                let l: Vec<f64> = parse_list(key, value)?;
                p.bary.lambda = (!l.is_empty()).then_some(l);
            }
            "barycenter.optimize_weights" => p.bary.optimize_weights = parse_bool(key, value)?,
            "barycenter.max_iters" => p.bary.max_iters = parse_value(key, value)?,
            "barycenter.tolerance" => p.bary.location_tolerance = parse_value(key, value)?,
            "barycenter.restarts" => p.bary.restarts = parse_value(key, value)?,
            "eval.dictionaries" => self.eval.dictionaries = (!value.is_empty()).then(|| resolve(value)),
            "eval.k" => self.eval.ks = parse_list(key, value)?,
            "eval.nn_fallback" => self.eval.nn_fallback = parse_bool(key, value)?,
            "eval.map_depth" => self.eval.map_depth = parse_value(key, value)?,
            "ablate.support_sizes" => self.ablate.support_sizes = parse_list(key, value)?,
            "ablate.subsets" => {
                self.ablate.subsets = value
                    .split(';')
                    .map(|group| group.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect::<Vec<_>>())
                    .filter(|g| !g.is_empty())
                    .collect();
            }
            "checkpoint.prune" => self.checkpoint_prune = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.languages.len() < 2 {
            return Err(Error::Config(format!(
                "at least 2 languages are required, got {}",
                self.languages.len()
            )));
        }
        let mut tags = HashSet::new();
        let mut paths = HashSet::new();
        for l in &self.languages {
            if !tags.insert(&l.tag) {
                return Err(Error::Config(format!("language `{}` given twice", l.tag)));
            }
            if !paths.insert(&l.path) {
                return Err(Error::Config(format!("path {} used twice", l.path.display())));
            }
        }
        if self.vocab_size == 0 {
            return Err(Error::Config("vocab_size must be at least 1".into()));
        }
        if let Some(pivot) = &self.pivot {
            if !tags.contains(pivot) {
                return Err(Error::Config(format!("pivot `{pivot}` is not a configured language")));
            }
        }
        if let Some(l) = &self.pipeline.bary.lambda {
            if l.len() != self.languages.len() {
                return Err(Error::Config(format!(
                    "barycenter.lambda has {} weights for {} languages",
                    l.len(),
                    self.languages.len()
                )));
            }
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(Error::Config("eval.k needs positive values".into()));
        }
        if !(self.checkpoint_prune >= 0.0 && self.checkpoint_prune < 1.0) {
            return Err(Error::Config("checkpoint.prune must be in [0, 1)".into()));
        }
        for subset in &self.ablate.subsets {
            if subset.len() < 2 {
                return Err(Error::Config(format!("ablation subset {subset:?} has fewer than 2 languages")));
            }
            if let Some(t) = subset.iter().find(|t| !tags.contains(t)) {
                return Err(Error::Config(format!("ablation subset names unknown language `{t}`")));
            }
        }
        self.pipeline.validate(self.languages.len())
    }

    pub fn tags(&self) -> Vec<&str> {
        self.languages.iter().map(|l| l.tag.as_str()).collect()
    }

    /// Pipeline settings for a run over `tags` (a subset of the configured
    /// languages, in that order) with the given vocabulary sizes.
    pub fn pipeline_for(&self, tags: &[&str], sizes: &[usize]) -> Result<PipelineConfig> {
        let mut p = self.pipeline.clone();
        p.pivot_index = match &self.pivot {
            Some(pivot) => tags.iter().position(|t| t == pivot).unwrap_or(0),
            None => 0,
        };
        p.bary.seed = self.seed;
        p.bary.support_size = Some(self.support_size.resolve(sizes));
        if let Some(lambda) = &self.pipeline.bary.lambda {
            let all = self.tags();
            let picked: Vec<f64> = tags
                .iter()
                .map(|t| {
                    all.iter()
                        .position(|a| a == t)
                        .map(|i| lambda[i])
                        .ok_or_else(|| Error::UnknownLanguage(t.to_string()))
                })
                .collect::<Result<_>>()?;
            let total: f64 = picked.iter().sum();
            p.bary.lambda = Some(picked.iter().map(|l| l / total).collect());
        }
        p.validate(tags.len())?;
        Ok(p)
    }

    /// Every setting, defaults included, in the config grammar. Parsing the
    /// result gives back an equal config.
    pub fn to_manifest(&self) -> String {
        let p = &self.pipeline;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        for l in &self.languages {
            put(&format!("languages.{}", l.tag), l.path.display().to_string());
        }
        put("vocab_size", self.vocab_size.to_string());
        put("mass_model", p.mass_model.to_string());
        put("seed", self.seed.to_string());
        put("out", self.out.display().to_string());
        put("outer_iters", p.outer_iters.to_string());
        put("early_stop", p.early_stop.to_string());
        if let Some(pivot) = &self.pivot {
            put("pivot", pivot.clone());
        }
        put("warm_start_support", p.warm_start_support.to_string());
        if let Some(tree) = &self.tree {
            put("tree", tree.to_string());
        }
        put("gw.epsilon", p.gw.epsilon.to_string());
        put("gw.max_iters", p.gw.max_outer_iters.to_string());
        put("gw.tolerance", p.gw.tolerance.to_string());
        let (mode, eps) = match p.ot.epsilon {
            Epsilon::MedianRelative(v) => ("median", v),
            Epsilon::Absolute(v) => ("absolute", v),
        };
        put("sinkhorn.epsilon_mode", mode.into());
        put("sinkhorn.epsilon", eps.to_string());
        put("sinkhorn.max_iters", p.ot.max_iters.to_string());
        put("sinkhorn.tolerance", p.ot.tolerance.to_string());
        put("sinkhorn.log_domain_threshold", p.ot.log_domain_threshold.to_string());
        put(
            "sinkhorn.stabilization",
            match p.ot.stabilization {
                Stabilization::Never => "never",
                Stabilization::Auto => "auto",
                Stabilization::Always => "always",
            }
            .into(),
        );
        put("sinkhorn.epsilon_scaling", p.ot.epsilon_scaling.to_string());
        put("barycenter.support_size", self.support_size.to_string());
        put("barycenter.lambda", p.bary.lambda.as_deref().map(join).unwrap_or_default());
        put("barycenter.optimize_weights", p.bary.optimize_weights.to_string());
        put("barycenter.max_iters", p.bary.max_iters.to_string());
        put("barycenter.tolerance", p.bary.location_tolerance.to_string());
        put("barycenter.restarts", p.bary.restarts.to_string());
        put(
            "eval.dictionaries",
            self.eval.dictionaries.as_ref().map(|d| d.display().to_string()).unwrap_or_default(),
        );
        put("eval.k", join(&self.eval.ks));
        put("eval.nn_fallback", self.eval.nn_fallback.to_string());
        put("eval.map_depth", self.eval.map_depth.to_string());
        put("ablate.support_sizes", join(&self.ablate.support_sizes));
        put(
            "ablate.subsets",
            self.ablate.subsets.iter().map(|g| g.join(",")).collect::<Vec<_>>().join(";"),
        );
        put("checkpoint.prune", self.checkpoint_prune.to_string());
        s
    }
}
