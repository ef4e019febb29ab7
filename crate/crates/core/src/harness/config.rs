//! Flat `key = value` experiment and grid files.
//!
//! ```text
//! # comment
//! name = top_down
//! seed = 0
//! model.preset = desk
//! model.attention = top_down
//! schedule.base_lr = 7e-4
//! ```
//!
//! Grid files add `grid.<key> = a, b, c` axes and `grid.baseline`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{SplitPaths, SyntheticTaskConfig};
use crate::error::{Error, Result};
use crate::metrics::AccuracyRule;
use crate::model::{ModelConfig, TextSource};
use crate::training::{ScheduleConfig, TrainConfig};

/// One `key = value` line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits text into entries. Keys may appear once.
pub fn parse_entries(text: &str, source_name: &str) -> Result<Vec<Entry>> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |detail: String| Error::Parse {
            source_name: source_name.into(),
            location: format!("line {line}"),
            detail,
        };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', got '{content}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(err(format!("invalid key '{key}'")));
        }
        if let Some(first) = seen.insert(key.to_string(), line) {
            return Err(err(format!("key '{key}' already set on line {first}")));
        }
        out.push(Entry {
            key: key.into(),
            value: value.into(),
            line,
        });
    }
    Ok(out)
}

/// Where training data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        task: SyntheticTaskConfig,
        /// Generator seed; the experiment seed when absent.
        seed: Option<u64>,
    },
    Vqa {
        train: SplitPaths,
        val: SplitPaths,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub schedule: ScheduleConfig,
    pub data: DataSource,
    pub accuracy_rule: AccuracyRule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            schedule: ScheduleConfig::default(),
            data: DataSource::Synthetic {
                task: SyntheticTaskConfig::default(),
                seed: None,
            },
            accuracy_rule: AccuracyRule::Literal,
        }
    }
}

fn parse<T: FromStr>(entry: &Entry, what: &str) -> Result<T> {
    entry.value.parse().map_err(|_| {
        Error::Config(format!(
            "line {}: {} expects {what}, got '{}'",
            entry.line, entry.key, entry.value
        ))
    })
}

fn parse_bool(entry: &Entry) -> Result<bool> {
    match entry.value.as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => parse::<bool>(entry, "true or false"),
    }
}

fn parse_list(entry: &Entry) -> Vec<String> {
    entry
        .value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// Valid as a directory name on every platform we care about.
pub fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "._-+=".contains(c));
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "experiment name '{name}' must be non-empty and use only letters, digits and ._-+="
        )))
    }
}

/// Split file keys collected before the data source is known.
#[derive(Default)]
struct PendingSplit {
    questions: Option<PathBuf>,
    annotations: Option<PathBuf>,
    features: Option<PathBuf>,
    token_features: Option<PathBuf>,
}

impl PendingSplit {
    fn is_empty(&self) -> bool {
        self.questions.is_none() && self.annotations.is_none() && self.features.is_none() && self.token_features.is_none()
    }

    fn finish(self, split: &str) -> Result<SplitPaths> {
        let need = |p: Option<PathBuf>, what: &str| {
            p.ok_or_else(|| Error::Config(format!("data.{split}.{what} is required for data.source = vqa")))
        };
        Ok(SplitPaths {
            questions: need(self.questions, "questions")?,
            annotations: need(self.annotations, "annotations")?,
            features: need(self.features, "features")?,
            token_features: self.token_features,
        })
    }
}

impl ExperimentConfig {
    /// Reads a config file; relative paths inside resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries = parse_entries(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_entries(&entries, base)?;
        if !entries.iter().any(|e| e.key == "name") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                cfg.name = stem.to_string();
            }
        }
        Ok(cfg)
    }

    pub fn from_entries(entries: &[Entry], base_dir: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = entries.iter().find(|e| e.key == "model.preset") {
            cfg.model = ModelConfig::preset(&p.value)?;
        }
        let mut source = String::from("synthetic");
        let mut synthetic_keys = Vec::new();
        let mut synthetic_seed = None;
        let mut splits = [PendingSplit::default(), PendingSplit::default()];
        let mut vectors: Option<PathBuf> = None;
        let mut text_kind: Option<String> = None;
        let path = |e: &Entry| base_dir.join(&e.value);
        for e in entries {
            let m = &mut cfg.model;
            match e.key.as_str() {
                "model.preset" => {}
                "name" => cfg.name = e.value.clone(),
                "seed" | "train.seed" => cfg.train.seed = parse(e, "an integer")?,
                "eval.accuracy_rule" => {
                    cfg.accuracy_rule = match e.value.as_str() {
                        "literal" => AccuracyRule::Literal,
                        "leave_one_out" => AccuracyRule::LeaveOneOut,
                        _ => return Err(Error::Config(format!(
                            "line {}: eval.accuracy_rule is literal or leave_one_out, got '{}'",
                            e.line, e.value
                        ))),
                    }
                }
                "model.encoder" => m.encoder = e.value.clone(),
                "model.hidden" => m.hidden = parse(e, "an integer")?,
                "model.layers" => m.layers = parse(e, "an integer")?,
                "model.embed_dim" => m.embed_dim = parse(e, "an integer")?,
                "model.text" => text_kind = Some(e.value.clone()),
                "model.pretrained_vectors" => vectors = Some(path(e)),
                "model.trainable_embeddings" => m.trainable_embeddings = parse_bool(e)?,
                "model.ingested_adapter" => m.ingested_adapter = parse_bool(e)?,
                "model.max_len" => m.max_len = parse(e, "an integer")?,
                "model.visual" => m.visual = e.value.parse()?,
                "model.attention" => m.attention = e.value.clone(),
                "model.activation" => m.activation = e.value.parse()?,
                "model.glimpses" => m.glimpses = parse(e, "an integer")?,
                "model.attention_hidden" => m.attention_hidden = parse(e, "an integer")?,
                "model.l2_normalize" => m.l2_normalize = parse_bool(e)?,
                "model.fusion" => m.fusion = e.value.clone(),
                "model.fused_dim" => {
                    m.question_proj = parse(e, "an integer")?;
                    m.visual_proj = m.question_proj;
                }
                "model.question_proj" => m.question_proj = parse(e, "an integer")?,
                "model.visual_proj" => m.visual_proj = parse(e, "an integer")?,
                "model.answer_vocab" => m.answer_vocab = parse(e, "an integer")?,
                "train.batch_size" => cfg.train.batch_size = parse(e, "an integer")?,
                "train.epochs" => cfg.train.epochs = parse(e, "an integer")?,
                "schedule.base_lr" => cfg.schedule.base_lr = parse(e, "a number")?,
                "schedule.warm_start" => cfg.schedule.warm_start = parse(e, "a number")?,
                "schedule.peak" => cfg.schedule.peak = parse(e, "a number")?,
                "schedule.warm_end_epoch" => cfg.schedule.warm_end_epoch = parse(e, "an integer")?,
                "schedule.plateau_end_epoch" => cfg.schedule.plateau_end_epoch = parse(e, "an integer")?,
                "schedule.decay_factor" => cfg.schedule.decay_factor = parse(e, "a number")?,
                "schedule.decay_period" => cfg.schedule.decay_period = parse(e, "an integer")?,
                "schedule.lr_divisor" => cfg.schedule.lr_divisor = parse(e, "a number")?,
                "data.source" => source = e.value.clone(),
                "data.synthetic.seed" => synthetic_seed = Some(parse(e, "an integer")?),
                key if key.starts_with("data.synthetic.") => synthetic_keys.push(e),
                key if key.starts_with("data.train.") || key.starts_with("data.val.") => {
                    let (split, field) = key["data.".len()..].split_once('.').unwrap_or_default();
                    let slot = &mut splits[usize::from(split == "val")];
                    let target = match field {
                        "questions" => &mut slot.questions,
                        "annotations" => &mut slot.annotations,
                        "features" => &mut slot.features,
                        "token_features" => &mut slot.token_features,
                        _ => return Err(unknown(e)),
                    };
                    *target = Some(path(e));
                }
                _ => return Err(unknown(e)),
            }
        }

        cfg.model.text = match (text_kind.as_deref(), vectors) {
            (None | Some("learned"), None) => TextSource::Learned,
            (None | Some("pretrained"), Some(p)) => TextSource::Pretrained(p),
            (Some("pretrained"), None) => {
                return Err(Error::Config("model.text = pretrained needs model.pretrained_vectors".into()))
            }
            (Some("ingested"), None) => TextSource::Ingested,
            (Some(other), _) => {
                return Err(Error::Config(format!(
                    "model.text is learned, pretrained or ingested (with matching keys), got '{other}'"
                )))
            }
        };

        let [train, val] = splits;
        cfg.data = match source.as_str() {
            "synthetic" => {
                if !train.is_empty() || !val.is_empty() {
                    return Err(Error::Config(
                        "data.train.* / data.val.* files given but data.source = synthetic".into(),
                    ));
                }
                let mut task = SyntheticTaskConfig::default();
                for e in synthetic_keys {
                    match &e.key["data.synthetic.".len()..] {
                        "regions" => task.regions = parse(e, "an integer")?,
                        "dim" => task.dim = parse(e, "an integer")?,
                        "noise" => task.noise = parse(e, "a number")?,
                        "train" => task.train = parse(e, "an integer")?,
                        "val" => task.val = parse(e, "an integer")?,
                        "banks" => task.banks = parse(e, "an integer")?,
                        "colors" => task.colors = parse_list(e),
                        "shapes" => task.shapes = parse_list(e),
                        _ => return Err(unknown(e)),
                    }
                }
                DataSource::Synthetic {
                    task,
                    seed: synthetic_seed,
                }
            }
            "vqa" => {
                if !synthetic_keys.is_empty() || synthetic_seed.is_some() {
                    return Err(Error::Config(
                        "data.synthetic.* keys given but data.source = vqa".into(),
                    ));
                }
                DataSource::Vqa {
                    train: train.finish("train")?,
                    val: val.finish("val")?,
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "data.source is synthetic or vqa, got '{other}'"
                )))
            }
        };
        Ok(cfg)
    }

    /// Every check that needs no data or files.
    pub fn validate(&self) -> Result<()> {
        check_name(&self.name)?;
        self.model.validate()?;
        self.train.validate()?;
        self.schedule.validate()?;
        match &self.data {
            DataSource::Synthetic { task, .. } => task.validate(),
            DataSource::Vqa { train, val } => {
                for p in [&train.questions, &train.annotations, &train.features, &val.questions, &val.annotations, &val.features]
                    .into_iter()
                    .chain(train.token_features.iter())
                    .chain(val.token_features.iter())
                {
                    if !p.is_file() {
                        return Err(Error::Config(format!("data file {} does not exist", p.display())));
                    }
                }
                if self.model.text == TextSource::Ingested
                    && (train.token_features.is_none() || val.token_features.is_none())
                {
                    return Err(Error::Config(
                        "model.text = ingested needs data.train.token_features and data.val.token_features".into(),
                    ));
                }
                Ok(())
            }
        }?;
        if self.model.text == TextSource::Ingested && matches!(self.data, DataSource::Synthetic { .. }) {
            return Err(Error::Config("synthetic data has no token features for model.text = ingested".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }
}

fn unknown(e: &Entry) -> Error {
    Error::Config(format!("line {}: unknown key '{}'", e.line, e.key))
}

/// Cartesian grid of experiments around a base config.
#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub name: String,
    pub base: Vec<Entry>,
    pub axes: Vec<(String, Vec<String>)>,
    pub baseline: String,
    pub base_dir: PathBuf,
}

/// One grid member.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub name: String,
    pub axes: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

/// `model.attention` → `attention`.
fn short_key(key: &str) -> &str {
    key.rsplit('.').next().unwrap_or(key)
}

impl GridConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries = parse_entries(&text, &path.display().to_string())?;
        let default_name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("grid");
        Self::from_entries(entries, default_name, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_entries(entries: Vec<Entry>, default_name: &str, base_dir: &Path) -> Result<Self> {
        let mut name = default_name.to_string();
        let mut base = Vec::new();
        let mut axes = Vec::new();
        let mut baseline = None;
        for e in entries {
            match e.key.as_str() {
                "name" => name = e.value.clone(),
                "grid.baseline" => baseline = Some(e.value.clone()),
                key if key.starts_with("grid.") => {
                    let values = parse_list(&e);
                    if values.is_empty() {
                        return Err(Error::Config(format!("line {}: empty axis {key}", e.line)));
                    }
                    axes.push((key["grid.".len()..].to_string(), values));
                }
                _ => base.push(e),
            }
        }
        if axes.is_empty() {
            return Err(Error::Config("a grid needs at least one grid.<key> axis".into()));
        }
        let baseline = baseline.ok_or_else(|| Error::Config("grid.baseline is required".into()))?;
        Ok(Self {
            name,
            base,
            axes,
            baseline,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Number of cells, known before any is built.
    pub fn size(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// All cells in row-major axis order, each validated.
    pub fn cells(&self) -> Result<Vec<GridCell>> {
        let mut cells = Vec::with_capacity(self.size());
        for flat in 0..self.size() {
            let mut rest = flat;
            let mut picks = Vec::with_capacity(self.axes.len());
            for (key, values) in self.axes.iter().rev() {
                picks.push((key.clone(), values[rest % values.len()].clone()));
                rest /= values.len();
            }
            picks.reverse();
            let name = picks
                .iter()
                .map(|(k, v)| format!("{}-{v}", short_key(k)))
                .collect::<Vec<_>>()
                .join("+");
            let mut entries: Vec<Entry> = self
                .base
                .iter()
                .filter(|e| !picks.iter().any(|(k, _)| *k == e.key))
                .cloned()
                .collect();
            entries.extend(picks.iter().map(|(k, v)| Entry {
                key: k.clone(),
                value: v.clone(),
                line: 0,
            }));
            entries.retain(|e| e.key != "name");
            let mut config = ExperimentConfig::from_entries(&entries, &self.base_dir)
                .map_err(|e| Error::Config(format!("grid cell {name}: {e}")))?;
            config.name = name.clone();
            config.validate().map_err(|e| Error::Config(format!("grid cell {name}: {e}")))?;
            cells.push(GridCell {
                name,
                axes: picks,
                config,
            });
        }
        let mut names: Vec<&str> = cells.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("grid cell names are not unique".into()));
        }
        if !names.contains(&self.baseline.as_str()) {
            return Err(Error::Config(format!(
                "grid.baseline '{}' is not a cell (cells: {})",
                self.baseline,
                names.join(", ")
            )));
        }
        Ok(cells)
    }
}
