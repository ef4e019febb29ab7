//! Compositional attribute-lookup task with known answers.
//!
//! Every image holds `k` objects, each with a color and a shape. Region
//! `i` carries a one-hot object-index block, then its color and shape
//! one-hots inside one of `banks` slots chosen by `i mod banks`, plus
//! Gaussian noise on every channel. Each image gets one question, "what
//! <color|shape> is object <i>", with `i` counted from 1.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::features::FeatureFile;
use super::vqa::{
    annotations_to_value, questions_to_value, write_json, AnnotationRecord, QuestionRecord,
    HUMAN_ANSWERS,
};
use crate::encoders::RegionFeatures;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_COLORS: [&str; 8] = [
    "red", "green", "blue", "yellow", "purple", "orange", "white", "black",
];
pub const DEFAULT_SHAPES: [&str; 8] = [
    "cube", "sphere", "cylinder", "cone", "torus", "pyramid", "prism", "ring",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskConfig {
    pub regions: usize,
    pub dim: usize,
    pub colors: Vec<String>,
    pub shapes: Vec<String>,
    pub noise: f64,
    pub train: usize,
    pub val: usize,
    pub banks: usize,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        Self {
            regions: 6,
            dim: 64,
            colors: DEFAULT_COLORS.map(String::from).to_vec(),
            shapes: DEFAULT_SHAPES.map(String::from).to_vec(),
            noise: 0.1,
            train: 4000,
            val: 1000,
            banks: 2,
        }
    }
}

impl SyntheticTaskConfig {
    /// Channels used by the index block and attribute banks.
    pub fn required_dim(&self) -> usize {
        self.regions + self.banks * (self.colors.len() + self.shapes.len())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.regions < 2 {
            return fail(format!("synthetic task needs at least 2 regions, got {}", self.regions));
        }
        if self.colors.len() < 2 || self.shapes.len() < 2 {
            return fail("synthetic task needs at least 2 colors and 2 shapes".into());
        }
        let mut names: Vec<&String> = self.colors.iter().chain(&self.shapes).collect();
        names.sort();
        names.dedup();
        if names.len() != self.colors.len() + self.shapes.len() {
            return fail("synthetic color and shape names must be distinct".into());
        }
        if self.banks == 0 {
            return fail("synthetic task needs at least one attribute bank".into());
        }
        if self.dim < self.required_dim() {
            return fail(format!(
                "synthetic feature dimension {} is below the {} channels the layout needs",
                self.dim,
                self.required_dim()
            ));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return fail("synthetic noise must be a non-negative number".into());
        }
        if self.train == 0 || self.val == 0 {
            return fail("synthetic splits must be non-empty".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Color,
    Shape,
}

/// Question, annotation and features of one split, plus the hidden
/// `(color, shape)` indices of every object per image.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSplit {
    pub questions: Vec<QuestionRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub features: FeatureFile,
    pub objects: BTreeMap<u64, Vec<(usize, usize)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub config: SyntheticTaskConfig,
    pub train: SyntheticSplit,
    pub val: SyntheticSplit,
}

pub fn question_text(attribute: Attribute, object: usize) -> String {
    let word = match attribute {
        Attribute::Color => "color",
        Attribute::Shape => "shape",
    };
    format!("what {word} is object {}", object + 1)
}

/// Inverse of [`question_text`]; `object` is 0-based.
pub fn parse_question(text: &str) -> Option<(Attribute, usize)> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let ["what", attr, "is", "object", idx] = words[..] else {
        return None;
    };
    let attribute = match attr {
        "color" => Attribute::Color,
        "shape" => Attribute::Shape,
        _ => return None,
    };
    let object: usize = idx.parse().ok()?;
    object.checked_sub(1).map(|o| (attribute, o))
}

impl SyntheticDataset {
    /// Reads the answer from the hidden attribute table.
    pub fn oracle_answer(&self, question: &QuestionRecord) -> Option<&str> {
        let (attribute, object) = parse_question(&question.question)?;
        let split = [&self.train, &self.val]
            .into_iter()
            .find(|s| s.objects.contains_key(&question.image_id))?;
        let (color, shape) = *split.objects[&question.image_id].get(object)?;
        Some(match attribute {
            Attribute::Color => &self.config.colors[color],
            Attribute::Shape => &self.config.shapes[shape],
        })
    }

    /// Writes `{train,val}_{questions,annotations}.json` and
    /// `{train,val}_features.vqrf` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, split) in [("train", &self.train), ("val", &self.val)] {
            write_json(
                &dir.join(format!("{name}_questions.json")),
                &questions_to_value(&split.questions),
            )?;
            write_json(
                &dir.join(format!("{name}_annotations.json")),
                &annotations_to_value(&split.annotations),
            )?;
            split.features.write(&dir.join(format!("{name}_features.vqrf")))?;
        }
        Ok(())
    }
}

pub fn generate_synthetic(config: &SyntheticTaskConfig, seed: u64) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = generate_split(config, 0, config.train, &mut rng)?;
    let val = generate_split(config, config.train as u64, config.val, &mut rng)?;
    Ok(SyntheticDataset {
        config: config.clone(),
        train,
        val,
    })
}

fn generate_split(
    config: &SyntheticTaskConfig,
    first_id: u64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticSplit> {
    let (k, dv) = (config.regions, config.dim);
    let (n_colors, n_shapes) = (config.colors.len(), config.shapes.len());
    let noise = Normal::new(0.0, config.noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut split = SyntheticSplit {
        questions: Vec::with_capacity(count),
        annotations: Vec::with_capacity(count),
        features: FeatureFile::new(k, dv),
        objects: BTreeMap::new(),
    };
    for offset in 0..count as u64 {
        let id = first_id + offset;
        let objects: Vec<(usize, usize)> = (0..k)
            .map(|_| (rng.random_range(0..n_colors), rng.random_range(0..n_shapes)))
            .collect();
        let mut data = vec![0.0; k * dv];
        for (i, (color, shape)) in objects.iter().enumerate() {
            let row = &mut data[i * dv..(i + 1) * dv];
            let bank = config.regions + (i % config.banks) * (n_colors + n_shapes);
            row[i] = 1.0;
            row[bank + color] = 1.0;
            row[bank + n_colors + shape] = 1.0;
            for x in row.iter_mut() {
                *x = f64::from((*x + noise.sample(rng)) as f32);
            }
        }
        let attribute = if rng.random_bool(0.5) {
            Attribute::Color
        } else {
            Attribute::Shape
        };
        let object = rng.random_range(0..k);
        let answer = match attribute {
            Attribute::Color => &config.colors[objects[object].0],
            Attribute::Shape => &config.shapes[objects[object].1],
        };
        split.questions.push(QuestionRecord {
            question_id: id,
            image_id: id,
            question: question_text(attribute, object),
        });
        split.annotations.push(AnnotationRecord {
            question_id: id,
            answer_type: "other".into(),
            multiple_choice_answer: answer.clone(),
            answers: vec![answer.clone(); HUMAN_ANSWERS],
        });
        split
            .features
            .insert(id, RegionFeatures::new(Tensor::new(vec![k, dv], data)?)?)?;
        split.objects.insert(id, objects);
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticTaskConfig {
        SyntheticTaskConfig {
            train: 300,
            val: 200,
            ..SyntheticTaskConfig::default()
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_synthetic(&small(), 3).unwrap();
        assert_eq!(a, generate_synthetic(&small(), 3).unwrap());
        assert_ne!(a, generate_synthetic(&small(), 4).unwrap());
    }

    #[test]
    fn oracle_answers_everything() {
        let d = generate_synthetic(&small(), 5).unwrap();
        for split in [&d.train, &d.val] {
            for (q, a) in split.questions.iter().zip(&split.annotations) {
                assert_eq!(d.oracle_answer(q), Some(a.multiple_choice_answer.as_str()));
            }
        }
    }

    #[test]
    fn layout_places_one_hots() {
        let cfg = SyntheticTaskConfig {
            noise: 0.0,
            ..small()
        };
        let d = generate_synthetic(&cfg, 6).unwrap();
        let (id, objects) = d.train.objects.iter().next().unwrap();
        let m = d.train.features.get(*id).unwrap().matrix();
        for (i, (c, s)) in objects.iter().enumerate() {
            let row = m.row(i);
            let bank = 6 + (i % 2) * 16;
            let hot: Vec<usize> = (0..64).filter(|&j| row[j] == 1.0).collect();
            assert_eq!(hot, vec![i, bank + c, bank + 8 + s]);
        }
    }

    #[test]
    fn question_text_round_trip() {
        assert_eq!(question_text(Attribute::Shape, 2), "what shape is object 3");
        assert_eq!(parse_question("what shape is object 3"), Some((Attribute::Shape, 2)));
        assert_eq!(parse_question("what shape is object 0"), None);
        assert_eq!(parse_question("is it red"), None);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            SyntheticTaskConfig { regions: 1, ..small() },
            SyntheticTaskConfig { dim: 30, ..small() },
            SyntheticTaskConfig { colors: vec!["red".into()], ..small() },
            SyntheticTaskConfig { shapes: vec!["red".into(), "cube".into()], ..small() },
            SyntheticTaskConfig { banks: 0, ..small() },
            SyntheticTaskConfig { noise: -1.0, ..small() },
        ];
        for cfg in bad {
            assert!(matches!(generate_synthetic(&cfg, 0), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
