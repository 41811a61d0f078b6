//! Synthetic classification data with known ("planted") rationales.
//!
//! Text task: filler-token sequences with 1-3 evidence spans drawn from a
//! class-specific phrase library. The libraries include negation patterns
//! ("not" + opposite-class word), so single-token inspection is not enough
//! to classify a span. Image task: noise grids where positives carry one
//! bright 5x5 patch. Gold rationales mark exactly the planted material.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VOCAB_SIZE: usize = 200;
pub const IMAGE_SIDE: usize = 24;

const FILLER_MAX: u32 = 149; // filler ids are 1..=149; 0 is PAD
const POS_WORDS: [u32; 6] = [150, 151, 152, 153, 154, 155];
const NEG_WORDS: [u32; 6] = [160, 161, 162, 163, 164, 165];
const NOT_WORD: u32 = 170;

const MIN_LEN: usize = 40;
const MAX_LEN: usize = 120;
const PATCH_SIDE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Text,
    Image,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Task::Text),
            "image" => Ok(Task::Image),
            other => Err(Error::invalid_argument(format!("unknown task '{other}'"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Text => write!(f, "text"),
            Task::Image => write!(f, "image"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleFeatures {
    Tokens(Vec<u32>),
    Grid {
        height: usize,
        width: usize,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: SampleFeatures,
    pub label: usize,
    pub gold_rationale: Vec<u8>,
}

impl Sample {
    pub fn num_positions(&self) -> usize {
        match &self.features {
            SampleFeatures::Tokens(t) => t.len(),
            SampleFeatures::Grid { height, width, .. } => height * width,
        }
    }

    pub fn gold_bools(&self) -> Vec<bool> {
        self.gold_rationale.iter().map(|&g| g != 0).collect()
    }

    pub fn gold_count(&self) -> usize {
        self.gold_rationale.iter().filter(|&&g| g != 0).count()
    }

    fn validate(&self) -> Result<()> {
        if self.gold_rationale.len() != self.num_positions() {
            return Err(Error::MalformedData(format!(
                "gold rationale length {} does not match {} feature positions",
                self.gold_rationale.len(),
                self.num_positions()
            )));
        }
        if let SampleFeatures::Grid {
            height,
            width,
            values,
        } = &self.features
        {
            if values.len() != height * width {
                return Err(Error::MalformedData(format!(
                    "grid of {height}x{width} carries {} values",
                    values.len()
                )));
            }
        }
        Ok(())
    }
}

/// Human-readable rendering of a token id.
pub fn token_text(id: u32) -> String {
    match id {
        0 => "[pad]".to_string(),
        NOT_WORD => "not".to_string(),
        _ if POS_WORDS.contains(&id) => format!("pos{}", id - POS_WORDS[0]),
        _ if NEG_WORDS.contains(&id) => format!("neg{}", id - NEG_WORDS[0]),
        _ => format!("w{id}"),
    }
}

/// The evidence phrase library for one class. `p` words indicate the
/// class itself, `q` words the opposite class; `not q` flips meaning.
fn phrases(p: &[u32; 6], q: &[u32; 6]) -> Vec<Vec<u32>> {
    vec![
        vec![p[0], p[1], p[2]],
        vec![p[3], p[4], p[0], p[5]],
        vec![p[1], p[5], p[2], p[0], p[4]],
        vec![p[2], p[3], p[5], p[1], p[0], p[4]],
        vec![NOT_WORD, q[0], p[0]],
        vec![NOT_WORD, q[1], p[3], p[2]],
        vec![NOT_WORD, q[2], NOT_WORD, q[4]],
        vec![p[5], NOT_WORD, q[3], p[1], p[2], p[0]],
    ]
}

fn class_phrases(label: usize) -> Vec<Vec<u32>> {
    if label == 1 {
        phrases(&POS_WORDS, &NEG_WORDS)
    } else {
        phrases(&NEG_WORDS, &POS_WORDS)
    }
}

fn generate_text_sample(label: usize, rng: &mut ChaCha8Rng) -> Sample {
    let len = rng.gen_range(MIN_LEN..=MAX_LEN);
    let mut tokens: Vec<u32> = (0..len).map(|_| rng.gen_range(1..=FILLER_MAX)).collect();
    let mut gold = vec![0u8; len];
    let library = class_phrases(label);
    let n_spans = rng.gen_range(1..=3usize);
    let mut placed = 0;
    while placed < n_spans {
        let phrase = &library[rng.gen_range(0..library.len())];
        let plen = phrase.len();
        // keep a 1-token buffer between spans so planted spans stay distinct
        let mut accepted = false;
        for _ in 0..100 {
            let start = rng.gen_range(0..=len - plen);
            let lo = start.saturating_sub(1);
            let hi = (start + plen + 1).min(len);
            if gold[lo..hi].iter().all(|&g| g == 0) {
                tokens[start..start + plen].copy_from_slice(phrase);
                gold[start..start + plen].iter_mut().for_each(|g| *g = 1);
                accepted = true;
                break;
            }
        }
        if !accepted {
            break; // no room left; keep the spans placed so far
        }
        placed += 1;
    }
    Sample {
        features: SampleFeatures::Tokens(tokens),
        label,
        gold_rationale: gold,
    }
}

fn generate_image_sample(label: usize, rng: &mut ChaCha8Rng) -> Sample {
    let side = IMAGE_SIDE;
    let mut values: Vec<f64> = (0..side * side).map(|_| rng.gen_range(0.0..0.4)).collect();
    let mut gold = vec![0u8; side * side];
    if label == 1 {
        let r0 = rng.gen_range(0..=side - PATCH_SIDE);
        let c0 = rng.gen_range(0..=side - PATCH_SIDE);
        for r in r0..r0 + PATCH_SIDE {
            for c in c0..c0 + PATCH_SIDE {
                values[r * side + c] = rng.gen_range(0.75..1.0);
                gold[r * side + c] = 1;
            }
        }
    }
    Sample {
        features: SampleFeatures::Grid {
            height: side,
            width: side,
            values,
        },
        label,
        gold_rationale: gold,
    }
}

/// Deterministically generate `size` samples, labels alternating 0/1.
pub fn generate_planted_dataset(task: Task, size: usize, rng_seed: u64) -> Result<Vec<Sample>> {
    if size == 0 {
        return Err(Error::invalid_argument("dataset size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok((0..size)
        .map(|idx| {
            let label = idx % 2;
            match task {
                Task::Text => generate_text_sample(label, &mut rng),
                Task::Image => generate_image_sample(label, &mut rng),
            }
        })
        .collect())
}

/// One JSON object per line: `features`, `label`, `gold_rationale`.
pub fn save_dataset_jsonl(samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_dataset_jsonl(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let text = fs::read_to_string(&path)?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(line).map_err(|e| {
            Error::MalformedData(format!("line {}: {e}", lineno + 1))
        })?;
        sample.validate()?;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::MalformedData("dataset contains no samples".into()));
    }
    Ok(samples)
}
