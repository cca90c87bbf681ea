//! Labelled sketch collections loaded from JSON-lines files.
//!
//! Each line is either a QuickDraw record (`"drawing"`) or a canonical record
//! written by [`Dataset::write_ndjson`] (`"steps"`). The category comes from
//! `"word"` when present and from the file stem otherwise; a canonical record
//! may also carry its `"split"`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, PreparedSketch};
use crate::sketch_data::{parse_quickdraw_line, Pen, VectorSketch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSketch {
    pub sketch: VectorSketch,
    pub word: String,
    pub split: Option<Split>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub items: Vec<LabeledSketch>,
}

impl Dataset {
    /// Reads every file in order. Blank lines are ignored.
    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
        let mut items = Vec::new();
        for path in paths {
            let path = path.as_ref();
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sketch").to_string();
            let file = File::open(path)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
            let reader = BufReader::new(file);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let item = parse_record(&line, &stem).map_err(|e| match e {
                    Error::MalformedRecord(msg) => {
                        Error::MalformedRecord(format!("{}:{}: {msg}", path.display(), i + 1))
                    }
                    other => other,
                })?;
                items.push(item);
            }
        }
        Ok(Dataset { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Sorted distinct category names; labels index into this list.
    pub fn categories(&self) -> Vec<String> {
        self.items.iter().map(|it| it.word.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn label_of(categories: &[String], word: &str) -> Option<usize> {
        categories.binary_search_by(|c| c.as_str().cmp(word)).ok()
    }

    /// Drops empty sketches and sketches longer than `n_max`; returns how many were dropped.
    pub fn retain_fitting(&mut self, n_max: usize) -> usize {
        let before = self.items.len();
        self.items.retain(|it| !it.sketch.is_empty() && it.sketch.len() <= n_max);
        before - self.items.len()
    }

    /// Assigns a split to every item without one: per category, a shuffled
    /// `test_per_category` items go to test and the rest to train.
    pub fn assign_splits(&mut self, test_per_category: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for word in self.categories() {
            let mut idx: Vec<usize> = (0..self.items.len())
                .filter(|&i| self.items[i].word == word && self.items[i].split.is_none())
                .collect();
            idx.shuffle(&mut rng);
            for (k, i) in idx.into_iter().enumerate() {
                self.items[i].split = Some(if k < test_per_category { Split::Test } else { Split::Train });
            }
        }
    }

    pub fn subset(&self, split: Split) -> Dataset {
        Dataset { items: self.items.iter().filter(|it| it.split == Some(split)).cloned().collect() }
    }

    /// Standard deviation of all pen-down and lift offsets (both axes pooled).
    pub fn offset_scale(&self) -> f64 {
        let values: Vec<f64> = self
            .items
            .iter()
            .flat_map(|it| it.sketch.steps.iter())
            .filter(|s| s.pen != Pen::End)
            .flat_map(|s| [s.dx, s.dy])
            .collect();
        if values.len() < 2 {
            return 1.0;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
        if var > 0.0 {
            var.sqrt()
        } else {
            1.0
        }
    }

    /// Canonical JSON-lines: `{"word", "split", "steps"}` per line.
    pub fn write_ndjson(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for it in &self.items {
            let mut v = it.sketch.to_steps_json();
            v["word"] = Value::from(it.word.clone());
            if let Some(split) = it.split {
                v["split"] = serde_json::to_value(split).expect("split serializes");
            }
            writeln!(w, "{v}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rasterizes and samples every item with `cfg`, using up to `workers`
    /// threads. Output order matches item order.
    pub fn prepare(&self, cfg: &ModelConfig, categories: &[String], workers: usize) -> Result<Vec<PreparedSketch>> {
        let prep = |it: &LabeledSketch| {
            let label = Dataset::label_of(categories, &it.word)
                .ok_or_else(|| Error::MalformedRecord(format!("unknown category {:?}", it.word)))?;
            PreparedSketch::from_vector(&it.sketch, label, cfg)
        };
        let workers = workers.max(1);
        if workers == 1 || self.items.len() < 2 * workers {
            return self.items.iter().map(prep).collect();
        }
        let chunk = self.items.len().div_ceil(workers);
        let parts: Vec<Result<Vec<PreparedSketch>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .items
                .chunks(chunk)
                .map(|c| scope.spawn(move || c.iter().map(prep).collect::<Result<Vec<_>>>()))
                .collect();
            handles.into_iter().map(|h| h.join().expect("preprocessing worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(self.items.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

fn parse_record(line: &str, stem: &str) -> Result<LabeledSketch> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| Error::MalformedRecord(format!("invalid JSON: {e}")))?;
    let word = value.get("word").and_then(Value::as_str).unwrap_or(stem).to_string();
    let split = match value.get("split") {
        None => None,
        Some(s) => Some(
            serde_json::from_value(s.clone())
                .map_err(|_| Error::MalformedRecord(format!("unknown split {s}")))?,
        ),
    };
    let sketch = if value.get("steps").is_some() {
        VectorSketch::from_steps_json(&value)?
    } else {
        parse_quickdraw_line(line)?.sketch
    };
    Ok(LabeledSketch { sketch, word, split })
}
