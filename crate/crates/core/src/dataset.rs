//! Balanced pair construction: every dataset record (text, entity, correct
//! item, wrong item) expands into one consistent and one inconsistent
//! example, and splits operate on records so a pair never straddles a split.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{tokenize, EmbeddingStore};
use crate::kg::{GraphError, GraphStore};
use crate::models::{ModelConfig, ModelError, PreparedExample};
use crate::scalar::Real;
use crate::text::{locate_mention, TextError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset file: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no eligible negative candidate for entity {0:?}")]
    NoNegative(String),
    #[error("graph store has no record for item {0:?}")]
    MissingGraph(String),
    #[error("item {0:?} has no triplets after truncation")]
    NoTriplets(String),
    #[error("mention {0:?} not found in text")]
    MentionNotFound(String),
    #[error("bad split specification: {0}")]
    BadSplit(String),
    #[error("split manifest is not valid JSON: {0}")]
    ManifestFormat(#[from] serde_json::Error),
}

/// One disambiguation task: a sentence, the mentioned entity, and the two
/// same-name candidate items. Field names follow the companion corpus: the
/// sentence is stored under "string" and the entity surface form under
/// "text".
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DisambRecord {
    #[serde(rename = "string")]
    pub text: String,
    #[serde(rename = "text")]
    pub entity: String,
    pub correct_id: String,
    pub wrong_id: String,
}

impl DisambRecord {
    pub fn is_valid(&self) -> bool {
        !self.text.is_empty()
            && !self.entity.is_empty()
            && !self.correct_id.is_empty()
            && !self.wrong_id.is_empty()
            && self.correct_id != self.wrong_id
    }
}

/// One record per valid JSONL line; returns (records, skipped line count).
pub fn load_records(path: impl AsRef<Path>) -> Result<(Vec<DisambRecord>, usize), DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut skipped = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DisambRecord>(&line) {
            Ok(rec) if rec.is_valid() => records.push(rec),
            _ => skipped += 1,
        }
    }
    Ok((records, skipped))
}

pub fn save_records(records: &[DisambRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut out = File::create(path)?;
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Case-folded label/alias lookup: surface form -> item ids.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct AliasIndex {
    map: HashMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct AliasLine {
    label: String,
    ids: Vec<String>,
}

impl AliasIndex {
    /// Index every record under its label and each alias.
    pub fn from_store(store: &GraphStore) -> Self {
        let mut index = AliasIndex::default();
        for rec in store.iter() {
            index.add(&rec.label, &rec.id);
            for alias in &rec.aliases {
                index.add(alias, &rec.id);
            }
        }
        index
    }

    pub fn add(&mut self, surface: &str, id: &str) {
        let ids = self.map.entry(surface.to_lowercase()).or_default();
        if !ids.iter().any(|x| x == id) {
            ids.push(id.to_string());
            ids.sort();
        }
    }

    /// Item ids matching the surface form, in id order.
    pub fn candidates(&self, surface: &str) -> &[String] {
        self.map
            .get(&surface.to_lowercase())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let reader = BufReader::new(File::open(path)?);
        let mut index = AliasIndex::default();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: AliasLine = serde_json::from_str(&line)?;
            for id in &parsed.ids {
                index.add(&parsed.label, id);
            }
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut labels: Vec<&String> = self.map.keys().collect();
        labels.sort();
        let mut out = File::create(path)?;
        for label in labels {
            let line = AliasLine {
                label: label.clone(),
                ids: self.map[label].clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Deterministic same-name negative: the lexicographically smallest item id
/// whose label or alias matches the entity (case-folded), differs from the
/// correct item and has at least one triplet.
pub fn select_negative(
    entity: &str,
    correct_id: &str,
    index: &AliasIndex,
    graphs: &GraphStore,
) -> Result<String, DatasetError> {
    index
        .candidates(entity)
        .iter()
        .find(|id| {
            id.as_str() != correct_id
                && graphs
                    .get(id)
                    .is_some_and(|rec| !rec.triplets.is_empty())
        })
        .cloned()
        .ok_or_else(|| DatasetError::NoNegative(entity.to_string()))
}

/// Expand one record into its (consistent, inconsistent) example pair, both
/// graphs truncated to `hops`.
pub fn expand_to_examples<S: Real>(
    record: &DisambRecord,
    graphs: &GraphStore,
    embeddings: &EmbeddingStore<S>,
    config: &ModelConfig,
    hops: usize,
) -> Result<(PreparedExample<S>, PreparedExample<S>), DatasetError> {
    let tokens = tokenize(&record.text, true);
    let mask = locate_mention(&tokens, &record.entity).map_err(|e| match e {
        TextError::MentionNotFound(m) => DatasetError::MentionNotFound(m),
        other => DatasetError::Model(ModelError::Text(other)),
    })?;

    let build = |id: &str, consistent: bool| -> Result<PreparedExample<S>, DatasetError> {
        let rec = graphs
            .get(id)
            .ok_or_else(|| DatasetError::MissingGraph(id.to_string()))?;
        let graph = rec.to_graph().truncate_khop(hops);
        if graph.triplets().is_empty() {
            return Err(DatasetError::NoTriplets(id.to_string()));
        }
        Ok(PreparedExample::build(
            &tokens,
            mask.clone(),
            &graph,
            embeddings,
            config,
            consistent,
        )?)
    };

    Ok((build(&record.correct_id, true)?, build(&record.wrong_id, false)?))
}

/// Split sizes as record counts or ratios of the corpus.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSizes {
    Counts { train: usize, dev: usize, test: usize },
    Ratios { train: f64, dev: f64, test: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub sizes: SplitSizes,
    pub seed: u64,
}

/// Record indices per split; positive and negative examples of a record
/// always travel together.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SplitManifest {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        Ok(std::fs::write(path, serde_json::to_vec_pretty(self)?)?)
    }
}

/// Seeded record-level split.
pub fn split_records(record_count: usize, spec: &SplitSpec) -> Result<SplitManifest, DatasetError> {
    let (n_train, n_dev, n_test) = match spec.sizes {
        SplitSizes::Counts { train, dev, test } => {
            if train + dev + test > record_count {
                return Err(DatasetError::BadSplit(format!(
                    "counts {train}+{dev}+{test} exceed corpus size {record_count}"
                )));
            }
            (train, dev, test)
        }
        SplitSizes::Ratios { train, dev, test } => {
            if !(0.0..=1.0).contains(&train)
                || !(0.0..=1.0).contains(&dev)
                || !(0.0..=1.0).contains(&test)
                || train + dev + test > 1.0 + 1e-12
            {
                return Err(DatasetError::BadSplit(format!(
                    "ratios {train}+{dev}+{test} must each lie in [0,1] and sum to at most 1"
                )));
            }
            let n_train = (train * record_count as f64).floor() as usize;
            let n_dev = (dev * record_count as f64).floor() as usize;
            let n_test = (test * record_count as f64).floor() as usize;
            (n_train, n_dev, n_test)
        }
    };
    let mut order: Vec<usize> = (0..record_count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let dev_end = n_train + n_dev;
    Ok(SplitManifest {
        train: order[..n_train].to_vec(),
        dev: order[n_train..dev_end].to_vec(),
        test: order[dev_end..dev_end + n_test].to_vec(),
    })
}

/// Attrition accounting for one dataset build.
#[derive(Debug, Default, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct BuildReport {
    pub records_read: usize,
    pub invalid_lines: usize,
    pub kept: usize,
    pub dropped_no_negative: usize,
    pub dropped_mention_not_found: usize,
    pub dropped_missing_graph: usize,
    pub dropped_no_triplets: usize,
}

impl BuildReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        Ok(std::fs::write(path, serde_json::to_vec_pretty(self)?)?)
    }
}

/// Filter records to those that expand cleanly, tallying every drop reason.
pub fn filter_expandable<S: Real>(
    records: &[DisambRecord],
    graphs: &GraphStore,
    embeddings: &EmbeddingStore<S>,
    config: &ModelConfig,
    hops: usize,
    report: &mut BuildReport,
) -> Vec<DisambRecord> {
    let mut kept = Vec::new();
    for rec in records {
        match expand_to_examples(rec, graphs, embeddings, config, hops) {
            Ok(_) => kept.push(rec.clone()),
            Err(DatasetError::MentionNotFound(_)) => report.dropped_mention_not_found += 1,
            Err(DatasetError::MissingGraph(_)) => report.dropped_missing_graph += 1,
            Err(DatasetError::NoTriplets(_)) => report.dropped_no_triplets += 1,
            Err(_) => report.dropped_no_triplets += 1,
        }
    }
    report.kept = kept.len();
    kept
}
