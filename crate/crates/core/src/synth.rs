//! Synthetic disambiguation corpora with a controlled vocabulary, used by the
//! overfit and ordering test suites and by the CLI's demo mode.
//!
//! Every record pairs one sentence with two same-name items whose graphs
//! differ in their relation labels; a configurable share of records also
//! differs in the object nodes, which is the only signal centroid-based
//! models can see. Relation labels never enter a centroid, so the
//! vector-distance baseline stays near chance while triplet-reading models
//! can separate the classes cleanly.

use crate::dataset::{select_negative, AliasIndex, DisambRecord};
use crate::embedding::EmbeddingStore;
use crate::kg::{GraphRecord, GraphStore};
use crate::models::{ModelConfig, PreparedExample};
use crate::scalar::Real;

pub const EMBEDDING_DIM: usize = 8;

/// A fully materialized synthetic corpus.
pub struct SyntheticCorpus {
    pub records: Vec<DisambRecord>,
    pub graphs: GraphStore,
    pub aliases: AliasIndex,
}

/// The fixed synthetic vocabulary. Vectors live on separate axes: axis 0
/// carries the centroid geometry, axes 2 and 3 carry relation labels; entity
/// names and filler words are out of vocabulary on purpose, embedding to
/// zero.
pub fn embeddings<S: Real>() -> EmbeddingStore<S> {
    let mut store = EmbeddingStore::new(EMBEDDING_DIM, true);
    let axis = |i: usize, v: f64| {
        let mut vec = vec![S::zero(); EMBEDDING_DIM];
        vec[i] = S::of(v);
        vec
    };
    store.insert("ctxa", axis(0, 1.0));
    store.insert("ctxb", axis(0, -0.5));
    store.insert("obja1", axis(0, 0.3));
    store.insert("obja2", axis(0, -0.3));
    store.insert("objb1", axis(0, 1.5));
    store.insert("objb2", axis(0, 1.5));
    store.insert("relgood", axis(2, 1.0));
    store.insert("relgood2", axis(2, 0.5));
    store.insert("relbad", axis(3, 1.0));
    store.insert("relbad2", axis(3, 0.5));
    store
}

fn graph_record(id: &str, name: &str, objects: [&str; 2], relations: [&str; 2]) -> GraphRecord {
    GraphRecord {
        id: id.to_string(),
        label: name.to_string(),
        aliases: Vec::new(),
        triplets: vec![
            [name.to_string(), relations[0].to_string(), objects[0].to_string()],
            [name.to_string(), relations[1].to_string(), objects[1].to_string()],
        ],
    }
}

const GOOD: [&str; 2] = ["relgood", "relgood2"];
const BAD: [&str; 2] = ["relbad", "relbad2"];
const OBJS_A: [&str; 2] = ["obja1", "obja2"];
const OBJS_B: [&str; 2] = ["objb1", "objb2"];

fn build(n_records: usize, two_types: bool, blind_every: Option<usize>) -> SyntheticCorpus {
    let mut records = Vec::with_capacity(n_records);
    let mut graph_records = Vec::with_capacity(2 * n_records);
    for i in 0..n_records {
        let type_b = two_types && i % 2 == 1;
        let blind = blind_every.is_some_and(|k| (i / 2) % k == 0);
        let name = format!("name{i}");
        let ctx = if type_b { "ctxb" } else { "ctxa" };
        let own = if type_b { OBJS_B } else { OBJS_A };
        let other = if type_b { OBJS_A } else { OBJS_B };
        let wrong_objs = if blind { own } else { other };
        let correct_id = format!("Q{i}a");
        let wrong_id = format!("Q{i}b");
        graph_records.push(graph_record(&correct_id, &name, own, GOOD));
        graph_records.push(graph_record(&wrong_id, &name, wrong_objs, BAD));
        records.push(DisambRecord {
            text: format!("{name} was seen near {ctx}"),
            entity: name,
            correct_id,
            wrong_id,
        });
    }
    let graphs = GraphStore::from_records(graph_records);
    let aliases = AliasIndex::from_store(&graphs);
    // negative selection must reproduce the wrong ids deterministically
    for rec in &mut records {
        rec.wrong_id = select_negative(&rec.entity, &rec.correct_id, &aliases, &graphs)
            .expect("every synthetic entity has one same-name alternative");
    }
    SyntheticCorpus {
        records,
        graphs,
        aliases,
    }
}

/// Corpus for the ordering experiment: two sentence types, correct and wrong
/// graphs always differ in relations, and all but every `1/blind_every`-th
/// record pair also differs in object nodes. The object/context geometry
/// keeps the centroid distance near chance for any single threshold.
pub fn ordering_corpus(n_records: usize) -> SyntheticCorpus {
    build(n_records, true, Some(3))
}

/// Linearly separable corpus for memorization tests: one sentence type,
/// object nodes and relations both discriminative in every record.
pub fn overfit_corpus(n_records: usize) -> SyntheticCorpus {
    build(n_records, false, None)
}

/// Expand the given record indices into (consistent, inconsistent) pairs.
pub fn prepared_examples<S: Real>(
    corpus: &SyntheticCorpus,
    indices: &[usize],
    config: &ModelConfig,
    hops: usize,
) -> Vec<PreparedExample<S>> {
    let store = embeddings::<S>();
    let mut out = Vec::with_capacity(2 * indices.len());
    for &i in indices {
        let (pos, neg) =
            crate::dataset::expand_to_examples(&corpus.records[i], &corpus.graphs, &store, config, hops)
                .expect("synthetic records always expand");
        out.push(pos);
        out.push(neg);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{euclidean_distance, fit_distance_threshold, Arch};
    use crate::train::{evaluate_distance, metrics_from_pairs};
    use std::collections::BTreeSet;

    fn distances(examples: &[PreparedExample<f64>]) -> Vec<(f64, bool)> {
        examples
            .iter()
            .map(|ex| {
                (
                    euclidean_distance(&ex.text_centroid, &ex.graph_centroid).unwrap(),
                    ex.consistent,
                )
            })
            .collect()
    }

    #[test]
    fn ordering_corpus_distances_take_four_values() {
        let corpus = ordering_corpus(60);
        let config = ModelConfig::toy(Arch::VectorDistance);
        let indices: Vec<usize> = (0..60).collect();
        let examples = prepared_examples::<f64>(&corpus, &indices, &config, 2);
        let pairs = distances(&examples);
        let values: BTreeSet<u64> = pairs.iter().map(|&(d, _)| d.to_bits()).collect();
        assert_eq!(values.len(), 4);
    }

    #[test]
    fn fitted_threshold_stays_near_chance() {
        let corpus = ordering_corpus(100);
        let config = ModelConfig::toy(Arch::VectorDistance);
        let train_idx: Vec<usize> = (0..60).collect();
        let test_idx: Vec<usize> = (60..100).collect();
        let train = prepared_examples::<f64>(&corpus, &train_idx, &config, 2);
        let test = prepared_examples::<f64>(&corpus, &test_idx, &config, 2);
        let threshold = fit_distance_threshold(&distances(&train)).unwrap();
        let metrics = evaluate_distance(threshold, &test).unwrap();
        assert!(
            (metrics.f1 - 50.0).abs() <= 15.0,
            "vector-distance F1 {} strayed from chance",
            metrics.f1
        );
    }

    #[test]
    fn relations_separate_classes_exactly() {
        // a trivial rule over relation axes labels every example correctly,
        // so triplet-reading models have a clean target
        let corpus = ordering_corpus(40);
        let config = ModelConfig::toy(Arch::RnnTriplets);
        let indices: Vec<usize> = (0..40).collect();
        let examples = prepared_examples::<f64>(&corpus, &indices, &config, 2);
        let pairs: Vec<(bool, bool)> = examples
            .iter()
            .map(|ex| {
                let good_axis: f64 = ex.triplet_vectors.iter().map(|t| t[EMBEDDING_DIM + 2]).sum();
                (good_axis > 0.0, ex.consistent)
            })
            .collect();
        let m = metrics_from_pairs(&pairs);
        assert_eq!(m.f1, 100.0);
    }

    #[test]
    fn corpora_are_balanced_and_deterministic() {
        let a = ordering_corpus(20);
        let b = ordering_corpus(20);
        assert_eq!(a.records, b.records);
        let config = ModelConfig::toy(Arch::Centroid);
        let indices: Vec<usize> = (0..20).collect();
        let examples = prepared_examples::<f64>(&a, &indices, &config, 2);
        let pos = examples.iter().filter(|e| e.consistent).count();
        assert_eq!(pos * 2, examples.len());
    }

    #[test]
    fn overfit_corpus_is_linearly_separable_on_centroids() {
        let corpus = overfit_corpus(16);
        let config = ModelConfig::toy(Arch::Centroid);
        let indices: Vec<usize> = (0..16).collect();
        let examples = prepared_examples::<f64>(&corpus, &indices, &config, 2);
        assert_eq!(examples.len(), 32);
        for ex in &examples {
            let x0 = ex.graph_centroid[0];
            if ex.consistent {
                assert!(x0 < 0.5, "consistent centroid {x0}");
            } else {
                assert!(x0 > 0.5, "inconsistent centroid {x0}");
            }
        }
    }
}
