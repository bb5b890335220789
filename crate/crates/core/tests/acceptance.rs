//! End-to-end acceptance checks: gradient correctness for every
//! architecture, memorization capacity, structural invariants, the threshold
//! oracle, the scaled ordering experiment, reproducibility and checkpoint
//! round-trips. Each test prints one summary line.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ned_core::autodiff::grad_check;
use ned_core::dataset::{split_records, SplitManifest, SplitSizes, SplitSpec};
use ned_core::embedding::EmbeddingStore;
use ned_core::kg::KnowledgeGraph;
use ned_core::models::{
    fit_distance_threshold, load_checkpoint, save_checkpoint, Arch, Model, ModelConfig,
    PreparedExample,
};
use ned_core::synth;
use ned_core::text::MentionMask;
use ned_core::train::{
    evaluate, fit_and_evaluate_distance, metrics_from_pairs, train, write_log, Metrics,
    TrainConfig,
};

/// Dense random embeddings over a tiny closed vocabulary.
fn dense_store(seed: u64) -> EmbeddingStore<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = EmbeddingStore::new(8, true);
    let words = [
        "w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9", "r0", "r1", "r2",
    ];
    for w in words {
        let v: Vec<f64> = (0..8).map(|_| rng.random_range(-0.8..0.8)).collect();
        store.insert(w, v);
    }
    store
}

/// A 5-token sentence and a 3-edge graph at toy dims.
fn toy_example(arch: Arch, consistent: bool) -> (ModelConfig, PreparedExample<f64>) {
    let config = ModelConfig::toy(arch);
    let store = dense_store(11);
    let mut g = KnowledgeGraph::new("w1", "w1");
    g.add_node("w2", "w2");
    g.add_node("w3", "w3");
    g.add_edge("w1", "r0", "w2").unwrap();
    g.add_edge("w1", "r1", "w3").unwrap();
    g.add_edge("w2", "r2", "w3").unwrap();
    let tokens: Vec<String> = ["w0", "w1", "w4", "w5", "w6"].map(String::from).to_vec();
    let mask = MentionMask {
        weights: vec![0, 1, 0, 0, 0],
    };
    let ex = PreparedExample::build(&tokens, mask, &g, &store, &config, consistent).unwrap();
    (config, ex)
}

#[test]
fn acceptance_1_gradient_suite() {
    let started = Instant::now();
    for arch in Arch::ALL {
        if !arch.is_trainable() {
            // the distance baseline has no parameters to check
            continue;
        }
        let (config, ex) = toy_example(arch, true);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model: Model<f64> = Model::new(config, &mut rng);
        let report = grad_check(
            &model.params,
            |tape| {
                model.forward(tape, &ex, None).map_err(|e| match e {
                    ned_core::models::ModelError::Tensor(t) => t,
                    other => panic!("unexpected forward error: {other}"),
                })
            },
            1e-3,
        )
        .unwrap();
        assert!(
            report.pass,
            "{arch}: max relative gradient error {}",
            report.max_rel
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 120, "gradient suite took {elapsed:?}");
    println!("acceptance 1 gradient-suite: pass ({elapsed:?})");
}

#[test]
fn acceptance_2_overfit_suite() {
    let corpus = synth::overfit_corpus(16);
    let indices: Vec<usize> = (0..16).collect();
    for arch in Arch::ALL {
        if !arch.is_trainable() {
            continue;
        }
        let started = Instant::now();
        let config = ModelConfig::toy(arch);
        let examples = synth::prepared_examples::<f64>(&corpus, &indices, &config, 2);
        assert_eq!(examples.len(), 32);
        let mut train_config = TrainConfig::new(config, 300, 7);
        train_config.step_size = 1e-2;
        train_config.patience = 300;
        let outcome = train(&train_config, &examples, &examples).unwrap();
        let metrics = evaluate(&outcome.model, &examples).unwrap();
        let elapsed = started.elapsed();
        assert!(
            metrics.accuracy >= 95.0,
            "{arch}: accuracy {} after {} epochs",
            metrics.accuracy,
            outcome.log.len()
        );
        assert!(elapsed.as_secs() < 300, "{arch} took {elapsed:?}");
        println!("acceptance 2 overfit {arch}: pass (accuracy {:.1}, {elapsed:?})", metrics.accuracy);
    }
    println!("acceptance 2 overfit-suite: pass");
}

fn random_graph(rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let n = rng.random_range(2..8);
    let mut g = KnowledgeGraph::new("w0", "w0");
    for i in 1..n {
        g.add_node(format!("w{i}"), format!("w{i}"));
    }
    for _ in 0..rng.random_range(1..12) {
        let s = rng.random_range(0..n);
        let t = rng.random_range(0..n);
        let r = rng.random_range(0..3);
        g.add_edge(format!("w{s}"), format!("r{r}"), format!("w{t}"))
            .unwrap();
    }
    g
}

/// The same logical graph rebuilt with shuffled node and edge insertion
/// order.
fn permuted(g: &KnowledgeGraph, rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let mut node_ids: Vec<String> = g
        .bfs_order()
        .into_iter()
        .filter(|id| id != g.central())
        .collect();
    node_ids.shuffle(rng);
    let mut out = KnowledgeGraph::new(g.central().to_string(), g.label(g.central()).unwrap());
    for id in &node_ids {
        out.add_node(id.clone(), g.label(id).unwrap());
    }
    let mut edges = g.triplets();
    edges.shuffle(rng);
    for e in edges {
        out.add_edge(e.source, e.relation, e.target).unwrap();
    }
    out
}

#[test]
fn acceptance_3_invariant_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);

    // softmax normalization on random logit vectors
    for _ in 0..50 {
        let n = rng.random_range(2..12);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
        let tape = ned_core::Tape::new();
        let sum: f64 = tape.vector(logits).softmax().unwrap().values().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6, "softmax sum {sum}");
    }

    // gcn-attention coefficients: support is exactly identity plus adjacency
    {
        let (config, ex) = toy_example(Arch::GcnAttention, true);
        let model: Model<f64> = Model::new(config, &mut rng);
        let n = ex.reified.node_vectors.len();
        for alpha in model.attention_coefficients(&ex).unwrap() {
            for v in 0..n {
                for u in 0..n {
                    let on_support = u == v || ex.reified.adjacency[v * n + u] == 1;
                    let value = alpha[v * n + u];
                    if on_support {
                        assert!(value > 0.0, "alpha[{v},{u}] vanished on support");
                    } else {
                        assert_eq!(value, 0.0, "alpha[{v},{u}] leaked off support");
                    }
                }
            }
        }
    }

    // reification counts over 100 random graphs
    for _ in 0..100 {
        let g = random_graph(&mut rng);
        let r = g.reify();
        assert_eq!(r.node_count(), g.node_count() + g.edge_count());
        assert_eq!(r.edge_count(), 2 * g.edge_count());
    }

    // gcn readout invariance under 20 relabelings, and permutation
    // invariance of the centroid and feedforward baselines
    let store = dense_store(11);
    let tokens: Vec<String> = ["w0", "w1", "w4", "w5", "w6"].map(String::from).to_vec();
    let mask = MentionMask {
        weights: vec![0, 1, 0, 0, 0],
    };
    for arch in [Arch::Gcn, Arch::GcnAttention, Arch::Centroid, Arch::FeedforwardAverages] {
        let config = ModelConfig::toy(arch);
        let mut init_rng = ChaCha8Rng::seed_from_u64(41);
        let model: Model<f64> = Model::new(config.clone(), &mut init_rng);
        let base_graph = random_graph(&mut rng);
        let base = PreparedExample::build(&tokens, mask.clone(), &base_graph, &store, &config, true).unwrap();
        let p0 = model.forward(&ned_core::Tape::new(), &base, None).unwrap().item();
        for _ in 0..20 {
            let shuffled = permuted(&base_graph, &mut rng);
            let ex = PreparedExample::build(&tokens, mask.clone(), &shuffled, &store, &config, true).unwrap();
            let p = model.forward(&ned_core::Tape::new(), &ex, None).unwrap().item();
            assert!(
                (p - p0).abs() < 1e-9,
                "{arch}: output moved by {} under relabeling",
                (p - p0).abs()
            );
        }
    }

    // triplet recurrence is order-sensitive by construction
    {
        let config = ModelConfig::toy(Arch::RnnTriplets);
        let mut init_rng = ChaCha8Rng::seed_from_u64(41);
        let model: Model<f64> = Model::new(config, &mut init_rng);
        let (_, base) = toy_example(Arch::RnnTriplets, true);
        let mut reversed = base.clone();
        reversed.triplet_vectors.reverse();
        let p0 = model.forward(&ned_core::Tape::new(), &base, None).unwrap().item();
        let p1 = model.forward(&ned_core::Tape::new(), &reversed, None).unwrap().item();
        assert!((p0 - p1).abs() > 1e-12, "triplet order had no effect");
    }

    // dataset balance and split disjointness on randomized corpora
    for _ in 0..10 {
        let n = rng.random_range(20..60);
        let corpus = synth::ordering_corpus(n);
        let spec = SplitSpec {
            sizes: SplitSizes::Ratios { train: 0.6, dev: 0.2, test: 0.2 },
            seed: rng.random(),
        };
        let manifest: SplitManifest = split_records(n, &spec).unwrap();
        let mut all: Vec<usize> = manifest
            .train
            .iter()
            .chain(&manifest.dev)
            .chain(&manifest.test)
            .copied()
            .collect();
        let total = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), total, "splits overlap");
        let config = ModelConfig::toy(Arch::Centroid);
        for part in [&manifest.train, &manifest.dev, &manifest.test] {
            let examples = synth::prepared_examples::<f64>(&corpus, part, &config, 2);
            let pos = examples.iter().filter(|e| e.consistent).count();
            assert_eq!(2 * pos, examples.len(), "split not balanced");
            assert!(examples.iter().all(|e| !e.triplet_vectors.is_empty()));
        }
    }

    println!("acceptance 3 invariant-suite: pass");
}

fn oracle_f1(pairs: &[(f64, bool)], threshold: f64) -> f64 {
    let tp = pairs.iter().filter(|&&(d, p)| d < threshold && p).count();
    let fp = pairs.iter().filter(|&&(d, p)| d < threshold && !p).count();
    let fn_ = pairs.iter().filter(|&&(d, p)| d >= threshold && p).count();
    if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

#[test]
fn acceptance_4_threshold_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..50 {
        let n = rng.random_range(2..=200);
        let mut pairs: Vec<(f64, bool)> = (0..n)
            .map(|_| (rng.random_range(0.0..2.0), rng.random_range(0.0..1.0) < 0.5))
            .collect();
        // guarantee both classes
        pairs[0].1 = true;
        if n > 1 {
            pairs[1].1 = false;
        }
        let fitted = fit_distance_threshold(&pairs).unwrap();

        let mut distances: Vec<f64> = pairs.iter().map(|&(d, _)| d).collect();
        distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distances.dedup();
        let best = distances
            .windows(2)
            .map(|w| oracle_f1(&pairs, (w[0] + w[1]) / 2.0))
            .fold(f64::NEG_INFINITY, f64::max);
        if distances.len() == 1 {
            assert_eq!(fitted, distances[0]);
            continue;
        }
        let fitted_f1 = oracle_f1(&pairs, fitted);
        assert!(
            (fitted_f1 - best).abs() <= 1e-12,
            "case {case}: fitted F1 {fitted_f1} vs sweep {best}"
        );
    }
    println!("acceptance 4 threshold-oracle: pass");
}

fn split_examples(
    corpus: &synth::SyntheticCorpus,
    manifest: &SplitManifest,
    config: &ModelConfig,
) -> (Vec<PreparedExample<f64>>, Vec<PreparedExample<f64>>, Vec<PreparedExample<f64>>) {
    (
        synth::prepared_examples(corpus, &manifest.train, config, 2),
        synth::prepared_examples(corpus, &manifest.dev, config, 2),
        synth::prepared_examples(corpus, &manifest.test, config, 2),
    )
}

fn ordering_run(seed: u64) -> (Metrics, Metrics, Metrics) {
    let corpus = synth::ordering_corpus(500);
    let spec = SplitSpec {
        sizes: SplitSizes::Counts { train: 300, dev: 100, test: 100 },
        seed,
    };
    let manifest = split_records(500, &spec).unwrap();

    let rnn_config = ModelConfig::toy(Arch::RnnTriplets);
    let (train_set, dev_set, test_set) = split_examples(&corpus, &manifest, &rnn_config);
    let mut tc = TrainConfig::new(rnn_config, 30, seed);
    tc.step_size = 1e-2;
    let rnn = evaluate(&train(&tc, &train_set, &dev_set).unwrap().model, &test_set).unwrap();

    let ff_config = ModelConfig::toy(Arch::FeedforwardAverages);
    let (train_set, dev_set, test_set) = split_examples(&corpus, &manifest, &ff_config);
    let mut tc = TrainConfig::new(ff_config, 30, seed);
    tc.step_size = 1e-2;
    let ff = evaluate(&train(&tc, &train_set, &dev_set).unwrap().model, &test_set).unwrap();

    let (_threshold, vd) = fit_and_evaluate_distance(&train_set, &test_set).unwrap();
    (rnn, ff, vd)
}

#[test]
fn acceptance_5_ordering_experiment() {
    let started = Instant::now();
    for seed in [101u64, 202] {
        let (rnn, ff, vd) = ordering_run(seed);
        println!(
            "acceptance 5 seed {seed}: rnn-triplets F1 {:.1}, feedforward F1 {:.1}, vector-distance F1 {:.1}",
            rnn.f1, ff.f1, vd.f1
        );
        assert!(
            rnn.f1 >= ff.f1 + 5.0,
            "seed {seed}: rnn-triplets {:.1} vs feedforward {:.1}",
            rnn.f1,
            ff.f1
        );
        assert!(
            (vd.f1 - 50.0).abs() <= 15.0,
            "seed {seed}: vector-distance F1 {:.1} strayed from chance",
            vd.f1
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 1800, "ordering experiment took {elapsed:?}");
    println!("acceptance 5 ordering-experiment: pass ({elapsed:?})");
}

#[test]
fn acceptance_6_reproducibility() {
    let corpus = synth::overfit_corpus(12);
    let indices: Vec<usize> = (0..12).collect();
    let config = ModelConfig::toy(Arch::RnnTriplets);
    let examples = synth::prepared_examples::<f64>(&corpus, &indices, &config, 2);
    let dir = tempfile::tempdir().unwrap();
    let mut logs = Vec::new();
    for run in 0..2 {
        let tc = TrainConfig::new(config.clone(), 5, 99);
        let outcome = train(&tc, &examples, &examples).unwrap();
        let path = dir.path().join(format!("log{run}.jsonl"));
        write_log(&outcome.log, &path).unwrap();
        logs.push(std::fs::read(&path).unwrap());
    }
    assert!(!logs[0].is_empty());
    assert_eq!(logs[0], logs[1], "training logs differ between identical runs");
    println!("acceptance 6 reproducibility: pass");
}

#[test]
fn acceptance_7_checkpoint_round_trip() {
    let corpus = synth::overfit_corpus(12);
    let indices: Vec<usize> = (0..12).collect();
    let config = ModelConfig::toy(Arch::LinearAttention);
    let examples = synth::prepared_examples::<f64>(&corpus, &indices, &config, 2);
    let tc = TrainConfig::new(config, 5, 3);
    let outcome = train(&tc, &examples, &examples).unwrap();
    let before = evaluate(&outcome.model, &examples).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&outcome.model, &path).unwrap();
    let restored: Model<f64> = load_checkpoint(&path).unwrap();
    let after = evaluate(&restored, &examples).unwrap();
    assert_eq!(before, after, "metrics changed across save/load");

    // per-example agreement, not just aggregate metrics
    let pairs: Vec<(bool, bool)> = examples
        .iter()
        .map(|ex| (outcome.model.predict(ex).unwrap(), restored.predict(ex).unwrap()))
        .collect();
    assert!(pairs.iter().all(|&(a, b)| a == b));
    let sanity = metrics_from_pairs(&pairs);
    assert_eq!(sanity.accuracy, 100.0);
    println!("acceptance 7 checkpoint-round-trip: pass");
}
