//! The nine architectures: five baselines and four graph models, all sharing
//! the classification head and, where applicable, the Bi-LSTM text encoder.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat, stack_rows, weighted_sum, Param, ParamSet, Tape, Tensor};
use crate::lstm::BiLstm;
use crate::scalar::Real;
use crate::text::{TextEncoder, TextEncoderDims};

use super::config::{Arch, ModelConfig};
use super::prepare::PreparedExample;
use super::ModelError;

/// concat(y_text, y_graph) -> hidden (ReLU) -> 2 logits -> softmax.
struct Head<S: Real> {
    w1: Param<S>,
    b1: Param<S>,
    w2: Param<S>,
    b2: Param<S>,
}

/// Index of the "consistent" class in the 2-way output.
const CONSISTENT: usize = 1;

impl<S: Real> Head<S> {
    fn new<R: Rng>(input_dim: usize, hidden: usize, params: &mut ParamSet<S>, rng: &mut R) -> Self {
        Head {
            w1: params.add_uniform("head.w1", &[hidden, input_dim], rng),
            b1: params.add_uniform("head.b1", &[hidden], rng),
            w2: params.add_uniform("head.w2", &[2, hidden], rng),
            b2: params.add_uniform("head.b2", &[2], rng),
        }
    }

    /// Probability of the "consistent" class.
    fn apply(&self, tape: &Tape<S>, input: &Tensor<S>) -> Result<Tensor<S>, ModelError> {
        let hidden = tape
            .leaf(&self.w1)
            .matmul(input)?
            .add(&tape.leaf(&self.b1))?
            .relu();
        let logits = tape
            .leaf(&self.w2)
            .matmul(&hidden)?
            .add(&tape.leaf(&self.b2))?;
        let probs = logits.softmax()?;
        let mut sel = vec![S::zero(); 2];
        sel[CONSISTENT] = S::one();
        Ok(tape.matrix(1, 2, sel).matmul(&probs)?)
    }
}

struct AttentionOverItems<S: Real> {
    w_item: Param<S>,
    w_text: Param<S>,
    bias: Param<S>,
}

impl<S: Real> AttentionOverItems<S> {
    fn new<R: Rng>(
        prefix: &str,
        item_dim: usize,
        text_dim: usize,
        params: &mut ParamSet<S>,
        rng: &mut R,
    ) -> Self {
        AttentionOverItems {
            w_item: params.add_uniform(format!("{prefix}.w_item"), &[1, item_dim], rng),
            w_text: params.add_uniform(format!("{prefix}.w_text"), &[1, text_dim], rng),
            bias: params.add_uniform(format!("{prefix}.bias"), &[1], rng),
        }
    }

    /// b = softmax(c), c_i = ReLU(W_item x_i + W_text y_text + bias);
    /// returns (1/N) * sum_i b_i items_i, keeping the printed 1/N prefactor.
    fn pool(
        &self,
        tape: &Tape<S>,
        items: &[Tensor<S>],
        y_text: &Tensor<S>,
    ) -> Result<Tensor<S>, ModelError> {
        let w_item = tape.leaf(&self.w_item);
        let text_term = tape.leaf(&self.w_text).matmul(y_text)?.add(&tape.leaf(&self.bias))?;
        let scores: Vec<Tensor<S>> = items
            .iter()
            .map(|x| Ok(w_item.matmul(x)?.add(&text_term)?.relu()))
            .collect::<Result<_, ModelError>>()?;
        let coeffs = concat(&scores)?.softmax()?;
        let stacked = stack_rows(items)?;
        let n_inv = S::one() / S::of(items.len() as f64);
        Ok(weighted_sum(&coeffs, &stacked)?.scale(n_inv))
    }
}

struct GcnLayers<S: Real> {
    weights: Vec<(Param<S>, Param<S>)>,
}

impl<S: Real> GcnLayers<S> {
    fn new<R: Rng>(
        input_dim: usize,
        layer_dim: usize,
        layers: usize,
        params: &mut ParamSet<S>,
        rng: &mut R,
    ) -> Self {
        let weights = (0..layers)
            .map(|k| {
                let in_dim = if k == 0 { input_dim } else { layer_dim };
                (
                    params.add_uniform(format!("gcn.w{k}"), &[layer_dim, in_dim], rng),
                    params.add_uniform(format!("gcn.b{k}"), &[layer_dim], rng),
                )
            })
            .collect();
        GcnLayers { weights }
    }
}

struct GcnAttentionParams<S: Real> {
    /// per-layer map from the layer embedding into the latent dimension
    w_graph: Vec<Param<S>>,
    w_text: Param<S>,
    bias: Param<S>,
}

enum Parts<S: Real> {
    VectorDistance,
    Feedforward {
        head: Head<S>,
    },
    Centroid {
        text: TextEncoder<S>,
        head: Head<S>,
    },
    LinearAttention {
        text: TextEncoder<S>,
        attention: AttentionOverItems<S>,
        head: Head<S>,
    },
    RnnNodes {
        text: TextEncoder<S>,
        bilstm: BiLstm<S>,
        out_w: Param<S>,
        out_b: Param<S>,
        head: Head<S>,
    },
    RnnTriplets {
        text: TextEncoder<S>,
        pre_w: Param<S>,
        pre_b: Param<S>,
        bilstm: BiLstm<S>,
        out_w: Param<S>,
        out_b: Param<S>,
        head: Head<S>,
    },
    RnnTripletsAttention {
        text: TextEncoder<S>,
        pre_w: Param<S>,
        pre_b: Param<S>,
        bilstm: BiLstm<S>,
        attention: AttentionOverItems<S>,
        out_w: Param<S>,
        out_b: Param<S>,
        head: Head<S>,
    },
    Gcn {
        text: TextEncoder<S>,
        layers: GcnLayers<S>,
        out_w: Param<S>,
        out_b: Param<S>,
        head: Head<S>,
    },
    GcnAttention {
        text: TextEncoder<S>,
        layers: GcnLayers<S>,
        attention: GcnAttentionParams<S>,
        out_w: Param<S>,
        out_b: Param<S>,
        head: Head<S>,
    },
}

/// One architecture instance: configuration, named parameters and the typed
/// wiring between them.
pub struct Model<S: Real> {
    pub config: ModelConfig,
    pub params: ParamSet<S>,
    parts: Parts<S>,
}

impl<S: Real> Model<S> {
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let text_dims = TextEncoderDims {
            embedding_dim: config.embedding_dim,
            dense_dim: config.text_dense_dim,
            lstm_dim: config.text_lstm_dim,
            output_dim: config.y_text_dim,
        };
        let head_dim = config.y_text_dim + config.y_graph_dim;
        let parts = match config.arch {
            Arch::VectorDistance => Parts::VectorDistance,
            Arch::FeedforwardAverages => Parts::Feedforward {
                head: Head::new(2 * config.embedding_dim, config.final_hidden_dim, &mut params, rng),
            },
            Arch::Centroid => Parts::Centroid {
                text: TextEncoder::new(text_dims, &mut params, rng),
                head: Head::new(head_dim, config.final_hidden_dim, &mut params, rng),
            },
            Arch::LinearAttention => Parts::LinearAttention {
                text: TextEncoder::new(text_dims, &mut params, rng),
                attention: AttentionOverItems::new(
                    "attn.nodes",
                    config.embedding_dim,
                    config.y_text_dim,
                    &mut params,
                    rng,
                ),
                head: Head::new(head_dim, config.final_hidden_dim, &mut params, rng),
            },
            Arch::RnnNodes => Parts::RnnNodes {
                text: TextEncoder::new(text_dims, &mut params, rng),
                bilstm: BiLstm::new("graph.lstm", config.embedding_dim, config.graph_lstm_dim, &mut params, rng),
                out_w: params.add_uniform("graph.out.w", &[config.y_graph_dim, 2 * config.graph_lstm_dim], rng),
                out_b: params.add_uniform("graph.out.b", &[config.y_graph_dim], rng),
                head: Head::new(head_dim, config.final_hidden_dim, &mut params, rng),
            },
            Arch::RnnTriplets => Parts::RnnTriplets {
                text: TextEncoder::new(text_dims, &mut params, rng),
                pre_w: params.add_uniform("graph.pre.w", &[config.graph_dense_dim, config.triplet_width()], rng),
                pre_b: params.add_uniform("graph.pre.b", &[config.graph_dense_dim], rng),
                bilstm: BiLstm::new("graph.lstm", config.graph_dense_dim, config.graph_lstm_dim, &mut params, rng),
                out_w: params.add_uniform("graph.out.w", &[config.y_graph_dim, 2 * config.graph_lstm_dim], rng),
                out_b: params.add_uniform("graph.out.b", &[config.y_graph_dim], rng),
                head: Head::new(head_dim, config.final_hidden_dim, &mut params, rng),
            },
            Arch::RnnTripletsAttention => Parts::RnnTripletsAttention {
                text: TextEncoder::new(text_dims, &mut params, rng),
                pre_w: params.add_uniform("graph.pre.w", &[config.graph_dense_dim, config.triplet_width()], rng),
                pre_b: params.add_uniform("graph.pre.b", &[config.graph_dense_dim], rng),
                bilstm: BiLstm::new("graph.lstm", config.graph_dense_dim, config.graph_lstm_dim, &mut params, rng),
                attention: AttentionOverItems::new(
                    "attn.triplets",
                    2 * config.graph_lstm_dim,
                    config.y_text_dim,
                    &mut params,
                    rng,
                ),
                out_w: params.add_uniform("graph.out.w", &[config.y_graph_dim, 2 * config.graph_lstm_dim], rng),
                out_b: params.add_uniform("graph.out.b", &[config.y_graph_dim], rng),
                head: Head::new(head_dim, config.final_hidden_dim, &mut params, rng),
            },
            Arch::Gcn => Parts::Gcn {
                text: TextEncoder::new(text_dims, &mut params, rng),
                layers: GcnLayers::new(config.embedding_dim, config.gcn_dim, config.gcn_layers, &mut params, rng),
                out_w: params.add_uniform("graph.out.w", &[config.y_graph_dim, config.gcn_dim], rng),
                out_b: params.add_uniform("graph.out.b", &[config.y_graph_dim], rng),
                head: Head::new(head_dim, config.final_hidden_dim, &mut params, rng),
            },
            Arch::GcnAttention => {
                let layers = GcnLayers::new(config.embedding_dim, config.gcn_dim, config.gcn_layers, &mut params, rng);
                let w_graph = (0..config.gcn_layers)
                    .map(|k| {
                        let in_dim = if k == 0 { config.embedding_dim } else { config.gcn_dim };
                        params.add_uniform(format!("attn.gcn.w_graph{k}"), &[config.attention_latent_dim, in_dim], rng)
                    })
                    .collect();
                Parts::GcnAttention {
                    text: TextEncoder::new(text_dims, &mut params, rng),
                    layers,
                    attention: GcnAttentionParams {
                        w_graph,
                        w_text: params.add_uniform("attn.gcn.w_text", &[config.attention_latent_dim, config.y_text_dim], rng),
                        bias: params.add_uniform("attn.gcn.bias", &[config.attention_latent_dim], rng),
                    },
                    out_w: params.add_uniform("graph.out.w", &[config.y_graph_dim, config.gcn_dim], rng),
                    out_b: params.add_uniform("graph.out.b", &[config.y_graph_dim], rng),
                    head: Head::new(head_dim, config.final_hidden_dim, &mut params, rng),
                }
            }
        };
        Model { config, params, parts }
    }

    /// Forward pass producing the probability of "consistent". Passing a
    /// dropout RNG enables train-mode edge dropout on the GCN models; `None`
    /// is deterministic eval mode.
    pub fn forward(
        &self,
        tape: &Tape<S>,
        ex: &PreparedExample<S>,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor<S>, ModelError> {
        match &self.parts {
            Parts::VectorDistance => Err(ModelError::NotNeural(Arch::VectorDistance)),
            Parts::Feedforward { head } => {
                let v = tape.vector(ex.text_centroid.clone());
                let x = tape.vector(ex.graph_centroid.clone());
                head.apply(tape, &concat(&[v, x])?)
            }
            Parts::Centroid { text, head } => {
                let y_text = text.encode(tape, &ex.token_vectors, &ex.mask)?;
                let y_graph = tape.vector(ex.graph_centroid.clone());
                head.apply(tape, &concat(&[y_text, y_graph])?)
            }
            Parts::LinearAttention { text, attention, head } => {
                if ex.node_vectors.is_empty() {
                    return Err(ModelError::EmptyGraph);
                }
                let y_text = text.encode(tape, &ex.token_vectors, &ex.mask)?;
                let nodes: Vec<Tensor<S>> = ex
                    .node_vectors
                    .iter()
                    .map(|v| tape.vector(v.clone()))
                    .collect();
                let y_graph = attention.pool(tape, &nodes, &y_text)?;
                head.apply(tape, &concat(&[y_text, y_graph])?)
            }
            Parts::RnnNodes { text, bilstm, out_w, out_b, head } => {
                if ex.node_vectors.is_empty() {
                    return Err(ModelError::EmptyGraph);
                }
                let y_text = text.encode(tape, &ex.token_vectors, &ex.mask)?;
                let nodes: Vec<Tensor<S>> = ex
                    .node_vectors
                    .iter()
                    .map(|v| tape.vector(v.clone()))
                    .collect();
                let finals = bilstm.final_states(tape, &nodes)?;
                let y_graph = tape.leaf(out_w).matmul(&finals)?.add(&tape.leaf(out_b))?;
                head.apply(tape, &concat(&[y_text, y_graph])?)
            }
            Parts::RnnTriplets { text, pre_w, pre_b, bilstm, out_w, out_b, head } => {
                let y_text = text.encode(tape, &ex.token_vectors, &ex.mask)?;
                let inputs = self.projected_triplets(tape, ex, pre_w, pre_b)?;
                let finals = bilstm.final_states(tape, &inputs)?;
                let y_graph = tape.leaf(out_w).matmul(&finals)?.add(&tape.leaf(out_b))?;
                head.apply(tape, &concat(&[y_text, y_graph])?)
            }
            Parts::RnnTripletsAttention {
                text,
                pre_w,
                pre_b,
                bilstm,
                attention,
                out_w,
                out_b,
                head,
            } => {
                let y_text = text.encode(tape, &ex.token_vectors, &ex.mask)?;
                let inputs = self.projected_triplets(tape, ex, pre_w, pre_b)?;
                let outputs = bilstm.outputs(tape, &inputs)?;
                let pooled = attention.pool(tape, &outputs, &y_text)?;
                let y_graph = tape.leaf(out_w).matmul(&pooled)?.add(&tape.leaf(out_b))?;
                head.apply(tape, &concat(&[y_text, y_graph])?)
            }
            Parts::Gcn { text, layers, out_w, out_b, head } => {
                let y_text = text.encode(tape, &ex.token_vectors, &ex.mask)?;
                let adjacency = self.dropped_adjacency(ex, dropout_rng);
                let n = ex.reified.node_vectors.len();
                let mut h = reified_matrix(tape, ex);
                let prop = propagation_matrix(tape, n, &adjacency);
                for (w, b) in &layers.weights {
                    let m = tape.leaf(w).matmul(&h)?.add_bias_cols(&tape.leaf(b))?;
                    h = m.matmul(&prop)?.relu();
                }
                let central = h.column(ex.reified.central_index)?;
                let y_graph = tape.leaf(out_w).matmul(&central)?.add(&tape.leaf(out_b))?;
                head.apply(tape, &concat(&[y_text, y_graph])?)
            }
            Parts::GcnAttention {
                text,
                layers,
                attention,
                out_w,
                out_b,
                head,
            } => {
                let y_text = text.encode(tape, &ex.token_vectors, &ex.mask)?;
                let adjacency = self.dropped_adjacency(ex, dropout_rng);
                let (h, _alphas) =
                    gcn_attention_propagate(tape, ex, &adjacency, layers, attention, &y_text)?;
                let central = h.column(ex.reified.central_index)?;
                let y_graph = tape.leaf(out_w).matmul(&central)?.add(&tape.leaf(out_b))?;
                head.apply(tape, &concat(&[y_text, y_graph])?)
            }
        }
    }

    fn projected_triplets(
        &self,
        tape: &Tape<S>,
        ex: &PreparedExample<S>,
        pre_w: &Param<S>,
        pre_b: &Param<S>,
    ) -> Result<Vec<Tensor<S>>, ModelError> {
        if ex.triplet_vectors.is_empty() {
            return Err(ModelError::NoTriplets);
        }
        let w = tape.leaf(pre_w);
        let b = tape.leaf(pre_b);
        ex.triplet_vectors
            .iter()
            .map(|t| {
                let x = tape.vector(t.clone());
                Ok(w.matmul(&x)?.add(&b)?.relu())
            })
            .collect()
    }

    /// Adjacency after train-mode edge dropout; eval mode returns it as-is.
    fn dropped_adjacency(&self, ex: &PreparedExample<S>, dropout_rng: Option<&mut ChaCha8Rng>) -> Vec<u8> {
        let mut adjacency = ex.reified.adjacency.clone();
        if let Some(rng) = dropout_rng {
            let keep = self.config.keep_prob;
            for cell in adjacency.iter_mut() {
                if *cell == 1 && rng.random_range(0.0..1.0) >= keep {
                    *cell = 0;
                }
            }
        }
        adjacency
    }

    /// Deterministic eval-mode prediction at the 0.5 cutoff.
    pub fn predict(&self, ex: &PreparedExample<S>) -> Result<bool, ModelError> {
        let tape = Tape::new();
        let p = self.forward(&tape, ex, None)?;
        Ok(p.item() > S::of(0.5))
    }

    /// Per-layer attention coefficient matrices (row-major n x n) of an
    /// eval-mode gcn-attention pass. Errors on any other architecture.
    pub fn attention_coefficients(&self, ex: &PreparedExample<S>) -> Result<Vec<Vec<S>>, ModelError> {
        let Parts::GcnAttention {
            text,
            layers,
            attention,
            ..
        } = &self.parts
        else {
            return Err(ModelError::NotNeural(self.config.arch));
        };
        let tape: Tape<S> = Tape::new();
        let y_text = text.encode(&tape, &ex.token_vectors, &ex.mask)?;
        let (_h, alphas) =
            gcn_attention_propagate(&tape, ex, &ex.reified.adjacency, layers, attention, &y_text)?;
        Ok(alphas.iter().map(|a| a.values()).collect())
    }
}

/// Columns are the reified node vectors in BFS order: [dim x n].
fn reified_matrix<S: Real>(tape: &Tape<S>, ex: &PreparedExample<S>) -> Tensor<S> {
    let n = ex.reified.node_vectors.len();
    let dim = ex.reified.node_vectors.first().map_or(0, Vec::len);
    let mut values = vec![S::zero(); dim * n];
    for (j, v) in ex.reified.node_vectors.iter().enumerate() {
        for i in 0..dim {
            values[i * n + j] = v[i];
        }
    }
    tape.matrix(dim, n, values)
}

/// (I + A)^T as a constant: column v collects v itself plus its
/// out-neighbors, so a matrix product aggregates N(v) at v.
fn propagation_matrix<S: Real>(tape: &Tape<S>, n: usize, adjacency: &[u8]) -> Tensor<S> {
    let mut values = vec![S::zero(); n * n];
    for u in 0..n {
        for v in 0..n {
            if u == v || adjacency[v * n + u] == 1 {
                values[u * n + v] = S::one();
            }
        }
    }
    tape.matrix(n, n, values)
}

/// (identity ∪ adjacency) support mask for the attention coefficients.
fn support_mask<S: Real>(tape: &Tape<S>, n: usize, adjacency: &[u8]) -> Tensor<S> {
    let mut values = vec![S::zero(); n * n];
    for v in 0..n {
        for u in 0..n {
            if u == v || adjacency[v * n + u] == 1 {
                values[v * n + u] = S::one();
            }
        }
    }
    tape.matrix(n, n, values)
}

/// The attended propagation of Eq-7-style layers, returning the final node
/// matrix and every layer's masked attention coefficients.
fn gcn_attention_propagate<S: Real>(
    tape: &Tape<S>,
    ex: &PreparedExample<S>,
    adjacency: &[u8],
    layers: &GcnLayers<S>,
    attention: &GcnAttentionParams<S>,
    y_text: &Tensor<S>,
) -> Result<(Tensor<S>, Vec<Tensor<S>>), ModelError> {
    let n = ex.reified.node_vectors.len();
    let mask = support_mask(tape, n, adjacency);
    let mut h = reified_matrix(tape, ex);
    let mut alphas = Vec::with_capacity(layers.weights.len());
    for (k, (w, b)) in layers.weights.iter().enumerate() {
        // B = ReLU(W_graph H + W_text Q + C); every column of Q is y_text,
        // so the text and bias terms enter as one per-column bias vector.
        let text_bias = tape
            .leaf(&attention.w_text)
            .matmul(y_text)?
            .add(&tape.leaf(&attention.bias))?;
        let b_mat = tape
            .leaf(&attention.w_graph[k])
            .matmul(&h)?
            .add_bias_cols(&text_bias)?
            .relu();
        let energy = b_mat.transpose()?.matmul(&b_mat)?;
        let alpha = energy.softmax()?.mul(&mask)?;
        let m = tape.leaf(w).matmul(&h)?.add_bias_cols(&tape.leaf(b))?;
        h = m.matmul(&alpha.transpose()?)?.relu();
        alphas.push(alpha);
    }
    Ok((h, alphas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingStore;
    use crate::kg::KnowledgeGraph;
    use crate::text::MentionMask;
    use rand::SeedableRng;

    fn toy_prepared(arch: Arch) -> (ModelConfig, PreparedExample<f64>) {
        let config = ModelConfig::toy(arch);
        let dim = config.embedding_dim;
        let mut store = EmbeddingStore::new(dim, true);
        let words = ["alpha", "beta", "gamma", "delta", "rel1", "rel2"];
        for (i, w) in words.iter().enumerate() {
            let mut v = vec![0.0; dim];
            v[i % dim] = 1.0;
            v[(i + 3) % dim] = -0.5;
            store.insert(w, v);
        }
        let mut g = KnowledgeGraph::new("alpha", "alpha");
        g.add_node("beta", "beta");
        g.add_node("gamma", "gamma");
        g.add_edge("alpha", "rel1", "beta").unwrap();
        g.add_edge("alpha", "rel2", "gamma").unwrap();
        g.add_edge("beta", "rel1", "gamma").unwrap();

        let tokens: Vec<String> = ["the", "alpha", "beta", "delta"].map(String::from).to_vec();
        let mask = MentionMask {
            weights: vec![0, 1, 0, 0],
        };
        let ex = PreparedExample::build(&tokens, mask, &g, &store, &config, true).unwrap();
        (config, ex)
    }

    #[test]
    fn every_trainable_arch_produces_a_probability() {
        for arch in Arch::ALL.into_iter().filter(|a| a.is_trainable()) {
            let (config, ex) = toy_prepared(arch);
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let model = Model::new(config, &mut rng);
            let tape = Tape::new();
            let p = model.forward(&tape, &ex, None).unwrap().item();
            assert!((0.0..=1.0).contains(&p), "{arch}: {p}");
        }
    }

    #[test]
    fn vector_distance_has_no_neural_forward() {
        let (config, ex) = toy_prepared(Arch::VectorDistance);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let model = Model::new(config, &mut rng);
        assert!(matches!(
            model.forward(&Tape::new(), &ex, None),
            Err(ModelError::NotNeural(_))
        ));
    }

    #[test]
    fn zero_head_params_give_half_probability() {
        let (config, ex) = toy_prepared(Arch::FeedforwardAverages);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let model = Model::new(config, &mut rng);
        for name in ["head.w1", "head.b1", "head.w2", "head.b2"] {
            let p = model.params.get(name).unwrap();
            p.set_values(vec![0.0; p.numel()]);
        }
        let p = model.forward(&Tape::new(), &ex, None).unwrap().item();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn eval_mode_is_bit_reproducible() {
        for arch in [Arch::Gcn, Arch::GcnAttention, Arch::RnnTripletsAttention] {
            let (config, ex) = toy_prepared(arch);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let model = Model::new(config, &mut rng);
            let a = model.forward(&Tape::new(), &ex, None).unwrap().item();
            let b = model.forward(&Tape::new(), &ex, None).unwrap().item();
            assert_eq!(a, b, "{arch}");
        }
    }

    #[test]
    fn train_mode_dropout_changes_with_rng_stream() {
        let (mut config, ex) = toy_prepared(Arch::Gcn);
        config.keep_prob = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = Model::new(config, &mut rng);
        let mut d1 = ChaCha8Rng::seed_from_u64(1);
        let mut d2 = ChaCha8Rng::seed_from_u64(1);
        let a = model.forward(&Tape::new(), &ex, Some(&mut d1)).unwrap().item();
        let b = model.forward(&Tape::new(), &ex, Some(&mut d2)).unwrap().item();
        // same dropout seed, same result
        assert_eq!(a, b);
    }

    #[test]
    fn missing_triplets_is_contract_error() {
        let (config, mut ex) = toy_prepared(Arch::RnnTriplets);
        ex.triplet_vectors.clear();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = Model::new(config, &mut rng);
        assert!(matches!(
            model.forward(&Tape::new(), &ex, None),
            Err(ModelError::NoTriplets)
        ));
    }
}
