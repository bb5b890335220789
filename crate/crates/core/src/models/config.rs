//! Architecture tags and per-architecture hyperparameter records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The nine consistency-classification architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    VectorDistance,
    FeedforwardAverages,
    Centroid,
    LinearAttention,
    RnnNodes,
    RnnTriplets,
    RnnTripletsAttention,
    Gcn,
    GcnAttention,
}

impl Arch {
    pub const ALL: [Arch; 9] = [
        Arch::VectorDistance,
        Arch::FeedforwardAverages,
        Arch::Centroid,
        Arch::LinearAttention,
        Arch::RnnNodes,
        Arch::RnnTriplets,
        Arch::RnnTripletsAttention,
        Arch::Gcn,
        Arch::GcnAttention,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Arch::VectorDistance => "vector-distance",
            Arch::FeedforwardAverages => "feedforward-averages",
            Arch::Centroid => "centroid",
            Arch::LinearAttention => "linear-attention",
            Arch::RnnNodes => "rnn-nodes",
            Arch::RnnTriplets => "rnn-triplets",
            Arch::RnnTripletsAttention => "rnn-triplets-attention",
            Arch::Gcn => "gcn",
            Arch::GcnAttention => "gcn-attention",
        }
    }

    /// Whether the architecture owns trainable parameters.
    pub fn is_trainable(&self) -> bool {
        !matches!(self, Arch::VectorDistance)
    }

    /// Whether the architecture runs the graph through reification + GCN.
    pub fn is_gcn(&self) -> bool {
        matches!(self, Arch::Gcn | Arch::GcnAttention)
    }

    /// Whether the text side goes through the Bi-LSTM encoder (as opposed to
    /// the plain centroid of word vectors).
    pub fn uses_text_encoder(&self) -> bool {
        !matches!(self, Arch::VectorDistance | Arch::FeedforwardAverages)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arch::ALL
            .iter()
            .find(|a| a.tag() == s)
            .copied()
            .ok_or_else(|| format!("unknown architecture tag {s:?}"))
    }
}

/// Full configuration of one model instance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub arch: Arch,
    pub embedding_dim: usize,
    /// dense layer before the text LSTM
    pub text_dense_dim: usize,
    /// memory of each text LSTM direction
    pub text_lstm_dim: usize,
    pub y_text_dim: usize,
    /// dense layer before the graph (triplet) LSTM
    pub graph_dense_dim: usize,
    /// memory of each graph LSTM direction
    pub graph_lstm_dim: usize,
    pub y_graph_dim: usize,
    pub attention_latent_dim: usize,
    pub gcn_dim: usize,
    pub gcn_layers: usize,
    /// keep probability for edge dropout on the reified graph
    pub keep_prob: f64,
    pub final_hidden_dim: usize,
    /// pad triplet inputs from 3 x embedding to 4 x embedding
    #[serde(default)]
    pub strict_appendix_triplet_width: bool,
    /// decision distance, vector-distance only
    #[serde(default)]
    pub distance_threshold: Option<f64>,
}

impl ModelConfig {
    /// The published configuration: 300-dim word vectors, 250-dim context
    /// vectors (300 where the graph side is a plain centroid).
    pub fn standard(arch: Arch) -> Self {
        let embedding_dim = 300;
        let y_graph_dim = match arch {
            Arch::VectorDistance | Arch::FeedforwardAverages | Arch::Centroid | Arch::LinearAttention => {
                embedding_dim
            }
            _ => 250,
        };
        ModelConfig {
            arch,
            embedding_dim,
            text_dense_dim: 50,
            text_lstm_dim: 100,
            y_text_dim: 150,
            graph_dense_dim: 50,
            graph_lstm_dim: 100,
            y_graph_dim,
            attention_latent_dim: 250,
            gcn_dim: 250,
            // 2 original hops become 4 reified hops
            gcn_layers: 4,
            keep_prob: 0.9,
            final_hidden_dim: 250,
            strict_appendix_triplet_width: false,
            distance_threshold: None,
        }
    }

    /// Desk-scale configuration for gradient checks and overfit runs.
    pub fn toy(arch: Arch) -> Self {
        let embedding_dim = 8;
        let y_graph_dim = match arch {
            Arch::VectorDistance | Arch::FeedforwardAverages | Arch::Centroid | Arch::LinearAttention => {
                embedding_dim
            }
            _ => 4,
        };
        ModelConfig {
            arch,
            embedding_dim,
            text_dense_dim: 4,
            text_lstm_dim: 4,
            y_text_dim: 4,
            graph_dense_dim: 4,
            graph_lstm_dim: 4,
            y_graph_dim,
            attention_latent_dim: 4,
            gcn_dim: 4,
            gcn_layers: 2,
            keep_prob: 0.9,
            final_hidden_dim: 4,
            strict_appendix_triplet_width: false,
            distance_threshold: None,
        }
    }

    /// Width of one triplet input vector.
    pub fn triplet_width(&self) -> usize {
        if self.strict_appendix_triplet_width {
            4 * self.embedding_dim
        } else {
            3 * self.embedding_dim
        }
    }
}
