//! Per-example input preparation: embedding lookups, triplet vectors and the
//! reified adjacency, computed once so training epochs only run tensor math.

use crate::embedding::EmbeddingStore;
use crate::kg::KnowledgeGraph;
use crate::scalar::Real;
use crate::text::MentionMask;

use super::config::ModelConfig;
use super::ModelError;

/// Reified graph in tensor-ready form.
#[derive(Debug, Clone)]
pub struct ReifiedInputs<S> {
    /// node vectors in BFS order, one per reified node
    pub node_vectors: Vec<Vec<S>>,
    /// row-major n x n adjacency over the same ordering
    pub adjacency: Vec<u8>,
    /// position of the central item in the ordering
    pub central_index: usize,
}

/// Everything one forward pass needs, with embeddings resolved.
#[derive(Debug, Clone)]
pub struct PreparedExample<S> {
    pub token_vectors: Vec<Vec<S>>,
    pub mask: MentionMask,
    /// mean of the token vectors
    pub text_centroid: Vec<S>,
    /// node vectors of the (truncated) graph in BFS order
    pub node_vectors: Vec<Vec<S>>,
    /// mean of the node vectors
    pub graph_centroid: Vec<S>,
    /// x_i (+) e_ij (+) x_j per triplet, BFS order
    pub triplet_vectors: Vec<Vec<S>>,
    pub reified: ReifiedInputs<S>,
    pub consistent: bool,
}

fn mean<S: Real>(rows: &[Vec<S>], dim: usize) -> Vec<S> {
    let mut out = vec![S::zero(); dim];
    if rows.is_empty() {
        return out;
    }
    for row in rows {
        for (o, v) in out.iter_mut().zip(row) {
            *o += *v;
        }
    }
    let inv = S::one() / S::of(rows.len() as f64);
    for o in &mut out {
        *o *= inv;
    }
    out
}

impl<S: Real> PreparedExample<S> {
    /// `graph` must already be truncated to the configured hop cut;
    /// reification happens here, after truncation.
    pub fn build(
        tokens: &[String],
        mask: MentionMask,
        graph: &KnowledgeGraph,
        store: &EmbeddingStore<S>,
        config: &ModelConfig,
        consistent: bool,
    ) -> Result<Self, ModelError> {
        let dim = store.dimension();
        let token_vectors = store.embed_tokens(tokens);
        let text_centroid = mean(&token_vectors, dim);

        let order = graph.bfs_order();
        let node_vectors: Vec<Vec<S>> = order
            .iter()
            .map(|id| store.embed_label(graph.label(id).unwrap_or(id)))
            .collect::<Result<_, _>>()?;
        let graph_centroid = mean(&node_vectors, dim);

        let width = config.triplet_width();
        let triplet_vectors = graph
            .triplets()
            .iter()
            .map(|t| {
                let mut v = Vec::with_capacity(width);
                v.extend(store.embed_label(graph.label(&t.source).unwrap_or(&t.source))?);
                v.extend(store.embed_label(&t.relation)?);
                v.extend(store.embed_label(graph.label(&t.target).unwrap_or(&t.target))?);
                v.resize(width, S::zero());
                Ok(v)
            })
            .collect::<Result<Vec<_>, ModelError>>()?;

        let reified_graph = graph.reify();
        let reified_order = reified_graph.bfs_order();
        let central_index = reified_order
            .iter()
            .position(|id| id == reified_graph.central())
            .expect("central node present");
        let reified_vectors: Vec<Vec<S>> = reified_order
            .iter()
            .map(|id| store.embed_label(reified_graph.label(id).unwrap_or(id)))
            .collect::<Result<_, _>>()?;
        let adj = reified_graph.adjacency();
        debug_assert_eq!(adj.order, reified_order);
        let n = adj.len();
        let mut adjacency = vec![0u8; n * n];
        for i in 0..n {
            for j in 0..n {
                adjacency[i * n + j] = adj.get(i, j);
            }
        }

        Ok(PreparedExample {
            token_vectors,
            mask,
            text_centroid,
            node_vectors,
            graph_centroid,
            triplet_vectors,
            reified: ReifiedInputs {
                node_vectors: reified_vectors,
                adjacency,
                central_index,
            },
            consistent,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::KnowledgeGraph;
    use crate::models::config::Arch;
    use crate::text::locate_mention;

    fn store() -> EmbeddingStore<f64> {
        let mut s = EmbeddingStore::new(2, true);
        s.insert("hero", vec![1.0, 0.0]);
        s.insert("marvel", vec![0.0, 1.0]);
        s.insert("instance", vec![0.5, 0.5]);
        s.insert("of", vec![0.5, -0.5]);
        s
    }

    fn graph() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new("Marvel", "Marvel");
        g.add_node("hero", "hero");
        g.add_edge("Marvel", "instance of", "hero").unwrap();
        g
    }

    #[test]
    fn prepared_shapes_and_centroids() {
        let tokens: Vec<String> = ["the", "hero", "Marvel"].map(String::from).to_vec();
        let mask = locate_mention(&tokens, "Marvel").unwrap();
        let mut config = ModelConfig::toy(Arch::RnnTriplets);
        config.embedding_dim = 2;
        let ex = PreparedExample::build(&tokens, mask, &graph(), &store(), &config, true).unwrap();

        assert_eq!(ex.token_vectors.len(), 3);
        assert_eq!(ex.node_vectors.len(), 2);
        assert_eq!(ex.triplet_vectors.len(), 1);
        assert_eq!(ex.triplet_vectors[0].len(), 6);
        // x_marvel (+) e_instance_of (+) x_hero
        assert_eq!(ex.triplet_vectors[0], vec![0.0, 1.0, 0.5, 0.0, 1.0, 0.0]);
        assert_eq!(ex.graph_centroid, vec![0.5, 0.5]);
        // reified: 3 nodes, 2 edges
        assert_eq!(ex.reified.node_vectors.len(), 3);
        assert_eq!(ex.reified.adjacency.iter().map(|&v| v as usize).sum::<usize>(), 2);
        assert_eq!(ex.reified.central_index, 0);
    }

    #[test]
    fn strict_appendix_width_zero_pads() {
        let tokens: Vec<String> = ["hero"].map(String::from).to_vec();
        let mask = MentionMask { weights: vec![1] };
        let mut config = ModelConfig::toy(Arch::RnnTriplets);
        config.embedding_dim = 2;
        config.strict_appendix_triplet_width = true;
        let ex = PreparedExample::build(&tokens, mask, &graph(), &store(), &config, true).unwrap();
        assert_eq!(ex.triplet_vectors[0].len(), 8);
        assert_eq!(&ex.triplet_vectors[0][6..], &[0.0, 0.0]);
    }
}
