//! Dense-vector knowledge base: embeddings, cosine matching, flat and
//! IVF_FLAT indexes.

mod embedding;
mod index;
mod kmeans;

pub use embedding::{cosine_similarity, embed, Embedder, Embedding, HashEmbedder, DEFAULT_DIM};
pub use index::{
    match_embedding, match_trusted, FlatIndex, IndexMode, IndexParams, IvfIndex, MatchResult,
    TrustedEntry, VectorIndex, DEFAULT_NPROBE, DEFAULT_THRESHOLD,
};
pub use kmeans::{assign_nearest, build_kmeans};
