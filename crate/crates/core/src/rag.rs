//! Exact maximum-inner-product retrieval over reference descriptions.
//!
//! Every stored embedding is unit-norm, so the inner product used for
//! retrieval is also the cosine similarity reported as feedback.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::read_jsonl;
use crate::textenc::{Embedder, EmbeddingVector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocRecord {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeDoc {
    pub id: String,
    pub text: String,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub position: usize,
    pub id: String,
    pub score: f64,
}

/// Immutable, insertion-ordered document store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    dim: usize,
    docs: Vec<KnowledgeDoc>,
}

impl VectorIndex {
    /// Builds an index from already-embedded documents. Embeddings are
    /// normalized if they are not already.
    pub fn from_docs(docs: Vec<KnowledgeDoc>) -> Result<Self> {
        let Some(first) = docs.first() else {
            return Err(Error::EmptyKnowledgeBase);
        };
        let dim = first.embedding.dim();
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(docs.len());
        for doc in docs {
            if !seen.insert(doc.id.clone()) {
                return Err(Error::DuplicateId(doc.id));
            }
            if doc.embedding.dim() != dim {
                return Err(Error::domain(format!(
                    "document \"{}\" has dimension {} but the index uses {dim}",
                    doc.id,
                    doc.embedding.dim()
                )));
            }
            let embedding = doc.embedding.normalize()?;
            out.push(KnowledgeDoc { embedding, ..doc });
        }
        Ok(Self { dim, docs: out })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[KnowledgeDoc] {
        &self.docs
    }

    /// Exhaustive argmax of `⟨q, Dᵢ⟩`; ties go to the earliest document.
    pub fn retrieve(&self, q: &EmbeddingVector) -> Result<Retrieval> {
        if q.dim() != self.dim {
            return Err(Error::domain(format!(
                "query dimension {} does not match index dimension {}",
                q.dim(),
                self.dim
            )));
        }
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, doc) in self.docs.iter().enumerate() {
            let score = q.dot(&doc.embedding);
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        Ok(Retrieval {
            position: best,
            id: self.docs[best].id.clone(),
            score: best_score,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        let raw: VectorIndex = serde_json::from_str(&text)?;
        Self::from_docs(raw.docs)
    }
}

pub fn build_index(docs: &[DocRecord], embedder: &dyn Embedder) -> Result<VectorIndex> {
    if docs.is_empty() {
        return Err(Error::EmptyKnowledgeBase);
    }
    let docs = docs
        .iter()
        .map(|d| {
            Ok(KnowledgeDoc {
                id: d.id.clone(),
                text: d.text.clone(),
                embedding: embedder.embed(&d.text)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    VectorIndex::from_docs(docs)
}

pub fn mips_retrieve(q: &EmbeddingVector, index: &VectorIndex) -> Result<Retrieval> {
    index.retrieve(q)
}

/// Cosine between `generated_text` and its best-matching reference,
/// clamped to `[−1, 1]`.
pub fn feedback_score(generated_text: &str, index: &VectorIndex, embedder: &dyn Embedder) -> Result<f64> {
    Ok(feedback_retrieval(generated_text, index, embedder)?.score)
}

/// Like [`feedback_score`] but also reports which document was retrieved.
pub fn feedback_retrieval(
    generated_text: &str,
    index: &VectorIndex,
    embedder: &dyn Embedder,
) -> Result<Retrieval> {
    if generated_text.trim().is_empty() {
        return Err(Error::domain("empty generated text"));
    }
    let q = embedder.embed(generated_text)?;
    let mut hit = index.retrieve(&q)?;
    hit.score = hit.score.clamp(-1.0, 1.0);
    Ok(hit)
}

pub fn load_knowledge_base(path: impl AsRef<Path>) -> Result<Vec<DocRecord>> {
    let docs: Vec<DocRecord> = read_jsonl(path.as_ref())?;
    if docs.is_empty() {
        return Err(Error::EmptyKnowledgeBase);
    }
    Ok(docs)
}
