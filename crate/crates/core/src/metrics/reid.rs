use crate::error::{Error, Result};
use crate::textenc::EmbeddingVector;

/// Success rate of a nearest-neighbor re-identification attack, in percent.
///
/// Each reconstructed embedding is matched to the gallery entry with the
/// largest inner product (earliest entry on ties); the attack succeeds
/// when that entry carries the true identity. Lower is more private.
pub fn srra(
    reconstructed: &[EmbeddingVector],
    gallery: &[(String, EmbeddingVector)],
    truth: &[String],
) -> Result<f64> {
    if reconstructed.is_empty() {
        return Err(Error::domain("no reconstructed embeddings"));
    }
    if reconstructed.len() != truth.len() {
        return Err(Error::domain(format!(
            "{} reconstructions but {} identities",
            reconstructed.len(),
            truth.len()
        )));
    }
    if gallery.is_empty() {
        return Err(Error::domain("empty gallery"));
    }
    let mut hits = 0usize;
    for (probe, identity) in reconstructed.iter().zip(truth) {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, (_, emb)) in gallery.iter().enumerate() {
            if emb.dim() != probe.dim() {
                return Err(Error::domain("gallery and probe dimensions differ"));
            }
            let score = probe.dot(emb);
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        if &gallery[best].0 == identity {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / reconstructed.len() as f64)
}
