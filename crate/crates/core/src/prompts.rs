//! Hierarchical prompt catalog. Catalog positions in the loaded file are
//! the RL action indices; refined catalogs keep those original indices so
//! the policy's output layer never changes shape.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textenc::{Embedder, EmbeddingVector};

pub const DEFAULT_RETENTION_FLOOR: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEntry {
    pub id: String,
    pub level: u8,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptCatalog {
    entries: Vec<PromptEntry>,
    /// Action index of each entry, ascending.
    actions: Vec<usize>,
    /// Size of the full action space the indices refer to.
    action_space: usize,
}

/// One scored prompt. Lists are sorted by score descending, ties by
/// ascending action index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedPrompt {
    pub action: usize,
    pub score: f64,
}

impl PromptCatalog {
    /// Builds a catalog whose action space is `0..entries.len()`.
    pub fn new(entries: Vec<PromptEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
            if e.text.trim().is_empty() {
                return Err(Error::domain(format!("prompt \"{}\" has empty text", e.id)));
            }
            if !(1..=3).contains(&e.level) {
                return Err(Error::domain(format!(
                    "prompt \"{}\" has level {} outside 1..=3",
                    e.id, e.level
                )));
            }
        }
        let n = entries.len();
        Ok(Self {
            entries,
            actions: (0..n).collect(),
            action_space: n,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Size of the full action space (the size of the originally loaded catalog).
    pub fn action_space(&self) -> usize {
        self.action_space
    }

    pub fn entries(&self) -> &[PromptEntry] {
        &self.entries
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// `(action index, entry)` pairs in catalog order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &PromptEntry)> {
        self.actions.iter().copied().zip(&self.entries)
    }

    pub fn get(&self, action: usize) -> Option<&PromptEntry> {
        self.actions
            .binary_search(&action)
            .ok()
            .map(|pos| &self.entries[pos])
    }

    pub fn contains(&self, action: usize) -> bool {
        self.actions.binary_search(&action).is_ok()
    }

    /// Active-action mask over the full action space.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.action_space];
        for &a in &self.actions {
            mask[a] = true;
        }
        mask
    }

    /// Action indices grouped by hierarchy level.
    pub fn levels(&self) -> BTreeMap<u8, Vec<usize>> {
        let mut out: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
        for (a, e) in self.iter() {
            out.entry(e.level).or_default().push(a);
        }
        out
    }

    /// Scores every prompt against `text_embedding` by cosine similarity.
    pub fn rank(
        &self,
        text_embedding: &EmbeddingVector,
        embedder: &dyn Embedder,
    ) -> Result<Vec<RankedPrompt>> {
        let embeddings = self.embed_all(embedder)?;
        rank_embeddings(text_embedding, self.actions.iter().copied().zip(&embeddings))
    }

    pub fn embed_all(&self, embedder: &dyn Embedder) -> Result<Vec<EmbeddingVector>> {
        self.entries.iter().map(|e| embedder.embed(&e.text)).collect()
    }

    /// Keeps the `k` best-ranked prompts, preserving their catalog order.
    pub fn retain_top(&self, ranked: &[RankedPrompt], k: usize) -> Result<PromptCatalog> {
        if k == 0 || k > ranked.len() {
            return Err(Error::domain(format!(
                "retention count {k} outside 1..={}",
                ranked.len()
            )));
        }
        let keep: HashSet<usize> = ranked[..k].iter().map(|r| r.action).collect();
        let mut entries = Vec::with_capacity(k);
        let mut actions = Vec::with_capacity(k);
        for (a, e) in self.iter() {
            if keep.contains(&a) {
                entries.push(e.clone());
                actions.push(a);
            }
        }
        if actions.len() != k {
            return Err(Error::domain("ranked list refers to actions outside the catalog"));
        }
        Ok(Self {
            entries,
            actions,
            action_space: self.action_space,
        })
    }
}

/// Ranks `(action, embedding)` candidates against a query embedding.
pub fn rank_embeddings<'a>(
    query: &EmbeddingVector,
    candidates: impl IntoIterator<Item = (usize, &'a EmbeddingVector)>,
) -> Result<Vec<RankedPrompt>> {
    let mut ranked = Vec::new();
    for (action, emb) in candidates {
        if emb.dim() != query.dim() {
            return Err(Error::domain(format!(
                "prompt embedding dimension {} differs from text dimension {}",
                emb.dim(),
                query.dim()
            )));
        }
        let score = query.cosine(emb).clamp(-1.0, 1.0);
        ranked.push(RankedPrompt { action, score });
    }
    sort_ranked(&mut ranked);
    Ok(ranked)
}

pub fn sort_ranked(ranked: &mut [RankedPrompt]) {
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.action.cmp(&b.action))
    });
}

/// `update_prompt_list`: the top-`k` sub-catalog of `catalog` under `ranked`.
pub fn update_prompt_list(
    catalog: &PromptCatalog,
    ranked: &[RankedPrompt],
    k: usize,
) -> Result<PromptCatalog> {
    catalog.retain_top(ranked, k)
}

/// Default retention: half the list rounded up, never below the floor
/// (unless the list itself is already smaller).
pub fn default_retention(current: usize, floor: usize) -> usize {
    current.div_ceil(2).max(floor).min(current)
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<PromptCatalog> {
    let path = path.as_ref();
    let entries: Vec<PromptEntry> = read_jsonl(path)?;
    PromptCatalog::new(entries)
}

/// Reads one JSON value per non-blank line.
pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let contents = match fs::read_to_string(path) {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    contents
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
