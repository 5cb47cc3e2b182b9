//! Lexicon-based caption statistics.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textenc::{words, Embedder};

/// Subordinate-clause markers counted toward detail density.
pub const CLAUSE_MARKERS: &[&str] = &["which", "that", "while", "where"];

const DESCRIPTIVE: &[&str] = &[
    "red", "blue", "green", "white", "black", "silver", "grey", "gray", "yellow", "orange", "dark",
    "bright", "large", "small", "big", "tall", "wide", "narrow", "long", "short", "heavy", "parked",
    "stationary", "moving", "busy", "empty", "crowded", "congested", "wet", "dry", "sunny", "cloudy",
    "foggy", "rainy", "snowy", "dim", "illuminated", "visible", "marked", "damaged", "urban", "rural",
    "slow", "fast", "slowly", "quickly", "carefully", "clearly", "partially", "fully", "compact",
    "articulated", "reflective", "painted", "faded", "daytime", "nighttime",
];

const ENTITIES: &[&str] = &[
    "car", "cars", "truck", "trucks", "bus", "buses", "van", "vans", "taxi", "taxis", "ambulance",
    "tram", "lorry", "motorcycle", "motorcycles", "scooter", "bicycle", "bicycles", "bike", "bikes",
    "cyclist", "cyclists", "pedestrian", "pedestrians", "person", "people", "driver", "drivers",
    "passenger", "passengers", "child", "children", "man", "woman", "junction", "intersection",
    "roundabout", "crossing", "crosswalk", "lane", "lanes", "road", "street", "sidewalk", "pavement",
    "barrier", "pole", "streetlight", "signal", "signals", "sign", "signs", "bridge", "tunnel",
    "highway", "motorway", "kerb", "curb",
];

const MODIFIERS: &[&str] = &[
    "several", "many", "few", "multiple", "two", "three", "four", "very", "slightly", "nearly",
    "mostly", "left", "right", "near", "behind", "beside", "ahead", "adjacent", "opposite", "front",
    "rear", "background", "foreground", "distant", "oncoming",
];

/// Word lists used by [`text_stats`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicons {
    pub descriptive: HashSet<String>,
    pub entities: HashSet<String>,
    pub modifiers: HashSet<String>,
}

impl Default for Lexicons {
    fn default() -> Self {
        let set = |words: &[&str]| words.iter().map(|w| (*w).to_owned()).collect();
        Self {
            descriptive: set(DESCRIPTIVE),
            entities: set(ENTITIES),
            modifiers: set(MODIFIERS),
        }
    }
}

impl Lexicons {
    /// Reads a JSON object `{"descriptive": [..], "entities": [..], "modifiers": [..]}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        let lex: Lexicons = serde_json::from_str(&text)?;
        Ok(Self {
            descriptive: lex.descriptive.iter().map(|w| w.to_lowercase()).collect(),
            entities: lex.entities.iter().map(|w| w.to_lowercase()).collect(),
            modifiers: lex.modifiers.iter().map(|w| w.to_lowercase()).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextStats {
    pub words: usize,
    pub unique_words: usize,
    /// (descriptive tokens + clause markers) / words, or 0 for empty text.
    pub detail_density: f64,
    pub entities: usize,
    pub modifiers: usize,
}

pub fn text_stats(text: &str, lexicons: &Lexicons) -> TextStats {
    let tokens = words(text);
    if tokens.is_empty() {
        return TextStats {
            words: 0,
            unique_words: 0,
            detail_density: 0.0,
            entities: 0,
            modifiers: 0,
        };
    }
    let unique: HashSet<&str> = tokens.iter().map(String::as_str).collect();
    let count = |set: &HashSet<String>| tokens.iter().filter(|t| set.contains(*t)).count();
    let descriptive = count(&lexicons.descriptive);
    let markers = tokens
        .iter()
        .filter(|t| CLAUSE_MARKERS.contains(&t.as_str()))
        .count();
    TextStats {
        words: tokens.len(),
        unique_words: unique.len(),
        detail_density: (descriptive + markers) as f64 / tokens.len() as f64,
        entities: count(&lexicons.entities),
        modifiers: count(&lexicons.modifiers),
    }
}

/// Cosine between the embeddings of two texts.
pub fn semantic_similarity(text_a: &str, text_b: &str, embedder: &dyn Embedder) -> Result<f64> {
    if text_a.trim().is_empty() || text_b.trim().is_empty() {
        return Err(Error::domain("semantic similarity of an empty text"));
    }
    let a = embedder.embed(text_a)?;
    let b = embedder.embed(text_b)?;
    Ok(a.cosine(&b).clamp(-1.0, 1.0))
}
