//! Offline caption backend. Captions are filled from fixed vocabularies
//! using the image digest, the prompt, and the seed, so they are fully
//! reproducible and mention concrete scene objects.

use sha2::{Digest, Sha256};

use crate::metrics::RasterImage;
use crate::textenc::words;

const VEHICLES: &[&str] = &["car", "truck", "bus", "van", "taxi", "motorcycle", "bicycle", "tram"];
const COLORS: &[&str] = &["red", "blue", "white", "black", "silver", "yellow", "green", "grey"];
const SIZES: &[&str] = &["large", "small", "compact", "long", "wide", "tall"];
const PLACES: &[&str] = &["junction", "intersection", "roundabout", "crossing", "highway", "street"];
const PEOPLE: &[&str] = &["pedestrian", "cyclist", "driver", "child", "passenger"];
const PEOPLE_ACTIONS: &[&str] = &["waits", "walks", "stands", "crosses slowly", "moves quickly"];
const SIGNALS: &[&str] = &["signal", "sign", "streetlight", "barrier", "pole"];
const WEATHER: &[&str] = &["sunny", "cloudy", "foggy", "rainy", "wet", "dry"];
const POSITIONS: &[&str] = &["near", "behind", "beside", "ahead of", "opposite"];
const LANES: &[&str] = &["left", "right", "rear", "front"];
const STATES: &[&str] = &["parked", "moving", "stationary", "busy", "congested"];

/// Deterministic byte stream keyed by `(digest, prompt, seed, salt)`.
struct Picker {
    bytes: Vec<u8>,
    pos: usize,
}

impl Picker {
    fn new(image_digest: &str, prompt: &str, seed: u64, salt: &str) -> Self {
        let mut h = Sha256::new();
        h.update(image_digest.as_bytes());
        h.update([0]);
        h.update(prompt.as_bytes());
        h.update([0]);
        h.update(seed.to_le_bytes());
        h.update(salt.as_bytes());
        Self {
            bytes: h.finalize().to_vec(),
            pos: 0,
        }
    }

    fn pick<'a>(&mut self, list: &[&'a str]) -> &'a str {
        let b = self.bytes[self.pos % self.bytes.len()];
        self.pos += 1;
        list[b as usize % list.len()]
    }
}

fn lighting(image_bytes: &[u8]) -> &'static str {
    let mean = std::str::from_utf8(image_bytes)
        .ok()
        .and_then(|s| RasterImage::parse_pnm(s).ok())
        .map(|img| img.mean_intensity());
    match mean {
        Some(m) if m >= 170.0 => "bright daytime",
        Some(m) if m >= 85.0 => "overcast",
        Some(_) => "dark nighttime",
        None => "daytime",
    }
}

fn article(word: &str) -> &'static str {
    match word.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// Focus areas a prompt can ask about, keyed by trigger words.
const FOCUS: &[(&str, &[&str])] = &[
    ("vehicle", &["vehicle", "vehicles", "car", "cars", "truck", "traffic", "bus"]),
    ("people", &["pedestrian", "pedestrians", "people", "person", "cyclist", "cyclists"]),
    ("signals", &["sign", "signs", "signal", "signals", "light", "lights", "infrastructure"]),
    ("weather", &["weather", "lighting", "conditions", "visibility"]),
    ("layout", &["lane", "lanes", "road", "layout", "position", "positions", "junction"]),
];

pub(crate) fn mock_caption(image_bytes: &[u8], image_digest: &str, prompt: &str, seed: u64) -> String {
    // The base scene depends only on the image and seed, so re-prompting
    // the same image describes the same objects.
    let mut scene = Picker::new(image_digest, "", seed, "scene");
    let vehicle = scene.pick(VEHICLES);
    let color = scene.pick(COLORS);
    let place = scene.pick(PLACES);
    let person = scene.pick(PEOPLE);
    let second = scene.pick(VEHICLES);
    let light = lighting(image_bytes);
    let mut caption = format!("{} {light} traffic scene with a {color} {vehicle} at the {place}", article(light));

    let prompt_words = words(prompt);
    let mut detail = Picker::new(image_digest, prompt, seed, "detail");
    for (focus, triggers) in FOCUS {
        if !prompt_words.iter().any(|w| triggers.contains(&w.as_str())) {
            continue;
        }
        let sentence = match *focus {
            "vehicle" => format!(
                "a {} {} {second} is {} {} the {vehicle}",
                detail.pick(SIZES),
                detail.pick(COLORS),
                detail.pick(STATES),
                detail.pick(POSITIONS)
            ),
            "people" => format!(
                "a {person} {} {} the {place} while traffic is {}",
                detail.pick(PEOPLE_ACTIONS),
                detail.pick(POSITIONS),
                detail.pick(STATES)
            ),
            "signals" => format!(
                "a {} {} which is clearly visible stands {} the {place}",
                detail.pick(COLORS),
                detail.pick(SIGNALS),
                detail.pick(POSITIONS)
            ),
            "weather" => format!(
                "the weather is {} and the road is {}",
                detail.pick(WEATHER),
                detail.pick(WEATHER)
            ),
            _ => format!(
                "the {vehicle} occupies the {} lane where the road is {}",
                detail.pick(LANES),
                detail.pick(STATES)
            ),
        };
        caption.push_str(", ");
        caption.push_str(&sentence);
    }
    caption
}
