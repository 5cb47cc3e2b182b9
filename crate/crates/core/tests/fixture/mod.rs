//! Loaders for the shared fixture corpus in the workspace `fixtures/`.
#![allow(dead_code)]

use std::path::PathBuf;

use rlvlm::gateway::Gateway;
use rlvlm::pipeline::{PipelineContext, PromptBank, RunConfig};
use rlvlm::prompts::load_catalog;
use rlvlm::rag::{build_index, load_knowledge_base, VectorIndex};
use rlvlm::rlcore::PolicyParams;

pub fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Fixture images as `(file name, bytes)`, sorted by name.
pub fn images() -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir().join("images"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

pub struct World {
    pub config: RunConfig,
    pub gateway: Gateway,
    pub bank: PromptBank,
    pub index: VectorIndex,
}

impl World {
    pub fn new(config: RunConfig) -> Self {
        let gateway = config.gateway.build().unwrap();
        let bank = PromptBank::new(load_catalog(dir().join("prompts.jsonl")).unwrap(), &gateway).unwrap();
        let index = build_index(&load_knowledge_base(dir().join("kb.jsonl")).unwrap(), &gateway).unwrap();
        Self {
            config,
            gateway,
            bank,
            index,
        }
    }

    pub fn ctx(&self) -> PipelineContext<'_> {
        PipelineContext::new(&self.config, &self.gateway, &self.index, &self.bank).unwrap()
    }

    pub fn policy(&self, seed: u64) -> PolicyParams {
        PolicyParams::seeded(self.bank.net_shape(self.config.hidden), seed)
    }
}
