//! The caption → rank → select → reward → retrieve → refine loop.
//!
//! Each image gets a fixed number of iterations (three by default). A
//! feedback update queued by retrieval in iteration `i` is applied at the
//! top of iteration `i + 1`, before that iteration selects a prompt.

mod config;
mod report;
mod run;
mod train;

pub use config::{GatewayConfig, RunConfig, RunPaths, DEFAULT_BASE_PROMPT, DEFAULT_FEEDBACK_MARGIN, DEFAULT_ITERATIONS};
pub use report::{
    to_canonical_json, IterationRecord, PipelineReport, TextSummary, ARTIFACT_VERSION, REPORT_SCHEMA_VERSION,
};
pub use run::{
    compute_reward, image_seed, observation, policy_fingerprint, run_episode, run_iteration, run_pipeline,
    run_pipeline_file, Episode, IterationState, PartialRun, PipelineContext, PromptBank, RAG_STAGE, SELECT_STAGE,
    UPDATE_STAGE,
};
pub use train::{train, train_with, EpisodeSource, ImageEpisodes, SyntheticPromptEnv, TrainLogEntry, TrainOutcome};
