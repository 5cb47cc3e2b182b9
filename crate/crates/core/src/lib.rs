//! Feedback-driven prompt refinement for privacy-preserving scene captioning.
//!
//! An image is turned into text by a captioning service, and the text is
//! refined over a fixed number of iterations: prompts from a hierarchical
//! catalog are ranked against the caption by embedding similarity, a PPO
//! policy picks one, and an exact maximum-inner-product retrieval over
//! reference descriptions scores the choice. When retrieval disagrees with
//! the policy, a feedback update is queued for the next iteration.
//!
//! Modules:
//!
//! - [`textenc`]: deterministic toy transformer sentence encoder
//! - [`prompts`]: prompt catalog, ranking, and list refinement
//! - [`rlcore`]: policy/value network, clipped and feedback objectives, optimizer
//! - [`rag`]: exact MIPS index and the feedback score
//! - [`gateway`]: caption/embedding service clients and offline mocks
//! - [`pipeline`]: the iterative refinement loop, reports, and training
//! - [`metrics`]: image reconstruction and text-quality metrics

pub mod error;
pub mod gateway;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod rag;
pub mod rlcore;
pub mod textenc;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/encoder.md")]
    mod encoder {}
    #[doc = include_str!("../../../book/src/prompts.md")]
    mod prompts {}
    #[doc = include_str!("../../../book/src/policy.md")]
    mod policy {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/loop.md")]
    mod refinement_loop {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
