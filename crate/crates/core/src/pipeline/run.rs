use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::report::{IterationRecord, PipelineReport, TextSummary, ARTIFACT_VERSION, REPORT_SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::gateway::{image_digest, Gateway, CAPTION_STAGE};
use crate::metrics::{hex, semantic_similarity, text_stats, Lexicons};
use crate::prompts::{PromptCatalog, RankedPrompt};
use crate::rag::{feedback_retrieval, VectorIndex};
use crate::rlcore::{
    feedback_objective, policy_forward, ppo_objective, sample_action, NetShape, ObjectiveKind, PolicyParams,
    PpoTrainer, Transition,
};
use crate::textenc::{Embedder, EmbeddingVector};

pub const SELECT_STAGE: &str = "select";
pub const RAG_STAGE: &str = "rag";
pub const UPDATE_STAGE: &str = "update";

/// A prompt catalog with every prompt embedded once.
#[derive(Debug, Clone)]
pub struct PromptBank {
    catalog: PromptCatalog,
    /// Indexed by action.
    embeddings: Vec<EmbeddingVector>,
}

impl PromptBank {
    pub fn new(catalog: PromptCatalog, embedder: &dyn Embedder) -> Result<Self> {
        let embeddings = catalog.embed_all(embedder)?;
        Ok(Self { catalog, embeddings })
    }

    pub fn catalog(&self) -> &PromptCatalog {
        &self.catalog
    }

    pub fn embedding(&self, action: usize) -> &EmbeddingVector {
        &self.embeddings[action]
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].dim()
    }

    /// Policy shape for observations built by [`observation`].
    pub fn net_shape(&self, hidden: usize) -> NetShape {
        NetShape::new(2 * self.dim(), hidden, self.catalog.action_space())
    }

    fn rank(&self, catalog: &PromptCatalog, text: &EmbeddingVector) -> Result<Vec<RankedPrompt>> {
        crate::prompts::rank_embeddings(text, catalog.actions().iter().map(|&a| (a, &self.embeddings[a])))
    }

    fn mean_embedding(&self, catalog: &PromptCatalog) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for &a in catalog.actions() {
            for (m, v) in mean.iter_mut().zip(self.embeddings[a].values()) {
                *m += v;
            }
        }
        let n = catalog.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Observation: the generated-text embedding followed by the mean
/// embedding of the active prompts.
pub fn observation(text: &EmbeddingVector, bank: &PromptBank, catalog: &PromptCatalog) -> Vec<f64> {
    let mut obs = text.values().to_vec();
    obs.extend(bank.mean_embedding(catalog));
    obs
}

/// Reward of `selected`: its recorded score in `ranked`.
pub fn compute_reward(selected: usize, ranked: &[RankedPrompt]) -> Result<f64> {
    ranked
        .iter()
        .find(|r| r.action == selected)
        .map(|r| r.score)
        .ok_or_else(|| Error::domain(format!("action {selected} is not in the ranked list")))
}

/// Mutable loop state for one image.
#[derive(Debug, Clone)]
pub struct IterationState {
    /// 1-based number of the next iteration to run.
    pub iteration: usize,
    pub feedback: bool,
    pub pending_update: Option<Vec<Transition>>,
    pub catalog: PromptCatalog,
    /// Prompt used for the next caption call.
    pub prompt: String,
    pub text: Option<String>,
    pub observation: Option<Vec<f64>>,
}

impl IterationState {
    pub fn new(catalog: PromptCatalog, base_prompt: impl Into<String>) -> Self {
        Self {
            iteration: 1,
            feedback: false,
            pending_update: None,
            catalog,
            prompt: base_prompt.into(),
            text: None,
            observation: None,
        }
    }
}

/// Read-only inputs shared by every image of a run.
#[derive(Clone, Copy)]
pub struct PipelineContext<'a> {
    pub config: &'a RunConfig,
    pub gateway: &'a Gateway,
    pub index: &'a VectorIndex,
    pub bank: &'a PromptBank,
}

impl<'a> PipelineContext<'a> {
    pub fn new(
        config: &'a RunConfig,
        gateway: &'a Gateway,
        index: &'a VectorIndex,
        bank: &'a PromptBank,
    ) -> Result<Self> {
        config.validate()?;
        if index.dim() != bank.dim() || gateway.dim() != bank.dim() {
            return Err(Error::domain(format!(
                "embedding dimensions disagree: index {}, prompts {}, gateway {}",
                index.dim(),
                bank.dim(),
                gateway.dim()
            )));
        }
        Ok(Self {
            config,
            gateway,
            index,
            bank,
        })
    }
}

/// Short hex fingerprint of θ.
pub fn policy_fingerprint(params: &PolicyParams) -> String {
    let mut h = Sha256::new();
    for w in params.theta() {
        h.update(w.to_bits().to_le_bytes());
    }
    hex(&h.finalize()[..8])
}

/// Seed for one image, derived from the run seed and the image bytes so
/// results do not depend on processing order.
pub fn image_seed(run_seed: u64, digest: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(digest.as_bytes());
    let bytes = h.finalize();
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}

fn at_stage(iteration: usize, stage: &str) -> impl FnOnce(Error) -> Error + '_ {
    move |e| {
        let stage = e.stage().unwrap_or(stage).to_owned();
        Error::Iteration {
            iteration,
            stage,
            source: Box::new(e),
        }
    }
}

/// One pass of the refinement loop. Advances `state` and returns the
/// record and the transition it produced.
pub fn run_iteration<R: rand::Rng + ?Sized>(
    state: &mut IterationState,
    trainer: &mut PpoTrainer,
    ctx: &PipelineContext<'_>,
    image: &[u8],
    rng: &mut R,
) -> Result<(IterationRecord, Transition)> {
    let cfg = ctx.config;
    let i = state.iteration;
    if i == 0 || i > cfg.iterations {
        return Err(Error::domain(format!("iteration {i} outside 1..={}", cfg.iterations)));
    }

    let caption = ctx
        .gateway
        .caption(image, &state.prompt)
        .map_err(at_stage(i, CAPTION_STAGE))?
        .caption;

    // A flag raised by the previous iteration is consumed before selection.
    let mut feedback_applied = false;
    if state.feedback {
        let batch = state
            .pending_update
            .take()
            .ok_or_else(|| Error::domain("feedback flag set without a pending update"))?;
        trainer.apply_feedback(&batch).map_err(at_stage(i, UPDATE_STAGE))?;
        state.feedback = false;
        feedback_applied = true;
    }

    let text_emb = ctx.gateway.embed(&caption).map_err(at_stage(i, crate::gateway::EMBED_STAGE))?;
    let before = state.catalog.clone();
    let ranked = ctx.bank.rank(&before, &text_emb).map_err(at_stage(i, SELECT_STAGE))?;

    let obs = observation(&text_emb, ctx.bank, &before);
    let mask = before.mask();
    let params = trainer.params();
    let fingerprint = policy_fingerprint(params);
    let dist = policy_forward(&obs, params, &mask).map_err(at_stage(i, SELECT_STAGE))?;
    let action = sample_action(&dist, rng);
    let prob = dist.probs()[action];
    let reward = compute_reward(action, &ranked).map_err(at_stage(i, SELECT_STAGE))?;

    let keep = cfg.retention(before.len());
    let after = before.retain_top(&ranked, keep).map_err(at_stage(i, SELECT_STAGE))?;
    let done = i == cfg.iterations;
    let next_obs = observation(&text_emb, ctx.bank, &after);

    // Retrieval feedback for every prompt that was on offer.
    let mut scores = Vec::with_capacity(before.len());
    for (a, entry) in before.iter() {
        let query = format!("{caption} {}", entry.text);
        let hit = feedback_retrieval(&query, ctx.index, ctx.gateway).map_err(at_stage(i, RAG_STAGE))?;
        scores.push((a, hit));
    }
    let chosen = &scores.iter().find(|(a, _)| *a == action).expect("action is active").1;
    let feedback_score = chosen.score;
    let rag_doc_id = chosen.id.clone();
    let (preferred, preferred_hit) = scores
        .iter()
        .fold(None::<&(usize, crate::rag::Retrieval)>, |best, cur| match best {
            Some(b) if b.1.score >= cur.1.score => Some(b),
            _ => Some(cur),
        })
        .expect("catalog is non-empty");

    let transition = Transition {
        state: obs.clone(),
        action,
        reward,
        next_state: next_obs.clone(),
        done,
        logp_old: prob.ln(),
        feedback: Some(feedback_score),
        mask: mask.clone(),
    };
    let objective = match trainer.kind() {
        ObjectiveKind::Feedback => feedback_objective(std::slice::from_ref(&transition), params, trainer.config()),
        ObjectiveKind::PpoOnly => ppo_objective(std::slice::from_ref(&transition), params, trainer.config()),
    }
    .map_err(at_stage(i, UPDATE_STAGE))?
    .value;

    let triggered = cfg.feedback_enabled() && feedback_score > reward + cfg.feedback_margin;
    if triggered {
        let pref_dist_logp = dist.probs()[*preferred].ln();
        let update = Transition {
            state: obs,
            action: *preferred,
            reward: compute_reward(*preferred, &ranked).map_err(at_stage(i, UPDATE_STAGE))?,
            next_state: next_obs.clone(),
            done,
            logp_old: pref_dist_logp,
            feedback: Some(preferred_hit.score),
            mask,
        };
        state.pending_update = Some(vec![update]);
        state.feedback = true;
    }

    let selected = before.get(action).expect("action is active");
    let record = IterationRecord {
        iteration: i,
        caption_prompt: state.prompt.clone(),
        caption: caption.clone(),
        feedback_applied,
        policy_fingerprint: fingerprint,
        catalog_size_before: before.len(),
        selected_action: action,
        selected_prompt_id: selected.id.clone(),
        selection_probability: prob,
        reward,
        feedback_score,
        rag_doc_id,
        rag_preferred_prompt_id: before.get(*preferred).expect("preferred is active").id.clone(),
        rag_preferred_score: preferred_hit.score,
        objective,
        feedback_triggered: triggered,
        retained_prompt_ids: after.entries().iter().map(|e| e.id.clone()).collect(),
        catalog_size_after: after.len(),
    };

    state.prompt = selected.text.clone();
    state.catalog = after;
    state.text = Some(caption);
    state.observation = Some(next_obs);
    state.iteration += 1;
    Ok((record, transition))
}

/// Report plus the transitions one image produced.
#[derive(Debug, Clone)]
pub struct Episode {
    pub report: PipelineReport,
    pub transitions: Vec<Transition>,
}

/// Failure partway through an image; `report` holds the completed
/// iterations and is flagged incomplete.
#[derive(Debug)]
pub struct PartialRun {
    pub report: Box<PipelineReport>,
    pub error: Error,
}

impl std::fmt::Display for PartialRun {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} iterations)", self.error, self.report.iterations.len())
    }
}

impl std::error::Error for PartialRun {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs the full loop on one image with its own copy of the policy, so
/// feedback updates never leak between images.
///
/// `rng_seed` drives prompt sampling; [`run_pipeline`] derives it from
/// the run seed and the image digest.
pub fn run_episode(
    image_name: &str,
    image: &[u8],
    params: &PolicyParams,
    ctx: &PipelineContext<'_>,
    rng_seed: u64,
) -> Result<Episode, PartialRun> {
    let cfg = ctx.config;
    let digest = image_digest(image);
    let mut report = PipelineReport {
        schema_version: REPORT_SCHEMA_VERSION,
        artifact_version: ARTIFACT_VERSION.to_owned(),
        image: image_name.to_owned(),
        image_digest: digest,
        seed: cfg.seed,
        config: cfg.clone(),
        initial_caption: String::new(),
        iterations: Vec::new(),
        final_text: None,
        text_metrics: None,
        complete: false,
        error: None,
    };
    let fail = |mut report: PipelineReport, error: Error| {
        report.error = Some(error.to_string());
        PartialRun {
            report: Box::new(report),
            error,
        }
    };

    let mut trainer = match PpoTrainer::new(params.clone(), cfg.optimizer, cfg.ppo, cfg.objective) {
        Ok(t) => t,
        Err(e) => return Err(fail(report, e)),
    };
    if params.shape() != ctx.bank.net_shape(params.shape().hidden) {
        return Err(fail(report, Error::domain("policy shape does not match the prompt catalog")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut state = IterationState::new(ctx.bank.catalog().clone(), cfg.base_prompt.clone());
    let mut transitions = Vec::with_capacity(cfg.iterations);
    while state.iteration <= cfg.iterations {
        match run_iteration(&mut state, &mut trainer, ctx, image, &mut rng) {
            Ok((record, t)) => {
                if record.iteration == 1 {
                    report.initial_caption = record.caption.clone();
                }
                report.iterations.push(record);
                transitions.push(t);
            }
            Err(e) => return Err(fail(report, e)),
        }
    }

    let finish = || -> Result<(String, TextSummary)> {
        let last = cfg.iterations + 1;
        let refined = ctx
            .gateway
            .caption(image, &state.prompt)
            .map_err(at_stage(last, CAPTION_STAGE))?
            .caption;
        let lex = Lexicons::default();
        let similarity = semantic_similarity(&report.initial_caption, &refined, ctx.gateway)
            .map_err(at_stage(last, crate::gateway::EMBED_STAGE))?;
        let summary = TextSummary {
            initial: text_stats(&report.initial_caption, &lex),
            refined: text_stats(&refined, &lex),
            semantic_similarity: similarity,
        };
        Ok((refined, summary))
    };
    match finish() {
        Ok((text, summary)) => {
            report.final_text = Some(text);
            report.text_metrics = Some(summary);
            report.complete = true;
            Ok(Episode { report, transitions })
        }
        Err(e) => Err(fail(report, e)),
    }
}

/// The refinement loop on one image, seeded from the run seed and the
/// image digest.
pub fn run_pipeline(
    image_name: &str,
    image: &[u8],
    params: &PolicyParams,
    ctx: &PipelineContext<'_>,
) -> Result<PipelineReport, PartialRun> {
    let seed = image_seed(ctx.config.seed, &image_digest(image));
    run_episode(image_name, image, params, ctx, seed).map(|ep| ep.report)
}

/// Reads an image file and runs [`run_pipeline`] on it. The report names
/// the image by its file name.
pub fn run_pipeline_file(
    path: &Path,
    params: &PolicyParams,
    ctx: &PipelineContext<'_>,
) -> Result<PipelineReport, PartialRun> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let bytes = std::fs::read(path).map_err(|e| {
        let error = match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        };
        PartialRun {
            report: Box::new(empty_report(&name, ctx.config, &error)),
            error,
        }
    })?;
    run_pipeline(&name, &bytes, params, ctx)
}

fn empty_report(name: &str, cfg: &RunConfig, error: &Error) -> PipelineReport {
    PipelineReport {
        schema_version: REPORT_SCHEMA_VERSION,
        artifact_version: ARTIFACT_VERSION.to_owned(),
        image: name.to_owned(),
        image_digest: String::new(),
        seed: cfg.seed,
        config: cfg.clone(),
        initial_caption: String::new(),
        iterations: Vec::new(),
        final_text: None,
        text_metrics: None,
        complete: false,
        error: Some(error.to_string()),
    }
}
