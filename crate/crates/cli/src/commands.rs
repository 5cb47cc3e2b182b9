use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use rlvlm::gateway::Gateway;
use rlvlm::metrics::{mse, psnr, srra, ssim, text_stats, Lexicons, Psnr, RasterImage, MAX_SAMPLE};
use rlvlm::pipeline::{
    self, run_pipeline, PipelineContext, PipelineReport, PromptBank, RunConfig,
};
use rlvlm::prompts::load_catalog;
use rlvlm::rag::{build_index, load_knowledge_base, VectorIndex};
use rlvlm::rlcore::{Checkpoint, PolicyParams, PpoTrainer};
use rlvlm::textenc::EmbeddingVector;

use crate::output::{num, opt_num, write_csv};
use crate::{CliError, ConfigArgs, InputArgs};

type CliResult<T = ()> = Result<T, CliError>;

const IMAGE_EXTENSIONS: &[&str] = &["pgm", "ppm", "pnm"];

fn resolve_config(args: &ConfigArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)
            .with_context(|| format!("cannot load config {}", path.display()))
            .map_err(CliError::usage)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    if let Some(l) = args.lambda {
        cfg.ppo.lambda = l;
    }
    if let Some(e) = args.clip_eps {
        cfg.ppo.clip_eps = e;
    }
    if let Some(k) = args.retention_k {
        cfg.retention_k = Some(k);
    }
    cfg.validate().context("invalid configuration").map_err(CliError::usage)?;
    Ok(cfg)
}

/// Applies path flags and returns the output directory. The output
/// directory is taken out of the config because it does not affect
/// results and would otherwise leak into the recorded snapshot.
fn apply_inputs(cfg: &mut RunConfig, inputs: &InputArgs, out: Option<PathBuf>) -> Option<PathBuf> {
    let p = &mut cfg.paths;
    for (slot, flag) in [
        (&mut p.images, &inputs.images),
        (&mut p.prompts, &inputs.prompts),
        (&mut p.kb, &inputs.kb),
        (&mut p.checkpoint, &inputs.checkpoint),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    out.or(p.out.take())
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str, flag: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::usage(anyhow!("no {what} given (use {flag} or the config file)")))
}

/// Shared inputs of `run` and `train`.
struct Loaded {
    gateway: Gateway,
    bank: PromptBank,
    index: VectorIndex,
    images: Vec<(String, Vec<u8>)>,
}

fn load_inputs(cfg: &RunConfig) -> CliResult<Loaded> {
    let gateway = cfg.gateway.build().context("invalid gateway").map_err(CliError::usage)?;
    let prompts = required(&cfg.paths.prompts, "prompt catalog", "--prompts")?;
    let catalog = load_catalog(prompts)
        .with_context(|| format!("cannot load prompt catalog {}", prompts.display()))
        .map_err(CliError::usage)?;
    let kb = required(&cfg.paths.kb, "knowledge base", "--kb")?;
    let index = load_index(kb, &gateway)?;
    let images_dir = required(&cfg.paths.images, "image directory", "--images")?;
    let images = read_images(images_dir)?;
    let bank = PromptBank::new(catalog, &gateway)
        .context("embed stage failed for the prompt catalog")
        .map_err(CliError::runtime)?;
    Ok(Loaded {
        gateway,
        bank,
        index,
        images,
    })
}

fn load_index(path: &Path, gateway: &Gateway) -> CliResult<VectorIndex> {
    if path.extension().is_some_and(|e| e == "json") {
        return VectorIndex::load(path)
            .with_context(|| format!("cannot load knowledge-base index {}", path.display()))
            .map_err(CliError::usage);
    }
    let docs = load_knowledge_base(path)
        .with_context(|| format!("cannot load knowledge base {}", path.display()))
        .map_err(CliError::usage)?;
    build_index(&docs, gateway)
        .context("embed stage failed for the knowledge base")
        .map_err(CliError::runtime)
}

fn list_images(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read image directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort_by_key(|p| p.file_name().map(|n| n.to_owned()));
    Ok(paths)
}

fn read_images(dir: &Path) -> CliResult<Vec<(String, Vec<u8>)>> {
    let paths = list_images(dir).map_err(CliError::usage)?;
    if paths.is_empty() {
        return Err(CliError::usage(anyhow!("no PGM/PPM images in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            fs::read(p)
                .with_context(|| format!("cannot read {}", p.display()))
                .map(|bytes| (name, bytes))
        })
        .collect::<anyhow::Result<_>>()
        .map_err(CliError::runtime)
}

fn load_policy(cfg: &RunConfig, fresh: bool, bank: &PromptBank) -> CliResult<(PolicyParams, Option<Checkpoint>)> {
    let shape = bank.net_shape(cfg.hidden);
    if fresh {
        return Ok((PolicyParams::seeded(shape, cfg.seed), None));
    }
    let path = cfg
        .paths
        .checkpoint
        .as_deref()
        .ok_or_else(|| CliError::usage(anyhow!("no policy given (use --checkpoint or --fresh)")))?;
    let ckpt = Checkpoint::load(path)
        .with_context(|| format!("cannot load checkpoint {}", path.display()))
        .map_err(CliError::usage)?;
    if ckpt.params.shape() != shape {
        return Err(CliError::usage(anyhow!(
            "checkpoint {} has shape {:?} but the prompt catalog needs {:?}",
            path.display(),
            ckpt.params.shape(),
            shape
        )));
    }
    Ok((ckpt.params.clone(), Some(ckpt)))
}

fn file_stem(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(stem, _)| stem)
}

pub fn run(args: &ConfigArgs, inputs: &InputArgs, jobs: usize, out: Option<PathBuf>) -> CliResult {
    let mut cfg = resolve_config(args)?;
    let out = apply_inputs(&mut cfg, inputs, out);
    if jobs == 0 {
        return Err(CliError::usage(anyhow!("--jobs must be at least 1")));
    }
    let out_dir = required(&out, "output directory", "--out")?.to_path_buf();
    let loaded = load_inputs(&cfg)?;
    let (params, _) = load_policy(&cfg, inputs.fresh, &loaded.bank)?;
    let ctx = PipelineContext::new(&cfg, &loaded.gateway, &loaded.index, &loaded.bank).map_err(CliError::usage)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(CliError::runtime)?;
    // Every image runs against the same frozen policy; collect keeps input order.
    let results: Vec<Result<PipelineReport, pipeline::PartialRun>> = pool.install(|| {
        loaded
            .images
            .par_iter()
            .map(|(name, bytes)| run_pipeline(name, bytes, &params, &ctx))
            .collect()
    });

    fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))
        .map_err(CliError::runtime)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for result in results {
        let report = match result {
            Ok(r) => r,
            Err(partial) => {
                failures.push(format!("{}: {}", partial.report.image, partial.error));
                *partial.report
            }
        };
        let path = out_dir.join(format!("{}.report.json", file_stem(&report.image)));
        let json = report.to_canonical_json().map_err(CliError::runtime)?;
        fs::write(&path, json)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(CliError::runtime)?;
        for it in &report.iterations {
            rows.push(vec![
                report.image.clone(),
                it.iteration.to_string(),
                it.selected_prompt_id.clone(),
                num(it.selection_probability),
                num(it.reward),
                num(it.feedback_score),
                it.feedback_triggered.to_string(),
                it.feedback_applied.to_string(),
                it.catalog_size_before.to_string(),
                it.catalog_size_after.to_string(),
            ]);
        }
    }
    write_csv(
        &out_dir.join("summary.csv"),
        &cfg,
        &[
            "image",
            "iteration",
            "prompt_id",
            "probability",
            "reward",
            "feedback",
            "feedback_triggered",
            "feedback_applied",
            "catalog_before",
            "catalog_after",
        ],
        &rows,
    )
    .map_err(CliError::runtime)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::runtime(anyhow!(
            "{} image(s) failed:\n  {}",
            failures.len(),
            failures.join("\n  ")
        )))
    }
}

pub fn train(
    args: &ConfigArgs,
    inputs: &InputArgs,
    train_updates: Option<u64>,
    episodes_per_update: Option<usize>,
    out: Option<PathBuf>,
) -> CliResult {
    let mut cfg = resolve_config(args)?;
    let out = apply_inputs(&mut cfg, inputs, out);
    if let Some(n) = train_updates {
        cfg.train_updates = n;
    }
    if let Some(n) = episodes_per_update {
        cfg.episodes_per_update = n;
    }
    cfg.validate().map_err(CliError::usage)?;
    let ckpt_path = required(&cfg.paths.checkpoint, "checkpoint path", "--checkpoint")?.to_path_buf();
    let loaded = load_inputs(&cfg)?;
    // Resume when a checkpoint exists, unless told to start over.
    let fresh = inputs.fresh || !ckpt_path.exists();
    let (params, ckpt) = load_policy(&cfg, fresh, &loaded.bank)?;
    let trainer = match ckpt {
        Some(c) => PpoTrainer::resume(params, c.optimizer, cfg.ppo, cfg.objective),
        None => PpoTrainer::new(params, cfg.optimizer, cfg.ppo, cfg.objective),
    }
    .map_err(CliError::usage)?;
    let ctx = PipelineContext::new(&cfg, &loaded.gateway, &loaded.index, &loaded.bank).map_err(CliError::usage)?;
    let outcome = pipeline::train(&loaded.images, trainer, ctx)
        .context("training failed")
        .map_err(CliError::runtime)?;
    let (params, optimizer) = outcome.trainer.into_parts();
    Checkpoint::new(params, optimizer, cfg.ppo, cfg.seed)
        .save(&ckpt_path)
        .with_context(|| format!("cannot save checkpoint {}", ckpt_path.display()))
        .map_err(CliError::runtime)?;
    if let Some(dir) = &out {
        fs::create_dir_all(dir).map_err(CliError::runtime)?;
        let rows: Vec<Vec<String>> = outcome
            .log
            .iter()
            .map(|e| {
                vec![
                    e.update.to_string(),
                    e.transitions.to_string(),
                    num(e.objective),
                    num(e.value_loss),
                    num(e.mean_reward),
                    opt_num(e.mean_feedback),
                ]
            })
            .collect();
        write_csv(
            &dir.join("train_log.csv"),
            &cfg,
            &["update", "transitions", "objective", "value_loss", "mean_reward", "mean_feedback"],
            &rows,
        )
        .map_err(CliError::runtime)?;
    }
    Ok(())
}

pub fn index(args: &ConfigArgs, kb: &Path, out: &Path) -> CliResult {
    let cfg = resolve_config(args)?;
    let gateway = cfg.gateway.build().map_err(CliError::usage)?;
    let docs = load_knowledge_base(kb)
        .with_context(|| format!("cannot load knowledge base {}", kb.display()))
        .map_err(CliError::usage)?;
    let index = build_index(&docs, &gateway)
        .context("embed stage failed for the knowledge base")
        .map_err(CliError::runtime)?;
    index
        .save(out)
        .with_context(|| format!("cannot write {}", out.display()))
        .map_err(CliError::runtime)
}

const THUMB: usize = 16;

/// Image representation used by the re-identification attack: channel-mean
/// luminance sampled on a 16×16 grid of cell centers, as a unit vector.
/// Images of any size map to the same dimension. An all-black image stays
/// the zero vector.
fn pixel_embedding(img: &RasterImage) -> anyhow::Result<EmbeddingVector> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut thumb = Vec::with_capacity(THUMB * THUMB);
    for ty in 0..THUMB {
        let y = ((2 * ty + 1) * h) / (2 * THUMB);
        for tx in 0..THUMB {
            let x = ((2 * tx + 1) * w) / (2 * THUMB);
            let sum: f64 = (0..c).map(|ch| f64::from(img.sample(x, y, ch))).sum();
            thumb.push(sum / c as f64);
        }
    }
    let v = EmbeddingVector::raw(thumb)?;
    Ok(if v.values().iter().all(|x| *x == 0.0) { v } else { v.normalize()? })
}

fn read_identities(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let (Some(file), Some(id)) = (row.get(0), row.get(1)) else {
            return Err(anyhow!("{}: expected columns file,identity", path.display()));
        };
        out.insert(file.trim().to_owned(), id.trim().to_owned());
    }
    Ok(out)
}

fn eval_images(cfg: &RunConfig, dir: &Path, out: &Path) -> CliResult {
    let orig_dir = dir.join("orig");
    let recon_dir = dir.join("recon");
    let names = |d: &Path| -> CliResult<BTreeSet<String>> {
        Ok(list_images(d)
            .map_err(CliError::usage)?
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect())
    };
    let orig = names(&orig_dir)?;
    let recon = names(&recon_dir)?;
    let orphans: Vec<String> = orig
        .symmetric_difference(&recon)
        .map(|n| {
            let side = if orig.contains(n) { "orig" } else { "recon" };
            format!("{side}/{n}")
        })
        .collect();
    if !orphans.is_empty() {
        return Err(CliError::runtime(anyhow!(
            "unpaired images:\n  {}",
            orphans.join("\n  ")
        )));
    }
    if orig.is_empty() {
        return Err(CliError::usage(anyhow!("no image pairs under {}", dir.display())));
    }
    let load = |p: PathBuf| RasterImage::load(&p).with_context(|| format!("cannot read {}", p.display()));
    let mut pairs = Vec::new();
    for name in &orig {
        let a = load(orig_dir.join(name)).map_err(CliError::runtime)?;
        let b = load(recon_dir.join(name)).map_err(CliError::runtime)?;
        pairs.push((name.clone(), a, b));
    }

    // Attack success per pair when identities are supplied.
    let identities_path = dir.join("identities.csv");
    let mut srra_cells: Vec<Option<f64>> = vec![None; pairs.len()];
    let mut overall = None;
    if identities_path.exists() {
        let ids = read_identities(&identities_path).map_err(CliError::usage)?;
        let identity = |n: &str| {
            ids.get(n)
                .cloned()
                .ok_or_else(|| CliError::usage(anyhow!("{n} has no identity in {}", identities_path.display())))
        };
        let mut gallery = Vec::new();
        let mut probes = Vec::new();
        let mut truth = Vec::new();
        for (name, a, b) in &pairs {
            let id = identity(name)?;
            gallery.push((id.clone(), pixel_embedding(a).map_err(CliError::runtime)?));
            probes.push(pixel_embedding(b).map_err(CliError::runtime)?);
            truth.push(id);
        }
        for (i, probe) in probes.iter().enumerate() {
            let hit = srra(std::slice::from_ref(probe), &gallery, std::slice::from_ref(&truth[i]))
                .map_err(CliError::runtime)?;
            srra_cells[i] = Some(hit);
        }
        overall = Some(srra(&probes, &gallery, &truth).map_err(CliError::runtime)?);
    }

    let mut rows = Vec::new();
    for ((name, a, b), cell) in pairs.iter().zip(&srra_cells) {
        let s = ssim(a, b).with_context(|| name.clone()).map_err(CliError::runtime)?;
        let p = psnr(a, b, MAX_SAMPLE).map_err(CliError::runtime)?;
        let m = mse(a, b).map_err(CliError::runtime)?;
        let p = match p {
            Psnr::Infinite => "inf".to_owned(),
            Psnr::Finite(db) => num(db),
        };
        rows.push(vec![name.clone(), num(s), p, num(m), opt_num(*cell)]);
    }
    if let Some(total) = overall {
        rows.push(vec!["ALL".into(), String::new(), String::new(), String::new(), num(total)]);
    }
    write_csv(&out.join("image_metrics.csv"), cfg, &["image", "ssim", "psnr", "mse", "srra"], &rows)
        .map_err(CliError::runtime)
}

fn eval_texts(cfg: &RunConfig, dir: &Path, out: &Path) -> CliResult {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read text directory {}", dir.display()))
        .map_err(CliError::usage)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    let lex = Lexicons::default();
    let mut rows = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p)
            .with_context(|| format!("cannot read {}", p.display()))
            .map_err(CliError::runtime)?;
        let st = text_stats(&text, &lex);
        rows.push(vec![
            p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            st.words.to_string(),
            st.unique_words.to_string(),
            num(st.detail_density),
            st.entities.to_string(),
            st.modifiers.to_string(),
        ]);
    }
    write_csv(
        &out.join("text_metrics.csv"),
        cfg,
        &["file", "words", "unique_words", "detail_density", "entities", "modifiers"],
        &rows,
    )
    .map_err(CliError::runtime)
}

pub fn eval(args: &ConfigArgs, images: Option<PathBuf>, texts: Option<PathBuf>, out: &Path) -> CliResult {
    let cfg = resolve_config(args)?;
    if images.is_none() && texts.is_none() {
        return Err(CliError::usage(anyhow!("nothing to evaluate (use --images and/or --texts)")));
    }
    fs::create_dir_all(out).map_err(CliError::runtime)?;
    if let Some(dir) = images {
        eval_images(&cfg, &dir, out)?;
    }
    if let Some(dir) = texts {
        eval_texts(&cfg, &dir, out)?;
    }
    Ok(())
}

fn pct_change(before: f64, after: f64) -> Option<f64> {
    (before != 0.0).then(|| 100.0 * (after - before) / before)
}

pub fn report(args: &ConfigArgs, reports: &Path, out: &Path) -> CliResult {
    let cfg = resolve_config(args)?;
    let mut paths: Vec<PathBuf> = fs::read_dir(reports)
        .with_context(|| format!("cannot read report directory {}", reports.display()))
        .map_err(CliError::usage)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".report.json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::usage(anyhow!("no report files in {}", reports.display())));
    }
    let mut text_rows = Vec::new();
    // iteration -> (reward sum, feedback sum, triggers, count)
    let mut per_iter: BTreeMap<usize, (f64, f64, usize, usize)> = BTreeMap::new();
    for p in &paths {
        let text = fs::read_to_string(p).map_err(CliError::runtime)?;
        let rep = PipelineReport::from_json(&text)
            .with_context(|| format!("malformed report {}", p.display()))
            .map_err(CliError::runtime)?;
        for it in &rep.iterations {
            let e = per_iter.entry(it.iteration).or_default();
            e.0 += it.reward;
            e.1 += it.feedback_score;
            e.2 += usize::from(it.feedback_triggered);
            e.3 += 1;
        }
        if let Some(tm) = &rep.text_metrics {
            let (a, b) = (&tm.initial, &tm.refined);
            text_rows.push(vec![
                rep.image.clone(),
                a.words.to_string(),
                b.words.to_string(),
                a.unique_words.to_string(),
                b.unique_words.to_string(),
                opt_num(pct_change(a.unique_words as f64, b.unique_words as f64)),
                num(a.detail_density),
                num(b.detail_density),
                opt_num(pct_change(a.detail_density, b.detail_density)),
                a.entities.to_string(),
                b.entities.to_string(),
                a.modifiers.to_string(),
                b.modifiers.to_string(),
                num(tm.semantic_similarity),
            ]);
        }
    }
    fs::create_dir_all(out).map_err(CliError::runtime)?;
    write_csv(
        &out.join("text_metrics.csv"),
        &cfg,
        &[
            "image",
            "words_initial",
            "words_final",
            "unique_initial",
            "unique_final",
            "unique_change_pct",
            "density_initial",
            "density_final",
            "density_change_pct",
            "entities_initial",
            "entities_final",
            "modifiers_initial",
            "modifiers_final",
            "semantic_similarity",
        ],
        &text_rows,
    )
    .map_err(CliError::runtime)?;
    let iter_rows: Vec<Vec<String>> = per_iter
        .iter()
        .map(|(i, (r, f, trig, n))| {
            vec![
                i.to_string(),
                n.to_string(),
                num(r / *n as f64),
                num(f / *n as f64),
                trig.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("iterations.csv"),
        &cfg,
        &["iteration", "images", "mean_reward", "mean_feedback", "feedback_triggers"],
        &iter_rows,
    )
    .map_err(CliError::runtime)
}
