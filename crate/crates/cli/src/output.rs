use std::fs;
use std::path::Path;

use anyhow::Context;
use rlvlm::pipeline::{to_canonical_json, RunConfig, ARTIFACT_VERSION};

/// `# ` comment lines naming the artifact version, seed and config, so
/// every table can be traced back to the run that produced it.
pub fn provenance(cfg: &RunConfig) -> anyhow::Result<String> {
    let config = to_canonical_json(cfg)?;
    Ok(format!(
        "# rlvlm {ARTIFACT_VERSION}\n# seed {}\n# config {}\n",
        cfg.seed,
        config.trim_end()
    ))
}

/// Writes a CSV table behind the provenance header.
pub fn write_csv(path: &Path, cfg: &RunConfig, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut buf = provenance(cfg)?.into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    fs::write(path, buf).with_context(|| format!("cannot write {}", path.display()))
}

pub fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.6}")
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "—".into())
}
