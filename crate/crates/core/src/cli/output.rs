//! Output staging and the artifact formats written by the commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bayes::Draw;
use crate::{Error, Result};

/// Files written to temporaries next to their destination and renamed into
/// place only by [`Staging::commit`]. Dropping an uncommitted staging area
/// deletes the temporaries, so a failed command leaves no partial outputs.
#[derive(Default)]
pub struct Staging {
    files: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

impl Staging {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let name = path
            .file_name()
            .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?
            .to_string_lossy();
        let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        self.files.push((tmp.clone(), path.to_path_buf()));
        let mut w = BufWriter::new(file);
        fill(&mut w)?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
        Ok(())
    }

    pub fn commit(mut self) -> Result<()> {
        for (tmp, dest) in &self.files {
            std::fs::rename(tmp, dest).map_err(|e| Error::io(dest, e))?;
        }
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.files {
                let _ = std::fs::remove_file(tmp);
            }
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// One JSON object per line.
pub fn write_jsonl(w: &mut dyn Write, draws: &[Draw]) -> Result<()> {
    for d in draws {
        let line = serde_json::to_string(d).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::Data(e.to_string()))?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Draw>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Data(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Numeric leaves of a JSON value under dotted names. Booleans count as
/// 0/1; strings (enum tags) and per-point noise vectors are skipped.
fn leaves(prefix: &str, v: &Value, out: &mut Vec<(String, f64)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Number(n) => out.push((prefix.to_string(), n.as_f64().unwrap_or(f64::NAN))),
        Value::Bool(b) => out.push((prefix.to_string(), if *b { 1.0 } else { 0.0 })),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| leaves(&join(&i.to_string()), x, out)),
        Value::Object(m) => {
            for (k, x) in m {
                if k != "tau2_per_point" {
                    leaves(&join(k), x, out);
                }
            }
        }
        _ => {}
    }
}

fn theta_leaves(d: &Draw) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    leaves("theta", &serde_json::to_value(&d.theta).unwrap_or(Value::Null), &mut out);
    out
}

/// Per-iteration trace: log densities, `beta` and every scalar
/// hyperparameter, burn-in included.
pub fn write_trace(w: &mut dyn Write, draws: &[Draw], burn_in: usize) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Data(e.to_string());
    if let Some(first) = draws.first() {
        let mut header = vec!["iteration".to_string(), "retained".into(), "log_likelihood".into(), "log_posterior".into()];
        header.extend((1..=first.beta.len()).map(|k| format!("beta{k}")));
        header.extend(theta_leaves(first).into_iter().map(|(k, _)| k));
        csv.write_record(&header).map_err(err)?;
        for (i, d) in draws.iter().enumerate() {
            let mut row = vec![
                d.iteration.to_string(),
                u8::from(i >= burn_in).to_string(),
                d.log_likelihood.to_string(),
                d.log_posterior.to_string(),
            ];
            row.extend(d.beta.iter().map(|b| b.to_string()));
            row.extend(theta_leaves(d).into_iter().map(|(_, v)| v.to_string()));
            csv.write_record(&row).map_err(err)?;
        }
    }
    csv.flush().map_err(|e| Error::Data(e.to_string()))
}

pub fn write_json(w: &mut dyn Write, v: &Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, v).map_err(|e| Error::Data(e.to_string()))?;
    writeln!(w).map_err(|e| Error::Data(e.to_string()))
}
