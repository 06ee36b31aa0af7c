use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Name of the config echo written next to every set of artifacts.
pub const CONFIG_FILE: &str = "config.txt";
/// Append-only run log.
pub const LOG_FILE: &str = "runs.log";

/// Comment preamble shared by every text artifact: the config hash, then
/// the config echo, each line prefixed with `# `.
pub fn preamble(cfg: &ExperimentConfig) -> String {
    let mut s = format!("# config_hash = {}\n", cfg.hash());
    for line in cfg.echo().lines() {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s
}

/// Writes `header` and `rows` as CSV below the preamble.
pub fn write_csv(cfg: &ExperimentConfig, path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(preamble(cfg).as_bytes())?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Float cell text. Rust's shortest round-trip form, so equal values give
/// equal bytes.
pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn artifact(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

/// Creates the output directory and checks it is not holding artifacts of
/// another configuration.
pub fn prepare_out_dir(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    let path = artifact(cfg, CONFIG_FILE);
    if let Some(hash) = stored_hash(&path)? {
        if hash != cfg.hash() {
            return Err(Error::Config(format!(
                "{} holds artifacts of config {hash}, not {}",
                cfg.out_dir.display(),
                cfg.hash()
            )));
        }
    }
    let mut text = preamble(cfg).lines().next().unwrap_or_default().to_string();
    text.push('\n');
    text.push_str(&cfg.echo());
    fs::write(&path, text)?;
    Ok(())
}

fn stored_hash(path: &Path) -> Result<Option<String>> {
    if !path.exists() {
        return Ok(None);
    }
    let first = BufReader::new(File::open(path)?).lines().next().transpose()?;
    Ok(first.and_then(|l| l.strip_prefix("# config_hash = ").map(str::to_string)))
}

/// Appends `unix_ms<TAB>stage<TAB>hash<TAB>detail` to the run log. The
/// timestamp never goes below the last one already in the file.
pub fn log_event(cfg: &ExperimentConfig, stage: &str, detail: &str) -> Result<()> {
    let path = artifact(cfg, LOG_FILE);
    let last = if path.exists() {
        BufReader::new(File::open(&path)?)
            .lines()
            .map_while(|l| l.ok())
            .filter_map(|l| l.split('\t').next().and_then(|t| t.parse::<u128>().ok()))
            .last()
            .unwrap_or(0)
    } else {
        0
    };
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0).max(last);
    let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
    writeln!(f, "{now}\t{stage}\t{}\t{detail}", cfg.hash())?;
    Ok(())
}
