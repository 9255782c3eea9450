//! Incremental result persistence with resume support.
//!
//! Replicate rows are appended to `replicates.csv` as they complete, so an
//! interrupted run can be resumed: on restart the existing rows are read
//! back, already-completed (scenario, replicate) pairs are skipped, and only
//! the missing work is executed. A sidecar `manifest.txt` pins the seed
//! root, replicate count, a fingerprint of the scenario grid, and the
//! software version; a resume against a mismatching manifest is refused.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;

use super::{run_replicate, Method, ReplicateResult, RunStatus, Scenario, StudySettings};
use crate::error::{Error, Result};

pub const REPLICATES_HEADER: &str = "scenario_id,replicate_id,method,estimate,se,status,ess";
pub const REPLICATES_FILE: &str = "replicates.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "NA".to_string(),
    }
}

fn parse_opt(s: &str, what: &str, line: usize) -> Result<Option<f64>> {
    if s == "NA" {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Parse(format!("line {line}: invalid {what} '{s}'")))
}

pub fn format_row(r: &ReplicateResult) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.scenario_id,
        r.replicate_id,
        r.method.as_str(),
        fmt_opt(r.estimate),
        fmt_opt(r.se),
        r.status.as_str(),
        fmt_opt(r.ess)
    )
}

/// Write a full replicate table (header plus rows).
pub fn write_replicates_csv<W: Write>(w: &mut W, rows: &[ReplicateResult]) -> Result<()> {
    writeln!(w, "{REPLICATES_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", format_row(r))?;
    }
    Ok(())
}

/// Read a replicate table written by this module.
pub fn read_replicates_csv(path: &Path) -> Result<Vec<ReplicateResult>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 {
            if line != REPLICATES_HEADER {
                return Err(Error::Parse(format!("unexpected replicates header '{line}'")));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse(format!(
                "line {}: expected 7 fields, found {}",
                idx + 1,
                fields.len()
            )));
        }
        rows.push(ReplicateResult {
            scenario_id: fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: invalid scenario id", idx + 1)))?,
            replicate_id: fields[1]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: invalid replicate id", idx + 1)))?,
            method: Method::parse(fields[2])?,
            estimate: parse_opt(fields[3], "estimate", idx + 1)?,
            se: parse_opt(fields[4], "se", idx + 1)?,
            status: RunStatus::parse(fields[5])?,
            ess: parse_opt(fields[6], "ess", idx + 1)?,
        });
    }
    Ok(rows)
}

/// FNV-1a fingerprint of the scenario grid serialization.
pub fn grid_fingerprint(grid: &[Scenario]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for s in grid {
        let line = format!(
            "{},{},{},{},{},{};",
            s.id, s.n_ac, s.prognostic_coef, s.interaction_coef, s.correlation, s.ac_covariate_mean
        );
        for b in line.as_bytes() {
            hash ^= u64::from(*b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

/// Identity of a persisted run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub seed_root: u64,
    pub n_replicates: u32,
    pub grid_hash: u64,
    pub version: String,
}

impl Manifest {
    pub fn for_run(grid: &[Scenario], settings: &StudySettings) -> Self {
        Self {
            seed_root: settings.seed_root,
            n_replicates: settings.n_replicates,
            grid_hash: grid_fingerprint(grid),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "seed_root={}", self.seed_root)?;
        writeln!(w, "n_replicates={}", self.n_replicates)?;
        writeln!(w, "grid_hash={:016x}", self.grid_hash)?;
        writeln!(w, "version={}", self.version)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut seed_root = None;
        let mut n_replicates = None;
        let mut grid_hash = None;
        let mut version = None;
        for line in reader.lines() {
            let line = line?;
            let Some((k, v)) = line.split_once('=') else { continue };
            match k {
                "seed_root" => seed_root = v.parse().ok(),
                "n_replicates" => n_replicates = v.parse().ok(),
                "grid_hash" => grid_hash = u64::from_str_radix(v, 16).ok(),
                "version" => version = Some(v.to_string()),
                _ => {}
            }
        }
        match (seed_root, n_replicates, grid_hash, version) {
            (Some(s), Some(n), Some(g), Some(v)) => {
                Ok(Self { seed_root: s, n_replicates: n, grid_hash: g, version: v })
            }
            _ => Err(Error::Parse(format!("incomplete manifest at {}", path.display()))),
        }
    }

    fn compatible_with(&self, other: &Self) -> bool {
        self.seed_root == other.seed_root
            && self.n_replicates == other.n_replicates
            && self.grid_hash == other.grid_hash
    }
}

/// Run a study with incremental persistence under `dir`, resuming any
/// existing compatible run found there. Returns the complete sorted table.
pub fn run_study_in_dir(
    dir: &Path,
    grid: &[Scenario],
    settings: &StudySettings,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<Vec<ReplicateResult>> {
    if settings.n_replicates == 0 {
        return Err(Error::Config("replicate count must be at least 1".into()));
    }
    std::fs::create_dir_all(dir)?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let replicates_path = dir.join(REPLICATES_FILE);
    let manifest = Manifest::for_run(grid, settings);

    let mut existing: Vec<ReplicateResult> = Vec::new();
    if manifest_path.exists() && replicates_path.exists() {
        let found = Manifest::read(&manifest_path)?;
        if !found.compatible_with(&manifest) {
            return Err(Error::Config(format!(
                "output directory {} holds an incompatible run \
                 (seed/replicates/grid differ); use a fresh directory",
                dir.display()
            )));
        }
        existing = read_replicates_csv(&replicates_path)?;
    } else {
        manifest.write(&manifest_path)?;
        let mut w = BufWriter::new(File::create(&replicates_path)?);
        writeln!(w, "{REPLICATES_HEADER}")?;
        w.flush()?;
    }

    // A pair counts as done only when all three method rows are present.
    let mut seen: std::collections::HashMap<(u32, u32), usize> = std::collections::HashMap::new();
    for r in &existing {
        *seen.entry((r.scenario_id, r.replicate_id)).or_insert(0) += 1;
    }
    let done: HashSet<(u32, u32)> =
        seen.iter().filter(|(_, &c)| c >= 3).map(|(&k, _)| k).collect();
    existing.retain(|r| done.contains(&(r.scenario_id, r.replicate_id)));

    let todo: Vec<(Scenario, u32)> = grid
        .iter()
        .flat_map(|s| (0..settings.n_replicates).map(move |r| (*s, r)))
        .filter(|(s, r)| !done.contains(&(s.id, *r)))
        .collect();

    let writer = Mutex::new(BufWriter::new(
        OpenOptions::new().append(true).open(&replicates_path)?,
    ));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("could not build worker pool: {e}")))?;

    let total = todo.len();
    let counter = std::sync::atomic::AtomicUsize::new(0);
    let fresh: Vec<ReplicateResult> = pool.install(|| {
        todo.par_iter()
            .flat_map_iter(|(scenario, replicate)| {
                let rows = run_replicate(scenario, *replicate, settings);
                {
                    let mut w = writer.lock().expect("writer lock poisoned");
                    for r in &rows {
                        let _ = writeln!(w, "{}", format_row(r));
                    }
                    let _ = w.flush();
                }
                if let Some(cb) = progress {
                    let d = counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                    cb(d, total);
                }
                rows
            })
            .collect()
    });
    writer.lock().expect("writer lock poisoned").flush()?;

    let mut all = existing;
    all.extend(fresh);
    all.sort_by_key(|r| (r.scenario_id, r.replicate_id, r.method));
    Ok(all)
}

/// Convenience wrapper returning the replicates path for a run directory.
pub fn replicates_path(dir: &Path) -> PathBuf {
    dir.join(REPLICATES_FILE)
}
