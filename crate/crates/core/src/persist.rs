//! On-disk formats: solved fields and CSV tables.
//!
//! A field is stored as `<stem>.json` (metadata and checksums) next to
//! `<stem>.value.f64` and `<stem>.policy.f64`, each a dense little-endian
//! array in `(snapshot, λ, h)` order with `h` fastest and snapshots in
//! increasing time.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actuarial::PremiumReport;
use crate::dynamics::LossSample;
use crate::error::{Error, Result};
use crate::hawkes::AttackPath;
use crate::hjb::{
    CyberModel, Field, FieldKind, QualityReport, Solution, SolverGrid, SolverOptions,
};
use crate::strategy::{GainRow, PolicyTrace};

pub const FORMAT_VERSION: u32 = 1;
pub const EXTRAPOLATION_RULE: &str = "constant_above_lambda_max";
pub const LAYOUT: &str =
    "f64 little-endian, (snapshot, lambda, h) row-major, snapshots ascending in t";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMeta {
    pub format_version: u32,
    pub kind: FieldKind,
    pub one_dimensional: bool,
    pub grid: SolverGrid,
    pub model: CyberModel,
    pub options: SolverOptions,
    pub extrapolation: String,
    pub layout: String,
    pub n_snapshots: usize,
    pub n_lambda: usize,
    pub n_h: usize,
    pub value_file: String,
    pub policy_file: String,
    pub value_sha256: String,
    pub policy_sha256: String,
}

fn to_bytes(x: &[f64]) -> Vec<u8> {
    x.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn from_bytes(b: &[u8]) -> Vec<f64> {
    b.chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect()
}

fn digest(b: &[u8]) -> String {
    hex::encode(Sha256::digest(b))
}

fn sibling(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Writes the field pair and its metadata; returns the metadata path.
pub fn save_solution(sol: &Solution, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let g = sol.grid();
    let value = to_bytes(&sol.value.data);
    let policy = to_bytes(&sol.policy.data);
    let meta = FieldMeta {
        format_version: FORMAT_VERSION,
        kind: sol.kind,
        one_dimensional: matches!(sol.kind, FieldKind::Poisson { .. }),
        grid: *g,
        model: sol.model,
        options: sol.options,
        extrapolation: EXTRAPOLATION_RULE.into(),
        layout: LAYOUT.into(),
        n_snapshots: g.n_snapshots(),
        n_lambda: g.n_lambda(),
        n_h: g.n_h(),
        value_file: format!("{stem}.value.f64"),
        policy_file: format!("{stem}.policy.f64"),
        value_sha256: digest(&value),
        policy_sha256: digest(&policy),
    };
    fs::write(sibling(dir, &meta.value_file), value)?;
    fs::write(sibling(dir, &meta.policy_file), policy)?;
    let path = dir.join(format!("{stem}.json"));
    fs::write(
        &path,
        serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    Ok(path)
}

/// Writes the quality report of a solve as JSON.
pub fn save_quality(report: &QualityReport, path: &Path) -> Result<()> {
    let s = serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, s)?;
    Ok(())
}

fn read_checked(path: &Path, sha: &str, expected: usize) -> Result<Vec<f64>> {
    let b = fs::read(path)?;
    if digest(&b) != sha {
        return Err(Error::Format(format!(
            "checksum mismatch for {}",
            path.display()
        )));
    }
    if b.len() != 8 * expected {
        return Err(Error::Format(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            b.len(),
            8 * expected
        )));
    }
    Ok(from_bytes(&b))
}

/// Reads a field written by [`save_solution`], verifying checksums and
/// sizes. The quality report is not part of the field and comes back empty.
pub fn load_solution(meta_path: &Path) -> Result<Solution> {
    let text = fs::read_to_string(meta_path)?;
    let meta: FieldMeta = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", meta_path.display())))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {}",
            meta.format_version
        )));
    }
    meta.grid.validate()?;
    let g = meta.grid;
    if (g.n_snapshots(), g.n_lambda(), g.n_h()) != (meta.n_snapshots, meta.n_lambda, meta.n_h) {
        return Err(Error::Format(
            "grid dimensions disagree with the metadata".into(),
        ));
    }
    let dir = meta_path.parent().unwrap_or(Path::new("."));
    let n = g.n_snapshots() * g.n_nodes();
    let value = read_checked(&sibling(dir, &meta.value_file), &meta.value_sha256, n)?;
    let policy = read_checked(&sibling(dir, &meta.policy_file), &meta.policy_sha256, n)?;
    Ok(Solution {
        kind: meta.kind,
        model: meta.model,
        options: meta.options,
        value: Field {
            grid: g,
            data: value,
        },
        policy: Field {
            grid: g,
            data: policy,
        },
        report: QualityReport::default(),
    })
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    csv::Writer::from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

fn finish(mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// Columns `t, lambda, h, V, z_star`, one row per node and snapshot.
pub fn write_field_csv(sol: &Solution, path: &Path) -> Result<()> {
    let g = sol.grid();
    let mut w = writer(path)?;
    w.write_record(["t", "lambda", "h", "V", "z_star"])
        .map_err(csv_err)?;
    for i in 0..g.n_snapshots() {
        for n in 0..g.n_lambda() {
            for m in 0..g.n_h() {
                w.serialize((
                    g.time(i),
                    g.lambda(n),
                    g.h(m),
                    sol.value.at(i, n, m),
                    sol.policy.at(i, n, m),
                ))
                .map_err(csv_err)?;
            }
        }
    }
    finish(w)
}

/// Columns `path, tau`, one row per attack.
pub fn write_paths_csv(paths: &[(u64, AttackPath)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["index", "tau"]).map_err(csv_err)?;
    for (i, p) in paths {
        for tau in &p.event_times {
            w.serialize((i, tau)).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Columns `seed, path, gross_loss, n_attacks, n_breaches, terminal_h`.
pub fn write_losses_csv(seed: u64, samples: &[LossSample], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "seed",
        "index",
        "gross_loss",
        "n_attacks",
        "n_breaches",
        "terminal_h",
    ])
    .map_err(csv_err)?;
    for (i, s) in samples.iter().enumerate() {
        w.serialize((
            seed,
            i,
            s.gross_loss,
            s.n_attacks,
            s.n_breaches,
            s.terminal_h,
        ))
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Columns `t, lambda, z, H`.
pub fn write_trace_csv(trace: &PolicyTrace, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "lambda", "z", "H"]).map_err(csv_err)?;
    for i in 0..trace.len() {
        w.serialize((
            trace.times[i],
            trace.intensity[i],
            trace.control[i],
            trace.level[i],
        ))
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Columns `t, lambda, h, gain_pct, benchmark`.
pub fn write_gain_csv(rows: &[GainRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "lambda", "h", "gain_pct", "benchmark"])
        .map_err(csv_err)?;
    for r in rows {
        w.serialize((r.t, r.lambda, r.h, r.gain_pct, r.benchmark.name()))
            .map_err(csv_err)?;
    }
    finish(w)
}

/// Loss spreads per loss-size variance: `eta_var, std_no_investment,
/// std_optimal, reduction_pct`, then the premium counterpart with `theta`.
pub fn write_premium_tables(
    rows: &[(PremiumReport, PremiumReport)],
    std_path: &Path,
    premium_path: &Path,
) -> Result<()> {
    let mut w = writer(std_path)?;
    w.write_record([
        "eta_var",
        "std_no_investment",
        "std_optimal",
        "reduction_pct",
    ])
    .map_err(csv_err)?;
    for (b, o) in rows {
        w.serialize((
            b.eta_var,
            b.loss_std,
            o.loss_std,
            100.0 * (1.0 - o.loss_std / b.loss_std),
        ))
        .map_err(csv_err)?;
    }
    finish(w)?;
    let mut w = writer(premium_path)?;
    w.write_record([
        "eta_var",
        "theta",
        "premium_no_investment",
        "premium_optimal",
        "reduction_pct",
    ])
    .map_err(csv_err)?;
    for (b, o) in rows {
        w.serialize((
            b.eta_var,
            b.theta,
            b.premium,
            o.premium,
            100.0 * (1.0 - o.premium / b.premium),
        ))
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Pretty JSON for any serializable report.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Format(e.to_string()))?;
    f.write_all(b"\n")?;
    Ok(())
}
