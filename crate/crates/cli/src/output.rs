//! Artifact serialization: 17-significant-digit floats, CSV writers, and the
//! hashed manifest.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use robin_green::green::{GreenColumn, KernelMatrixSample};
use robin_green::parabolic::Trajectory;
use sha2::{Digest, Sha256};

/// All floating-point output carries 17 significant digits so artifacts
/// round-trip bit-exactly.
pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), fmt_f)
}

pub fn sha256_hex(path: &Path) -> std::io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// manifest.json: the config echo plus every artifact with its content hash,
/// sorted by path.
pub fn write_manifest(
    dir: &Path,
    config_echo: &str,
    files: &[PathBuf],
) -> anyhow::Result<PathBuf> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for f in files {
        let rel = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().to_string();
        entries.push((rel, sha256_hex(f)?));
    }
    entries.sort();
    let artifacts: Vec<serde_json::Value> = entries
        .iter()
        .map(|(p, h)| serde_json::json!({ "path": p, "sha256": h }))
        .collect();
    let manifest = serde_json::json!({
        "config": serde_json::from_str::<serde_json::Value>(config_echo)?,
        "artifacts": artifacts,
    });
    let path = dir.join("manifest.json");
    write_text(&path, &serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Trajectory CSV: one row per time level, `k,t,dof0,...`; dofs are
/// component-major.
pub fn trajectory_csv(traj: &Trajectory<f64>) -> String {
    let n = traj.snapshots[0].len();
    let mut out = String::from("k,t");
    for d in 0..n {
        out.push_str(&format!(",dof{d}"));
    }
    out.push('\n');
    for (k, u) in traj.snapshots.iter().enumerate() {
        out.push_str(&k.to_string());
        out.push(',');
        out.push_str(&fmt_f(traj.grid.time(k)));
        for d in 0..n {
            out.push(',');
            out.push_str(&fmt_f(u[d]));
        }
        out.push('\n');
    }
    out
}

/// Sidecar JSON with the per-snapshot energies
/// (‖u‖²_M, λ̃ uᵀK_unit u, uᵀB u).
pub fn energy_json(traj: &Trajectory<f64>) -> String {
    let col = |i: usize| {
        traj.energy_log
            .iter()
            .map(|e| fmt_f(e[i]))
            .collect::<Vec<_>>()
            .join(",")
    };
    let times = (0..=traj.grid.steps)
        .map(|k| fmt_f(traj.grid.time(k)))
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "{{\"t\":[{}],\"mass\":[{}],\"gradient\":[{}],\"boundary\":[{}]}}\n",
        times,
        col(0),
        col(1),
        col(2)
    )
}

pub fn green_column_csv(col: &GreenColumn<f64>) -> String {
    let mut out = format!(
        "# source_vertex={} column={} epsilon={} t0={}\n",
        col.source_vertex,
        col.column,
        fmt_f(col.epsilon),
        fmt_f(col.source.t)
    );
    out.push_str(&trajectory_csv(&col.trajectory));
    out
}

pub const SAMPLE_HEADER_PREFIX: &str = "x0,x1,t,y0,y1,s,source";

/// Kernel sample CSV: fixed geometry columns, a provenance tag, then the
/// m x m value block row-major (`v00,v01,...`).
pub fn samples_csv(samples: &[KernelMatrixSample<f64>], source: &str) -> String {
    let m = samples.first().map_or(1, |s| s.value.nrows());
    let mut out = String::from(SAMPLE_HEADER_PREFIX);
    for j in 0..m {
        for k in 0..m {
            out.push_str(&format!(",v{j}{k}"));
        }
    }
    out.push('\n');
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{},{},{},{source}",
            fmt_f(s.x[0]),
            fmt_f(s.x[1]),
            fmt_f(s.t),
            fmt_f(s.y[0]),
            fmt_f(s.y[1]),
            fmt_f(s.s)
        ));
        for j in 0..m {
            for k in 0..m {
                out.push(',');
                out.push_str(&fmt_f(s.value[(j, k)]));
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_samples_csv(text: &str) -> anyhow::Result<Vec<KernelMatrixSample<f64>>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| anyhow::anyhow!("empty samples file"))?;
    if !header.starts_with(SAMPLE_HEADER_PREFIX) {
        anyhow::bail!("unexpected samples header: {header}");
    }
    let n_values = header.split(',').count() - 7;
    let m = (n_values as f64).sqrt().round() as usize;
    if m * m != n_values || m == 0 {
        anyhow::bail!("value block of {n_values} columns is not square");
    }
    let mut out = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 + n_values {
            anyhow::bail!("row has {} fields, expected {}", fields.len(), 7 + n_values);
        }
        let num = |i: usize| -> anyhow::Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| anyhow::anyhow!("cannot parse `{}` as a number", fields[i]))
        };
        let mut value = DMatrix::zeros(m, m);
        for j in 0..m {
            for k in 0..m {
                value[(j, k)] = num(7 + j * m + k)?;
            }
        }
        out.push(KernelMatrixSample {
            x: [num(0)?, num(1)?],
            y: [num(3)?, num(4)?],
            t: num(2)?,
            s: num(5)?,
            value,
        });
    }
    Ok(out)
}

/// Write to the file, or stdout when no path was given.
pub fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            w.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}
