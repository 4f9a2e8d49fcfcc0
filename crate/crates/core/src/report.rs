//! Result emission: long-format CSV tables, JSON reports and the run
//! manifest with config hash and seed table.

use crate::config::ScenarioConfig;
use crate::engine::TrajectoryRecord;
use crate::analysis::FluxHistogram;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

/// SHA-256 of the canonical JSON serialization of the config.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// One row of the aggregated long-format table. The header contract is
/// `h,depth,t,metric,value,stderr` (empty stderr when not applicable).
#[derive(Clone, Debug, Serialize)]
pub struct MetricRow {
    pub h: f64,
    pub depth: usize,
    pub t: f64,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

pub fn write_long_csv(path: &Path, rows: &[MetricRow]) -> io::Result<()> {
    let mut out = String::from("h,depth,t,metric,value,stderr\n");
    for r in rows {
        let se = r.stderr.map(|s| s.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.h, r.depth, r.t, r.metric, r.value, se
        ));
    }
    fs::write(path, out)
}

/// Manifest embedded with every experiment directory: config hash, seed
/// table, and code version, so identical inputs reproduce identical outputs.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest<'a> {
    pub config_hash: String,
    pub code_version: &'static str,
    pub seeds: Vec<u64>,
    pub config: &'a ScenarioConfig,
    /// Experiment-specific metadata (conventions, snap distances, pool
    /// diagnostics).
    pub extra: serde_json::Value,
}

pub fn write_manifest(
    path: &Path,
    cfg: &ScenarioConfig,
    seeds: Vec<u64>,
    extra: serde_json::Value,
) -> io::Result<()> {
    let manifest = Manifest {
        config_hash: config_hash(cfg),
        code_version: env!("CARGO_PKG_VERSION"),
        seeds,
        config: cfg,
        extra,
    };
    fs::write(path, serde_json::to_string_pretty(&manifest).unwrap())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value).unwrap())
}

/// Grid snapshots, one row per snapshot: `t,v0..,i0..`.
pub fn write_trajectory_csv(path: &Path, traj: &TrajectoryRecord) -> io::Result<()> {
    let file = fs::File::create(path)?;
    let mut w = io::BufWriter::new(file);
    let n = traj.final_state.v.len();
    write!(w, "t")?;
    for p in 0..n {
        write!(w, ",v{p}")?;
    }
    for p in 0..n {
        write!(w, ",i{p}")?;
    }
    writeln!(w)?;
    for snap in &traj.snapshots {
        write!(w, "{}", snap.t)?;
        for x in &snap.v {
            write!(w, ",{x}")?;
        }
        for x in &snap.i {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Spike trains as `neuron,time,speed` (speed empty when absent).
pub fn write_spike_csv(path: &Path, traj: &TrajectoryRecord) -> io::Result<()> {
    let file = fs::File::create(path)?;
    let mut w = io::BufWriter::new(file);
    writeln!(w, "neuron,time,speed")?;
    for train in &traj.spikes {
        for (k, &t) in train.times.iter().enumerate() {
            match &train.speeds {
                Some(s) => writeln!(w, "{},{},{}", train.neuron, t, s[k])?,
                None => writeln!(w, "{},{},", train.neuron, t)?,
            }
        }
    }
    Ok(())
}

/// Flux histogram as `bin_lo,bin_hi,count,rate_per_time`.
pub fn write_flux_csv(path: &Path, flux: &FluxHistogram) -> io::Result<()> {
    let file = fs::File::create(path)?;
    let mut w = io::BufWriter::new(file);
    writeln!(w, "bin_lo,bin_hi,count,rate_per_time")?;
    for k in 0..flux.n_bins() {
        writeln!(
            w,
            "{},{},{},{}",
            flux.edges[k],
            flux.edges[k + 1],
            flux.counts[k],
            flux.bin_rate(k)
        )?;
    }
    Ok(())
}

/// Two-copy separation trace as `time,separation,log_separation`.
pub fn write_trace_csv(path: &Path, points: &[(f64, f64)]) -> io::Result<()> {
    let file = fs::File::create(path)?;
    let mut w = io::BufWriter::new(file);
    writeln!(w, "time,separation,log_separation")?;
    for &(t, sep) in points {
        let log = if sep > 0.0 {
            sep.ln().to_string()
        } else {
            String::new()
        };
        writeln!(w, "{t},{sep},{log}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = preset("base").unwrap();
        let b = preset("base").unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let mut c = preset("base").unwrap();
        c.seeds.master = 2;
        assert_ne!(config_hash(&a), config_hash(&c));
    }

    #[test]
    fn long_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agg.csv");
        write_long_csv(
            &path,
            &[MetricRow {
                h: 0.03125,
                depth: 3,
                t: 10.0,
                metric: "matched_mse".into(),
                value: 1.5e-3,
                stderr: Some(2e-4),
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("h,depth,t,metric,value,stderr\n"));
        assert!(text.contains("matched_mse"));
    }
}
