//! Scenario configuration: a human-editable TOML document, schema
//! validation, and the two shipped presets.

use crate::model::{build_feedforward, Drive, EiWeights, NetworkSpec, NeuronParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Parse errors carry the line/column of the offending token.
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("network.drives is required for experiment runs; run the drive calibration or set it explicitly")]
    DrivesMissing,
    #[error("unknown preset `{0}` (expected `base` or `strong-coupling`)")]
    UnknownPreset(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error("serialize: {0}")]
    Serialize(String),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub depth: usize,
    pub width: usize,
    pub n_exc: usize,
    pub n_inh: usize,
    pub p_conn: f64,
    pub c_w: f64,
    pub tau_v: f64,
    pub tau_c: f64,
    pub sigma: f64,
    pub v_th: f64,
    pub v_r: f64,
    /// Per-layer constant drives; required before experiments run. The
    /// shipped presets leave them unset and the calibration helper fills
    /// them to a target rate band.
    #[serde(default)]
    pub drives: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Fine reference step as a power of two: `h_ref = 2^h_ref_exp`.
    pub h_ref_exp: i32,
    /// Coarse steps as powers of two; must all be at or above `h_ref_exp`.
    pub coarse_exps: Vec<i32>,
    pub t_max: f64,
    /// Observation horizons; snapped to the coarsest ladder step so every
    /// ladder grid hits them exactly.
    pub checkpoints: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub min_samples: usize,
    pub max_samples: usize,
    pub matched_floor: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub c_v: f64,
    pub c_i: f64,
    pub c_r: f64,
    pub filter_tau: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub master: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network: NetworkConfig,
    pub grid: GridConfig,
    pub pools: PoolConfig,
    pub observable: ObservableConfig,
    pub seeds: SeedConfig,
    pub output: OutputConfig,
}

/// A snapped checkpoint with its snap distance.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SnappedTime {
    pub requested: f64,
    pub snapped: f64,
    pub distance: f64,
}

impl GridConfig {
    pub fn h_ref(&self) -> f64 {
        2f64.powi(self.h_ref_exp)
    }

    /// Coarsest ladder step; checkpoint times snap to its multiples.
    pub fn h_coarsest(&self) -> f64 {
        2f64.powi(*self.coarse_exps.iter().max().unwrap())
    }

    pub fn coarse_hs(&self) -> Vec<f64> {
        self.coarse_exps.iter().map(|&e| 2f64.powi(e)).collect()
    }

    /// Block-summation factors of the ladder relative to the reference step.
    pub fn coarse_factors(&self) -> Vec<usize> {
        self.coarse_exps
            .iter()
            .map(|&e| 1usize << (e - self.h_ref_exp) as u32)
            .collect()
    }

    pub fn snap(&self, t: f64) -> SnappedTime {
        let h = self.h_coarsest();
        let snapped = (t / h).round() * h;
        SnappedTime {
            requested: t,
            snapped,
            distance: (snapped - t).abs(),
        }
    }

    pub fn snapped_checkpoints(&self) -> Vec<SnappedTime> {
        self.checkpoints.iter().map(|&t| self.snap(t)).collect()
    }

    /// Snapped run horizon (the largest checkpoint, or `t_max` if larger).
    pub fn snapped_horizon(&self) -> f64 {
        let last = self
            .snapped_checkpoints()
            .iter()
            .map(|s| s.snapped)
            .fold(0.0f64, f64::max);
        last.max(self.snap(self.t_max).snapped)
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string_pretty(self).map_err(|e| ConfigError::Serialize(e.to_string()))
    }

    /// Schema validation; drive presence is checked separately by
    /// [`ScenarioConfig::require_drives`] so presets without calibrated
    /// drives still load.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = &self.network;
        if n.depth < 1 {
            return Err(invalid("network.depth", "must be >= 1"));
        }
        if n.width < 1 {
            return Err(invalid("network.width", "must be >= 1"));
        }
        if n.n_exc + n.n_inh != n.width {
            return Err(invalid(
                "network.n_exc/n_inh",
                format!("must sum to width {}", n.width),
            ));
        }
        if !(n.p_conn > 0.0 && n.p_conn <= 1.0) {
            return Err(invalid("network.p_conn", "must lie in (0, 1]"));
        }
        for (name, v) in [
            ("network.c_w", n.c_w),
            ("network.tau_v", n.tau_v),
            ("network.tau_c", n.tau_c),
            ("network.sigma", n.sigma),
            ("network.v_th", n.v_th),
            ("network.v_r", n.v_r),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if n.tau_v <= 0.0 || n.tau_c <= 0.0 {
            return Err(invalid("network.tau_v/tau_c", "must be > 0"));
        }
        if n.sigma < 0.0 || n.c_w < 0.0 {
            return Err(invalid("network.sigma/c_w", "must be >= 0"));
        }
        if n.v_r >= n.v_th {
            return Err(invalid("network.v_r", "must be below v_th"));
        }
        if let Some(drives) = &n.drives {
            if drives.len() != n.depth {
                return Err(invalid(
                    "network.drives",
                    format!("expected {} entries, got {}", n.depth, drives.len()),
                ));
            }
            if drives.iter().any(|d| !d.is_finite()) {
                return Err(invalid("network.drives", "must be finite"));
            }
        }

        let g = &self.grid;
        if g.coarse_exps.is_empty() {
            return Err(invalid("grid.coarse_exps", "must be nonempty"));
        }
        for &e in &g.coarse_exps {
            if e < g.h_ref_exp {
                return Err(invalid(
                    "grid.coarse_exps",
                    format!("{e} is finer than h_ref_exp {}", g.h_ref_exp),
                ));
            }
            if (e - g.h_ref_exp) > 40 {
                return Err(invalid("grid.coarse_exps", "ladder spans more than 2^40"));
            }
        }
        if !(g.t_max.is_finite() && g.t_max > 0.0) {
            return Err(invalid("grid.t_max", "must be positive and finite"));
        }
        if g.checkpoints.is_empty() {
            return Err(invalid("grid.checkpoints", "must be nonempty"));
        }
        for &t in &g.checkpoints {
            if !(t.is_finite() && t > 0.0) {
                return Err(invalid("grid.checkpoints", "must be positive and finite"));
            }
            if t > g.t_max * (1.0 + 1e-9) {
                return Err(invalid(
                    "grid.checkpoints",
                    format!("{t} exceeds t_max {}", g.t_max),
                ));
            }
        }
        if g.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("grid.checkpoints", "must be strictly increasing"));
        }
        if g.snapped_horizon() <= 0.0 {
            return Err(invalid("grid.checkpoints", "snap to an empty horizon"));
        }

        let p = &self.pools;
        if p.min_samples < 2 {
            return Err(invalid("pools.min_samples", "must be >= 2"));
        }
        if p.max_samples < p.min_samples {
            return Err(invalid("pools.max_samples", "must be >= min_samples"));
        }
        if p.matched_floor == 0 {
            return Err(invalid("pools.matched_floor", "must be >= 1"));
        }

        let o = &self.observable;
        for (name, v) in [
            ("observable.c_v", o.c_v),
            ("observable.c_i", o.c_i),
            ("observable.c_r", o.c_r),
            ("observable.filter_tau", o.filter_tau),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if o.filter_tau <= 0.0 {
            return Err(invalid("observable.filter_tau", "must be > 0"));
        }
        Ok(())
    }

    pub fn require_drives(&self) -> Result<&[f64], ConfigError> {
        self.network
            .drives
            .as_deref()
            .ok_or(ConfigError::DrivesMissing)
    }

    pub fn layer_params(&self) -> Result<Vec<NeuronParams>, ConfigError> {
        let drives = self.require_drives()?;
        Ok(drives
            .iter()
            .map(|&b| NeuronParams {
                tau_v: self.network.tau_v,
                tau_c: self.network.tau_c,
                v_th: self.network.v_th,
                v_r: self.network.v_r,
                sigma: self.network.sigma,
                drive: Drive::Constant(b),
            })
            .collect())
    }

    /// Build the feedforward network of this scenario; the weight draw is
    /// keyed off the master seed.
    pub fn build_network(&self) -> Result<NetworkSpec, ConfigError> {
        use rand::SeedableRng;
        let params = self.layer_params()?;
        let ei = EiWeights {
            p_conn: self.network.p_conn,
            c_w: self.network.c_w,
            n_exc: self.network.n_exc,
            n_inh: self.network.n_inh,
        };
        let weight_seed = crate::experiments::derive_seed(self.seeds.master, 0x5745_4947);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(weight_seed);
        Ok(build_feedforward(
            self.network.depth,
            self.network.width,
            &params,
            &ei,
            &mut rng,
        )?)
    }
}

/// The two Appendix scenarios. Both ship without calibrated drives.
pub fn preset(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let (tau_c, c_w, dir) = match name {
        "base" => (0.20, 0.18, "runs/base"),
        "strong-coupling" => (0.35, 1.2 * 0.18, "runs/strong-coupling"),
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    };
    let checkpoints = match name {
        "base" => vec![27.85, 55.70, 111.40],
        _ => vec![111.40],
    };
    let cfg = ScenarioConfig {
        network: NetworkConfig {
            depth: 9,
            width: 24,
            n_exc: 19,
            n_inh: 5,
            p_conn: 0.25,
            c_w,
            tau_v: 1.0,
            tau_c,
            sigma: 0.25,
            v_th: 1.0,
            v_r: 0.0,
            drives: None,
        },
        grid: GridConfig {
            h_ref_exp: -10,
            coarse_exps: vec![-5, -6, -7, -8, -9],
            t_max: 111.40,
            checkpoints,
        },
        pools: PoolConfig {
            min_samples: 500,
            max_samples: 5000,
            matched_floor: 400,
        },
        observable: ObservableConfig {
            c_v: 0.8,
            c_i: 0.5,
            c_r: 1.0,
            filter_tau: 0.35,
        },
        seeds: SeedConfig { master: 1 },
        output: OutputConfig {
            dir: dir.to_string(),
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values() {
        let base = preset("base").unwrap();
        assert_eq!(base.network.tau_c, 0.20);
        assert_eq!(base.network.c_w, 0.18);
        assert_eq!(base.grid.checkpoints, vec![27.85, 55.70, 111.40]);
        assert_eq!(base.grid.t_max, 111.40);
        assert_eq!(base.network.depth, 9);
        assert_eq!(base.network.width, 24);
        assert_eq!(base.network.n_exc, 19);
        assert_eq!(base.network.sigma, 0.25);
        assert_eq!(base.grid.h_ref_exp, -10);
        assert_eq!(base.grid.coarse_exps, vec![-5, -6, -7, -8, -9]);

        let strong = preset("strong-coupling").unwrap();
        assert!((strong.network.c_w - 0.216).abs() < 1e-15);
        assert_eq!(strong.network.tau_c, 0.35);

        assert!(preset("mystery").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = preset("base").unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn parse_error_carries_location() {
        let err = ScenarioConfig::from_toml_str("[network]\ndepth = \"nine\"\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line"), "no location in: {msg}");
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut cfg = preset("base").unwrap();
        cfg.network.p_conn = 0.0;
        assert!(cfg.validate().is_err());

        let mut cfg = preset("base").unwrap();
        cfg.grid.coarse_exps = vec![-11];
        assert!(cfg.validate().is_err());

        let mut cfg = preset("base").unwrap();
        cfg.network.drives = Some(vec![1.0; 3]);
        assert!(cfg.validate().is_err());

        let mut cfg = preset("base").unwrap();
        cfg.grid.t_max = f64::NAN;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn checkpoints_snap_to_coarsest_step() {
        let cfg = preset("base").unwrap();
        let snaps = cfg.grid.snapped_checkpoints();
        let h_max = 2f64.powi(-5);
        for s in &snaps {
            let k = (s.snapped / h_max).round();
            assert!((s.snapped - k * h_max).abs() < 1e-12);
            // Every ladder step divides the snapped time.
            for f in cfg.grid.coarse_hs() {
                let m = s.snapped / f;
                assert!((m - m.round()).abs() < 1e-9);
            }
        }
        // 111.40 is not dyadic; the snap distance is recorded.
        let last = snaps.last().unwrap();
        assert!((last.snapped - 111.40625).abs() < 1e-12);
        assert!(last.distance > 0.0);
    }

    #[test]
    fn drives_required_for_network_build() {
        let cfg = preset("base").unwrap();
        assert!(matches!(
            cfg.build_network(),
            Err(ConfigError::DrivesMissing)
        ));
        let mut cfg = cfg;
        cfg.network.drives = Some(vec![1.3; 9]);
        let net = cfg.build_network().unwrap();
        assert_eq!(net.n_neurons, 216);
    }
}
