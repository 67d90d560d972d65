//! Experiment configuration from flags and an optional JSON file.
//! Flags win over file values; file values win over defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use relaydof::channel::{DEFAULT_H_MAX, DEFAULT_H_MIN};
use relaydof::dof;
use relaydof::scheme::{Scheme, SchemeId};
use serde::Deserialize;

pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUT: &str = "out";
const DEFAULT_SNR: (f64, f64, f64) = (50.0, 90.0, 5.0);

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// One of y, ic, ic_align, ic_af, x, dist_ic, dist_y.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Number of users.
    #[arg(long)]
    pub k: Option<usize>,
    /// Antennas at the co-located relay.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of single-antenna distributed relays.
    #[arg(long)]
    pub relays: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_start: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_stop: Option<f64>,
    #[arg(long)]
    pub snr_step: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Smallest channel magnitude.
    #[arg(long)]
    pub hmin: Option<f64>,
    /// Largest channel magnitude.
    #[arg(long)]
    pub hmax: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Relays decode with perfect knowledge of the symbols.
    #[arg(long)]
    pub genie_relay: bool,
    /// JSON file with any of the above as snake_case keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scheme: Option<String>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub relays: Option<usize>,
    pub snr_start: Option<f64>,
    pub snr_stop: Option<f64>,
    pub snr_step: Option<f64>,
    pub snr_grid_db: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub hmin: Option<f64>,
    pub hmax: Option<f64>,
    pub out: Option<PathBuf>,
    pub genie_relay: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scheme: Scheme,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub h_min: f64,
    pub h_max: f64,
    /// `None` when neither a flag nor the file named a directory.
    pub out: Option<PathBuf>,
    pub genie_relay: bool,
}

impl Experiment {
    pub fn resolve(args: &RunArgs) -> Result<Self, ConfigError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let name = args
            .scheme
            .clone()
            .or(file.scheme)
            .ok_or_else(|| bad("no scheme given (use --scheme)"))?;
        let id: SchemeId = name.parse().map_err(|e| bad(format!("{e}")))?;
        let scheme = Scheme::build(id, args.k.or(file.k), args.n.or(file.n), args.relays.or(file.relays))
            .map_err(|e| bad(e.to_string()))?;

        let flags_set = args.snr_start.is_some() || args.snr_stop.is_some() || args.snr_step.is_some();
        let snr_grid_db = match file.snr_grid_db {
            Some(g) if !flags_set => g,
            _ => {
                let start = args.snr_start.or(file.snr_start).unwrap_or(DEFAULT_SNR.0);
                let stop = args.snr_stop.or(file.snr_stop).unwrap_or(DEFAULT_SNR.1);
                let step = args.snr_step.or(file.snr_step).unwrap_or(DEFAULT_SNR.2);
                if step.is_nan() || step <= 0.0 || !start.is_finite() || !stop.is_finite() {
                    return Err(bad(format!("bad SNR range {start}..{stop} step {step}")));
                }
                dof::grid(start, stop, step)
            }
        };
        if snr_grid_db.len() < 3
            || snr_grid_db.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
            || snr_grid_db.iter().any(|v| !v.is_finite())
        {
            return Err(bad("SNR grid must be strictly increasing with at least 3 points"));
        }

        let trials = args.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(bad("--trials must be at least 1"));
        }
        let h_min = args.hmin.or(file.hmin).unwrap_or(DEFAULT_H_MIN);
        let h_max = args.hmax.or(file.hmax).unwrap_or(DEFAULT_H_MAX);
        if !(h_min > 0.0 && h_min < h_max && h_max.is_finite()) {
            return Err(bad(format!("channel band needs 0 < hmin < hmax, got {h_min}..{h_max}")));
        }
        Ok(Experiment {
            scheme,
            snr_grid_db,
            trials,
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            h_min,
            h_max,
            out: args.out.clone().or(file.out),
            genie_relay: args.genie_relay || file.genie_relay.unwrap_or(false),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(scheme: &str) -> RunArgs {
        RunArgs {
            scheme: Some(scheme.into()),
            ..RunArgs::default()
        }
    }

    #[test]
    fn defaults() {
        let e = Experiment::resolve(&args("ic")).unwrap();
        assert_eq!(e.snr_grid_db, dof::default_grid());
        assert_eq!((e.trials, e.seed), (DEFAULT_TRIALS, DEFAULT_SEED));
        assert_eq!((e.h_min, e.h_max), (DEFAULT_H_MIN, DEFAULT_H_MAX));
        assert!(e.out.is_none() && !e.genie_relay);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"scheme": "x", "trials": 7, "seed": 3, "snr_grid_db": [0, 10, 20, 30], "genie_relay": true}"#,
        )
        .unwrap();
        let mut a = RunArgs {
            config: Some(path.clone()),
            ..RunArgs::default()
        };
        let e = Experiment::resolve(&a).unwrap();
        assert_eq!(e.scheme.id(), SchemeId::X);
        assert_eq!((e.trials, e.seed), (7, 3));
        assert_eq!(e.snr_grid_db, vec![0.0, 10.0, 20.0, 30.0]);
        assert!(e.genie_relay);

        a.trials = Some(9);
        a.scheme = Some("ic".into());
        a.snr_step = Some(10.0);
        let e = Experiment::resolve(&a).unwrap();
        assert_eq!(e.scheme.id(), SchemeId::Ic);
        assert_eq!(e.trials, 9);
        assert_eq!(e.snr_grid_db, vec![50.0, 60.0, 70.0, 80.0, 90.0]);
    }

    #[test]
    fn rejects_incompatible_parameters() {
        let mut a = args("y");
        a.k = Some(4);
        a.n = Some(2);
        assert!(Experiment::resolve(&a).is_err());
        let mut a = args("dist_y");
        a.relays = Some(2);
        assert!(Experiment::resolve(&a).is_err());
        let mut a = args("ic");
        a.hmin = Some(1.0);
        a.hmax = Some(1.0);
        assert!(Experiment::resolve(&a).is_err());
        assert!(Experiment::resolve(&args("nope")).is_err());
        assert!(Experiment::resolve(&RunArgs::default()).is_err());
    }

    #[test]
    fn unknown_file_keys_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"scheme": "x", "trails": 7}"#).unwrap();
        assert!(FileConfig::load(&path).is_err());
    }
}
