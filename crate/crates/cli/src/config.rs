//! The run-configuration file and command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use msdcnn::{NetworkConfig, TrainPlan};
use serde::{Deserialize, Serialize};

/// Arithmetic used for training and inference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Contents of a `--config` file. Section and field names mirror
/// [`NetworkConfig`] and [`TrainPlan`]; every field is optional.
///
/// ```toml
/// precision = "f32"
/// manifest = "data/manifest.tsv"
///
/// [network]
/// measurement_rate = 0.1
/// mfe_channels = 3
///
/// [train]
/// epochs = 100
/// seed = 7
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub precision: Precision,
    /// Dataset manifest with the `train` split; relative paths are resolved
    /// against the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Manifest with the `val` split; defaults to `manifest`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_manifest: Option<PathBuf>,
    pub network: NetworkConfig,
    pub train: TrainPlan,
}

/// Flag values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub measurement_rate: Option<f64>,
    pub channels: Option<usize>,
    pub epochs: Option<usize>,
    pub manifest: Option<PathBuf>,
    pub val_manifest: Option<PathBuf>,
    pub precision: Option<Precision>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let table: toml::Table = toml::from_str(&text)?;
        let explicit_patterns = table
            .get("network")
            .and_then(|n| n.get("channel_patterns"))
            .is_some();
        if !explicit_patterns {
            // Derive patterns from the file's channel count, not the default's.
            cfg.network.channel_patterns.clear();
            cfg.network = cfg.network.normalized();
        }
        let explicit_phases = table
            .get("train")
            .and_then(|t| t.get("lr_phases"))
            .is_some();
        if !explicit_phases {
            // Stretch the default schedule over the file's epoch count.
            let epochs = cfg.train.epochs;
            cfg.train = TrainPlan {
                epochs: TrainPlan::default().epochs,
                lr_phases: TrainPlan::default().lr_phases,
                ..cfg.train
            }
            .with_epochs(epochs);
        }
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.val_manifest]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// The file at `path` if given, otherwise defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(seed) = o.seed {
            self.train.seed = seed;
        }
        if let Some(mr) = o.measurement_rate {
            self.network.measurement_rate = mr;
        }
        if let Some(c) = o.channels {
            if c != self.network.mfe_channels {
                self.network.mfe_channels = c;
                // Patterns are per channel; rebuild them for the new count.
                self.network.channel_patterns.clear();
            }
        }
        if let Some(e) = o.epochs {
            self.train = self.train.with_epochs(e);
        }
        if let Some(m) = &o.manifest {
            self.manifest = Some(m.clone());
        }
        if let Some(m) = &o.val_manifest {
            self.val_manifest = Some(m.clone());
        }
        if let Some(p) = o.precision {
            self.precision = p;
        }
        self.network = self.network.normalized();
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("<unprintable configuration: {e}>"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: RunConfig = toml::from_str(
            "precision = \"f64\"\n[network]\nmeasurement_rate = 0.04\nmfe_channels = 1\n[train]\nseed = 3\nepochs = 100\n",
        )
        .unwrap();
        let cfg = file.apply(&Overrides {
            seed: Some(9),
            channels: Some(3),
            epochs: Some(10),
            ..Overrides::default()
        });
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.network.measurement_rate, 0.04);
        assert_eq!(cfg.network.mfe_channels, 3);
        assert_eq!(cfg.network.channel_patterns.len(), 3);
        assert_eq!(cfg.train.epochs, 10);
        assert_eq!(cfg.precision, Precision::F64);
        cfg.train.validate().unwrap();
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = RunConfig::default().apply(&Overrides::default());
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn patterns_follow_the_files_channel_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "manifest = \"m.tsv\"\n[network]\nmfe_channels = 1\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.network.channel_patterns.len(), 1);
        assert_eq!(cfg.manifest.unwrap(), dir.path().join("m.tsv"));
    }

    #[test]
    fn schedule_follows_the_files_epoch_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[train]\nepochs = 10\n").unwrap();
        let plan = RunConfig::load(&path).unwrap().train;
        plan.validate().unwrap();
        let ends: Vec<usize> = plan.lr_phases.iter().map(|p| p.last_epoch).collect();
        assert_eq!(ends, [5, 8, 10]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("epochs = 3\n").is_err());
    }
}
