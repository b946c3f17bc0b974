use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One MFE layer: a 3×3 kernel dilated by a factor, or a dense kernel of a
/// given odd extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LayerKind {
    Dilated(usize),
    Normal(usize),
}

impl LayerKind {
    /// Side length of the region one output sees.
    pub fn extent(self) -> usize {
        match self {
            LayerKind::Dilated(d) => receptive_field(d),
            LayerKind::Normal(k) => k,
        }
    }

    /// Stored kernel side length.
    pub fn kernel(self) -> usize {
        match self {
            LayerKind::Dilated(_) => 3,
            LayerKind::Normal(k) => k,
        }
    }

    pub fn dilation(self) -> usize {
        match self {
            LayerKind::Dilated(d) => d,
            LayerKind::Normal(_) => 1,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::Dilated(d) => write!(f, "d{d}"),
            LayerKind::Normal(k) => write!(f, "n{k}"),
        }
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    /// `d<factor>` or `n<extent>`, e.g. `d2`, `n5`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("layer kind {s:?}: expected d<factor> or n<extent>"));
        let (tag, num) = s.trim().split_at_checked(1).ok_or_else(bad)?;
        let v: usize = num.parse().map_err(|_| bad())?;
        match (tag, v) {
            ("d", d) if d >= 1 => Ok(LayerKind::Dilated(d)),
            ("n", k) if k >= 1 && k % 2 == 1 => Ok(LayerKind::Normal(k)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for LayerKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LayerKind> for String {
    fn from(k: LayerKind) -> String {
        k.to_string()
    }
}

/// Receptive extent of a 3×3 kernel dilated by `d`: `2d + 1`.
pub fn receptive_field(d: usize) -> usize {
    2 * d + 1
}

/// Layer-kind layout applied to every MFE channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PatternPreset {
    /// Dilated and normal layers alternate, starting dilated.
    #[default]
    Alternating,
    /// Every layer dilated.
    Dilated,
    /// Every layer a dense kernel of the channel's extent.
    Conv,
}

impl PatternPreset {
    /// Layer kinds of 1-indexed channel `channel` with `layers` layers.
    pub fn channel(self, channel: usize, layers: usize) -> Vec<LayerKind> {
        let dilated = LayerKind::Dilated(channel);
        let normal = LayerKind::Normal(receptive_field(channel));
        (0..layers)
            .map(|l| match self {
                PatternPreset::Alternating if l % 2 == 0 => dilated,
                PatternPreset::Alternating => normal,
                PatternPreset::Dilated => dilated,
                PatternPreset::Conv => normal,
            })
            .collect()
    }
}

impl FromStr for PatternPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "alternating" => Ok(PatternPreset::Alternating),
            "dilated" => Ok(PatternPreset::Dilated),
            "conv" | "normal" => Ok(PatternPreset::Conv),
            other => Err(Error::Config(format!(
                "unknown pattern {other:?} (expected alternating, dilated or conv)"
            ))),
        }
    }
}

impl fmt::Display for PatternPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternPreset::Alternating => "alternating",
            PatternPreset::Dilated => "dilated",
            PatternPreset::Conv => "conv",
        })
    }
}

/// Structural hyperparameters of the measurement + reconstruction network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Measurements per pixel, in `(0, 1]`.
    pub measurement_rate: f64,
    /// Side of the square measurement block in pixels.
    pub block_size: usize,
    /// Number of parallel MFE channels, 1 to 3.
    pub mfe_channels: usize,
    pub layers_per_channel: usize,
    pub filters_per_layer: usize,
    /// Per channel, the kinds of its layers. Empty means the alternating
    /// preset.
    pub channel_patterns: Vec<Vec<LayerKind>>,
    pub fusion_filters: usize,
    pub head_kernel: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::new(0.10, 3)
    }
}

impl NetworkConfig {
    /// Full-size configuration (32×32 blocks, 4 layers of 32 filters per
    /// channel, alternating pattern).
    pub fn new(measurement_rate: f64, mfe_channels: usize) -> Self {
        NetworkConfig {
            measurement_rate,
            block_size: 32,
            mfe_channels,
            layers_per_channel: 4,
            filters_per_layer: 32,
            channel_patterns: Vec::new(),
            fusion_filters: 32,
            head_kernel: 3,
        }
        .with_pattern(PatternPreset::Alternating)
    }

    /// Regenerates `channel_patterns` from a preset.
    pub fn with_pattern(mut self, preset: PatternPreset) -> Self {
        self.channel_patterns = (1..=self.mfe_channels)
            .map(|c| preset.channel(c, self.layers_per_channel))
            .collect();
        self
    }

    /// Fills an empty pattern list with the alternating preset.
    pub fn normalized(self) -> Self {
        if self.channel_patterns.is_empty() {
            self.with_pattern(PatternPreset::Alternating)
        } else {
            self
        }
    }

    pub fn measurement_kernels(&self) -> Result<usize> {
        measurement_kernel_count(self.measurement_rate, self.block_size)
    }

    pub fn validate(&self) -> Result<()> {
        self.measurement_kernels()?;
        if !(1..=3).contains(&self.mfe_channels) {
            return Err(Error::Config(format!(
                "mfe_channels must be 1, 2 or 3 (got {})",
                self.mfe_channels
            )));
        }
        for (name, v) in [
            ("layers_per_channel", self.layers_per_channel),
            ("filters_per_layer", self.filters_per_layer),
            ("fusion_filters", self.fusion_filters),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.head_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "head_kernel must be odd (got {})",
                self.head_kernel
            )));
        }
        if self.channel_patterns.len() != self.mfe_channels {
            return Err(Error::Config(format!(
                "{} channel patterns for {} MFE channels",
                self.channel_patterns.len(),
                self.mfe_channels
            )));
        }
        for (i, pattern) in self.channel_patterns.iter().enumerate() {
            let channel = i + 1;
            if pattern.len() != self.layers_per_channel {
                return Err(Error::Config(format!(
                    "channel {channel} pattern has {} layers, expected {}",
                    pattern.len(),
                    self.layers_per_channel
                )));
            }
            let extent = receptive_field(channel);
            if let Some(bad) = pattern.iter().find(|k| k.extent() != extent) {
                return Err(Error::Config(format!(
                    "channel {channel} layer {bad} does not have the channel's {extent}×{extent} extent"
                )));
            }
        }
        Ok(())
    }

    /// Layers in the reconstruction path: deconvolution, MFE depth, and the
    /// two-layer head.
    pub fn reconstruction_depth(&self) -> usize {
        1 + self.layers_per_channel + 2
    }
}

/// Number of measurement kernels per block, `⌊MR·B²⌋` (at least 1).
pub fn measurement_kernel_count(measurement_rate: f64, block_size: usize) -> Result<usize> {
    if !(measurement_rate > 0.0 && measurement_rate <= 1.0) {
        return Err(Error::Config(format!(
            "measurement rate {measurement_rate} outside (0, 1]"
        )));
    }
    if block_size == 0 {
        return Err(Error::Config("block size must be positive".into()));
    }
    let pixels = (block_size * block_size) as f64;
    // Nudge so products such as 0.25·16 are not floored to 3 by rounding.
    let n = (measurement_rate * pixels + 1e-9).floor() as usize;
    Ok(n.clamp(1, block_size * block_size))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_counts() {
        assert_eq!(measurement_kernel_count(1.0, 32).unwrap(), 1024);
        assert_eq!(measurement_kernel_count(0.10, 32).unwrap(), 102);
        assert_eq!(measurement_kernel_count(0.04, 32).unwrap(), 40);
        assert_eq!(measurement_kernel_count(0.01, 32).unwrap(), 10);
        assert_eq!(measurement_kernel_count(0.25, 4).unwrap(), 4);
        assert_eq!(measurement_kernel_count(0.001, 4).unwrap(), 1);
        assert!(measurement_kernel_count(0.0, 32).is_err());
        assert!(measurement_kernel_count(1.5, 32).is_err());
        assert!(measurement_kernel_count(f64::NAN, 32).is_err());
    }

    #[test]
    fn receptive_fields() {
        assert_eq!([1, 2, 3].map(receptive_field), [3, 5, 7]);
    }

    #[test]
    fn default_patterns_alternate_starting_dilated() {
        let cfg = NetworkConfig::new(0.1, 3);
        use LayerKind::*;
        assert_eq!(
            cfg.channel_patterns[1],
            vec![Dilated(2), Normal(5), Dilated(2), Normal(5)]
        );
        assert_eq!(
            cfg.channel_patterns[2],
            vec![Dilated(3), Normal(7), Dilated(3), Normal(7)]
        );
        assert_eq!(cfg.reconstruction_depth(), 7);
        cfg.validate().unwrap();
    }

    #[test]
    fn pattern_validation() {
        let mut cfg = NetworkConfig::new(0.1, 2);
        cfg.channel_patterns[1].pop();
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::new(0.1, 2);
        cfg.channel_patterns[1][0] = LayerKind::Normal(3);
        assert!(cfg.validate().is_err());
        assert!(NetworkConfig::new(0.1, 4).validate().is_err());
    }

    #[test]
    fn layer_kind_text_form() {
        assert_eq!("d2".parse::<LayerKind>().unwrap(), LayerKind::Dilated(2));
        assert_eq!("n7".parse::<LayerKind>().unwrap(), LayerKind::Normal(7));
        assert!("n4".parse::<LayerKind>().is_err());
        assert!("x3".parse::<LayerKind>().is_err());
        assert_eq!(LayerKind::Normal(5).to_string(), "n5");
    }

    #[test]
    fn toml_round_trip() {
        let cfg = NetworkConfig::new(0.04, 2).with_pattern(PatternPreset::Dilated);
        let text = toml::to_string(&cfg).unwrap();
        assert!(text.contains("channel_patterns"));
        let back: NetworkConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
