use super::config::NetworkConfig;
use super::network::param_layout;
use crate::error::Result;

/// Which parameters [`count_parameters`] includes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamScope {
    /// Weight entries of the MFE convolutions, biases excluded.
    MfeOnly,
    /// Every trainable scalar, biases included.
    Full,
}

/// Parameter count implied by the configuration alone. Dilated layers count
/// their stored 3×3 taps, not the inflated footprint.
pub fn count_parameters(config: &NetworkConfig, scope: ParamScope) -> Result<usize> {
    let config = config.clone().normalized();
    let layout = param_layout(&config)?;
    Ok(layout
        .iter()
        .filter(|p| match scope {
            ParamScope::Full => true,
            ParamScope::MfeOnly => p.name.starts_with("mfe.") && !p.is_bias,
        })
        .map(|p| p.len())
        .sum())
}
