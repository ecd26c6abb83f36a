//! One channel realization pushed through uplink estimation and precoding.

use crate::channel::{draw_channels, mmse_uplink_estimate, uplink_pilot_phase, ChannelRealization};
use crate::error::Result;
use crate::precoding::{effective_channels, mmse_precoder, normalize_and_allocate, EffectiveChannelSet, GramWeighting, NormalizationPolicy, PrecoderSet};
use crate::rng::Seed;
use crate::system::{Geometry, PilotBook, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PipelineOptions {
    pub normalization: NormalizationPolicy,
    pub weighting: GramWeighting,
}

#[derive(Debug, Clone)]
pub struct Realization {
    pub channels: ChannelRealization,
    pub precoders: PrecoderSet,
    pub effective: EffectiveChannelSet,
}

/// Draws channels, runs the uplink pilot phase, estimates, precodes and
/// normalizes, then forms every effective channel `B_ki`.
pub fn realize(
    config: &SystemConfig,
    geometry: &Geometry,
    pilots: &PilotBook,
    options: PipelineOptions,
    channel_seed: Seed,
    noise_seed: Seed,
) -> Result<Realization> {
    let channels = draw_channels(geometry, config, channel_seed);
    let obs = uplink_pilot_phase(&channels, pilots, config, noise_seed);
    let est = mmse_uplink_estimate(&obs, geometry, pilots, config);
    let raw = mmse_precoder(&est, config, options.weighting)?;
    let precoders = normalize_and_allocate(&raw, config, options.normalization)?;
    let effective = effective_channels(&channels, &precoders);
    Ok(Realization { channels, precoders, effective })
}
