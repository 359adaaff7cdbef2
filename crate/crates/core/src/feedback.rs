//! Excess input, backward repulsion and balance detection.
//!
//! When a neuron fires with more input than it needs, the surplus is pushed
//! back up each of its `N` direct input synapses as `(I_sn - T_m) / N`. That
//! repulsion loses `force` units per segment it travels against the forward
//! flow and is clamped at zero where it dies out.

use crate::error::{Error, Result};
use crate::net::{FiringRecord, Network, NeuronId, SynapseId, FIRING_TOLERANCE};

/// Largest average excess that still counts as balanced. The canonical
/// 5-input, threshold-4 unit sits exactly on it.
pub const DEFAULT_BALANCE_EPSILON: f64 = 0.2;

pub fn total_input(per_synapse_signals: &[f64]) -> Result<f64> {
    if let Some(bad) = per_synapse_signals.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::invalid(format!("negative input signal {bad}")));
    }
    Ok(per_synapse_signals.iter().sum())
}

/// Average excess per input synapse. Negative when the input is below
/// threshold; callers decide whether the neuron actually fired.
pub fn average_excess(total_input: f64, threshold: f64, inputs: u32) -> Result<f64> {
    if inputs == 0 {
        return Err(Error::invalid(
            "average excess needs at least one input synapse",
        ));
    }
    Ok((total_input - threshold) / f64::from(inputs))
}

/// Repulsion remaining `delta` segments back from the firing neuron.
pub fn repulsion_at(
    average_excess: f64,
    delta: u32,
    forward_force_per_segment: f64,
) -> Result<f64> {
    if delta < 1 {
        return Err(Error::invalid("repulsion distance must be at least 1"));
    }
    if !(forward_force_per_segment >= 0.0) {
        return Err(Error::invalid(format!(
            "forward force must be non-negative, got {forward_force_per_segment}"
        )));
    }
    Ok((average_excess - f64::from(delta) * forward_force_per_segment).max(0.0))
}

/// Accumulated opposing force after each of `segments` backward steps: `[f, 2f, .., kf]`.
pub fn resistance_profile(force: f64, segments: u32) -> Vec<f64> {
    (1..=segments).map(|k| f64::from(k) * force).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExcessReport {
    pub neuron: NeuronId,
    pub inputs: u32,
    pub total_input: f64,
    pub threshold: f64,
    pub average_excess: f64,
}

/// Excess reports for the neurons that fired in `record`.
pub fn excess_reports(network: &Network, record: &FiringRecord) -> Vec<ExcessReport> {
    record
        .rejections
        .iter()
        .filter_map(|(&id, &ae)| {
            let neuron = network.neuron(id).ok()?;
            Some(ExcessReport {
                neuron: id,
                inputs: network.open_input_count(id),
                total_input: record.input_sum(id),
                threshold: neuron.threshold,
                average_excess: ae,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepulsionProfile {
    pub synapse: SynapseId,
    /// Repulsion at `delta = 1..=distance`.
    pub values: Vec<f64>,
    /// Whether any point hit the zero floor.
    pub clamped: bool,
}

pub fn repulsion_profile(
    network: &Network,
    synapse: SynapseId,
    average_excess: f64,
    forward_force_per_segment: f64,
) -> Result<RepulsionProfile> {
    let syn = network.synapse(synapse)?;
    let mut values = Vec::with_capacity(syn.distance as usize);
    let mut clamped = false;
    for delta in 1..=syn.distance {
        let raw = average_excess - f64::from(delta) * forward_force_per_segment;
        clamped |= raw < 0.0;
        values.push(repulsion_at(
            average_excess,
            delta,
            forward_force_per_segment,
        )?);
    }
    Ok(RepulsionProfile {
        synapse,
        values,
        clamped,
    })
}

/// True iff every neuron that fired in the last `window` ticks did so with
/// average excess at most `epsilon`. Vacuously true when nothing fired.
pub fn is_balanced(network: &Network, window: usize, epsilon: f64) -> bool {
    let window = window.max(1);
    network.history().iter().rev().take(window).all(|rec| {
        rec.rejections
            .values()
            .all(|&ae| ae <= epsilon + FIRING_TOLERANCE)
    })
}
