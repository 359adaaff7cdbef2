//! Refined units: a main neuron fed through layers of intermediary neurons.
//!
//! Grouping `group_size` inputs into an intermediary that needs
//! `group_threshold` of them to fire turns each input into a fractional
//! contribution of `1 / group_threshold` while every neuron stays binary.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Network, NeuronId, SynapseId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedSpec {
    pub input_count: u32,
    pub group_size: u32,
    pub group_threshold: u32,
    pub main_threshold: u32,
    #[serde(default = "one")]
    pub layers: u32,
}

fn one() -> u32 {
    1
}

impl RefinedSpec {
    pub fn new(
        input_count: u32,
        group_size: u32,
        group_threshold: u32,
        main_threshold: u32,
    ) -> Self {
        Self {
            input_count,
            group_size,
            group_threshold,
            main_threshold,
            layers: 1,
        }
    }

    pub fn with_layers(mut self, layers: u32) -> Self {
        self.layers = layers;
        self
    }

    /// Node counts per level: `[inputs, level 1, .., level L]`.
    pub fn level_sizes(&self) -> Vec<u32> {
        let mut sizes = vec![self.input_count];
        for _ in 0..self.layers {
            let prev = *sizes.last().unwrap();
            sizes.push(prev.div_ceil(self.group_size.max(1)));
        }
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(msg));
        if self.input_count == 0 || self.group_size == 0 || self.layers == 0 {
            return fail(format!("counts must be positive: {self:?}"));
        }
        if self.group_threshold == 0 || self.main_threshold == 0 {
            return fail(format!("thresholds must be positive: {self:?}"));
        }
        if self.group_threshold > self.group_size {
            return fail(format!(
                "group threshold {} exceeds group size {}",
                self.group_threshold, self.group_size
            ));
        }
        let top = *self.level_sizes().last().unwrap();
        if self.main_threshold > top {
            return fail(format!(
                "main threshold {} exceeds the {top} top-level intermediaries",
                self.main_threshold
            ));
        }
        Ok(())
    }

    /// Consecutive groups over `count` nodes with their effective thresholds.
    /// The final group takes the remainder and caps its threshold at its size.
    fn groups(&self, count: u32) -> Vec<(std::ops::Range<u32>, u32)> {
        (0..count)
            .step_by(self.group_size as usize)
            .map(|start| {
                let end = (start + self.group_size).min(count);
                (start..end, self.group_threshold.min(end - start))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinedUnit {
    pub main: NeuronId,
    pub inputs: Vec<NeuronId>,
    /// Intermediaries level by level, lowest level first.
    pub levels: Vec<Vec<NeuronId>>,
}

impl RefinedUnit {
    pub fn intermediaries(&self) -> Vec<NeuronId> {
        self.levels.iter().flatten().copied().collect()
    }

    /// Ticks between driving the inputs and the main neuron's response.
    pub fn latency(&self) -> u64 {
        self.levels.len() as u64
    }
}

pub fn build_refined(network: &mut Network, spec: &RefinedSpec) -> Result<RefinedUnit> {
    spec.validate()?;
    let inputs = (0..spec.input_count)
        .map(|_| network.add_neuron(1.0))
        .collect::<Result<Vec<_>>>()?;

    let mut levels = Vec::with_capacity(spec.layers as usize);
    let mut below = inputs.clone();
    for _ in 0..spec.layers {
        let mut level = Vec::new();
        for (range, threshold) in spec.groups(below.len() as u32) {
            let node = network.add_neuron(f64::from(threshold))?;
            for i in range {
                network.add_synapse(below[i as usize], node, 1.0, 1)?;
            }
            level.push(node);
        }
        below = level.clone();
        levels.push(level);
    }

    let main = network.add_neuron(f64::from(spec.main_threshold))?;
    for &node in &below {
        network.add_synapse(node, main, 1.0, 1)?;
    }
    Ok(RefinedUnit {
        main,
        inputs,
        levels,
    })
}

/// Fewest inputs whose simultaneous firing can make the main neuron fire.
pub fn min_firing_set_size(spec: &RefinedSpec) -> Result<u64> {
    spec.validate()?;
    let mut costs = vec![1u64; spec.input_count as usize];
    for _ in 0..spec.layers {
        costs = spec
            .groups(costs.len() as u32)
            .into_iter()
            .map(|(range, threshold)| {
                cheapest(&costs[range.start as usize..range.end as usize], threshold)
            })
            .collect();
    }
    Ok(cheapest(&costs, spec.main_threshold))
}

fn cheapest(costs: &[u64], take: u32) -> u64 {
    let mut sorted = costs.to_vec();
    sorted.sort_unstable();
    sorted.iter().take(take as usize).sum()
}

/// Contribution of one input along `path` (input first, main neuron last):
/// one over the product of the thresholds of the intermediaries in between.
pub fn effective_weight(network: &Network, path: &[NeuronId]) -> Result<Ratio<u64>> {
    if path.len() < 2 {
        return Err(Error::invalid(
            "a weight path needs at least an input and a target",
        ));
    }
    for pair in path.windows(2) {
        if network.synapse_between(pair[0], pair[1]).is_none() {
            return Err(Error::NotFound(format!("edge {} -> {}", pair[0], pair[1])));
        }
    }
    let mut denom = 1u64;
    for &id in &path[1..path.len() - 1] {
        let t = network.neuron(id)?.threshold;
        if t.fract() != 0.0 {
            return Err(Error::invalid(format!(
                "intermediary {id} has non-integer threshold {t}"
            )));
        }
        denom *= t as u64;
    }
    Ok(Ratio::new(1, denom))
}

/// Replaces a weight-`weight` connection by `weight` parallel unit inputs
/// on the same edge.
pub fn expand_weighted(
    network: &mut Network,
    pre: NeuronId,
    post: NeuronId,
    weight: u32,
) -> Result<SynapseId> {
    if weight < 1 {
        return Err(Error::invalid("weight must be at least 1"));
    }
    match network.synapse_between(pre, post).map(|s| s.id) {
        Some(id) => {
            network.set_multiplicity(id, weight)?;
            Ok(id)
        }
        None => network.add_synapse_with_multiplicity(pre, post, 1.0, 1, weight),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;

    /// Exhaustive oracle: every vector of per-group firing counts, keeping the
    /// smallest total that fires the main neuron. One-layer specs only.
    fn enumerate_group_counts(spec: &RefinedSpec) -> Option<u64> {
        assert_eq!(spec.layers, 1);
        let n = spec.input_count as usize;
        let g = spec.group_size as usize;
        let sizes: Vec<usize> = (0..n).step_by(g).map(|s| (s + g).min(n) - s).collect();
        let mut counts = vec![0usize; sizes.len()];
        let mut best: Option<u64> = None;
        loop {
            let firing = counts
                .iter()
                .zip(&sizes)
                .filter(|(&c, &sz)| c >= (spec.group_threshold as usize).min(sz))
                .count();
            if firing >= spec.main_threshold as usize {
                let total = counts.iter().sum::<usize>() as u64;
                best = Some(best.map_or(total, |b| b.min(total)));
            }
            let mut i = 0;
            loop {
                if i == counts.len() {
                    return best;
                }
                counts[i] += 1;
                if counts[i] <= sizes[i] {
                    break;
                }
                counts[i] = 0;
                i += 1;
            }
        }
    }

    fn state_space(spec: &RefinedSpec) -> u64 {
        let n = spec.input_count as u64;
        let g = spec.group_size as u64;
        (0..n)
            .step_by(g as usize)
            .map(|s| (s + g).min(n) - s + 1)
            .product()
    }

    #[test]
    fn twenty_five_through_five_groups() {
        let spec = RefinedSpec::new(25, 5, 4, 4);
        assert_eq!(min_firing_set_size(&spec).unwrap(), 16);
        assert_eq!(enumerate_group_counts(&spec), Some(16));
        let mut net = Network::new(0);
        let unit = build_refined(&mut net, &spec).unwrap();
        assert_eq!(unit.levels[0].len(), 5);
        assert_eq!(net.neuron_count(), 31);
    }

    #[test]
    fn direct_unit_and_nesting() {
        assert_eq!(
            min_firing_set_size(&RefinedSpec::new(5, 5, 4, 1)).unwrap(),
            4
        );
        let nested = RefinedSpec::new(125, 5, 4, 4).with_layers(2);
        assert_eq!(min_firing_set_size(&nested).unwrap(), 64);
    }

    #[test]
    fn averaging_tendency() {
        let refined = min_firing_set_size(&RefinedSpec::new(25, 5, 4, 4)).unwrap() as f64;
        let midpoint = 25.0 / 2.0;
        assert!((refined - midpoint).abs() < (4.0f64 - midpoint).abs());
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(
            min_firing_set_size(&RefinedSpec::new(25, 5, 6, 4)),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            build_refined(&mut Network::new(0), &RefinedSpec::new(25, 5, 4, 6)),
            Err(Error::InvalidSpec(_))
        ));
        assert!(RefinedSpec::new(0, 5, 4, 1).validate().is_err());
    }

    #[test]
    fn remainder_group_caps_threshold() {
        let spec = RefinedSpec::new(7, 3, 3, 3);
        let mut net = Network::new(0);
        let unit = build_refined(&mut net, &spec).unwrap();
        let last = *unit.levels[0].last().unwrap();
        assert_eq!(net.neuron(last).unwrap().threshold, 1.0);
        assert_eq!(min_firing_set_size(&spec).unwrap(), 7);
        assert_eq!(enumerate_group_counts(&spec), Some(7));
    }

    #[test]
    fn built_network_fires_on_sixteen_not_fifteen() {
        let spec = RefinedSpec::new(25, 5, 4, 4);
        let mut net = Network::new(0);
        let unit = build_refined(&mut net, &spec).unwrap();
        let pick = |per_group: [usize; 5]| -> BTreeSet<NeuronId> {
            per_group
                .iter()
                .enumerate()
                .flat_map(|(g, &k)| unit.inputs[g * 5..g * 5 + k].to_vec())
                .collect()
        };
        let run = |net: &mut Network, drive: &BTreeSet<NeuronId>| {
            net.reset_state();
            net.step(drive).unwrap();
            net.step(&BTreeSet::new())
                .unwrap()
                .fired
                .contains(&unit.main)
        };
        assert!(run(&mut net, &pick([4, 4, 4, 4, 0])));
        assert!(!run(&mut net, &pick([4, 4, 4, 3, 0])));
        assert!(!run(&mut net, &pick([3, 3, 3, 3, 3])));
        assert!(run(&mut net, &pick([5, 5, 5, 5, 5])));
    }

    #[test]
    fn identity_wiring_matches_direct() {
        let spec = RefinedSpec::new(6, 1, 1, 3);
        let mut refined = Network::new(0);
        let unit = build_refined(&mut refined, &spec).unwrap();
        for mask in 0u32..64 {
            let drive: BTreeSet<_> = (0..6)
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| unit.inputs[b])
                .collect();
            refined.reset_state();
            refined.step(&drive).unwrap();
            let fired = refined
                .step(&BTreeSet::new())
                .unwrap()
                .fired
                .contains(&unit.main);
            assert_eq!(fired, mask.count_ones() >= 3, "mask {mask:06b}");
        }
    }

    #[test]
    fn weights_along_paths() {
        let mut net = Network::new(0);
        let spec = RefinedSpec::new(125, 5, 4, 4).with_layers(2);
        let unit = build_refined(&mut net, &spec).unwrap();
        let input = unit.inputs[0];
        let l1 = unit.levels[0][0];
        let l2 = unit.levels[1][0];
        assert_eq!(
            effective_weight(&net, &[input, l1, l2, unit.main]).unwrap(),
            Ratio::new(1, 16)
        );
        assert_eq!(effective_weight(&net, &[l1, l2]).unwrap(), Ratio::new(1, 1));
        assert_eq!(
            effective_weight(&net, &[input, l1]).unwrap(),
            Ratio::new(1, 1)
        );
        assert!(matches!(
            effective_weight(&net, &[input, unit.main]),
            Err(Error::NotFound(_))
        ));

        let mut one = Network::new(0);
        let u = build_refined(&mut one, &RefinedSpec::new(25, 5, 4, 4)).unwrap();
        assert_eq!(
            effective_weight(&one, &[u.inputs[3], u.levels[0][0], u.main]).unwrap(),
            Ratio::new(1, 4)
        );
    }

    #[test]
    fn nested_weight_agrees_with_min_set_ratio() {
        // 16 inputs at weight 1/16 each fill exactly one level-2 node; the main
        // neuron needs four of those.
        let spec = RefinedSpec::new(125, 5, 4, 4).with_layers(2);
        let weight = Ratio::new(1u64, 16);
        let per_top = (Ratio::from_integer(1u64) / weight).to_integer();
        assert_eq!(per_top * 4, min_firing_set_size(&spec).unwrap());
    }

    #[test]
    fn weight_expansion() {
        let mut net = Network::new(0);
        let a = net.add_neuron(1.0).unwrap();
        let b = net.add_neuron(3.0).unwrap();
        let s = expand_weighted(&mut net, a, b, 3).unwrap();
        assert_eq!(net.synapse(s).unwrap().multiplicity, 3);
        assert_eq!(net.synapse(s).unwrap().delivery(), 3.0);
        assert!(net.step(&[a].into()).unwrap().fired.contains(&b));
        let c = net.add_neuron(1.0).unwrap();
        let s1 = expand_weighted(&mut net, a, c, 1).unwrap();
        assert_eq!(net.synapse(s1).unwrap().multiplicity, 1);
        assert!(expand_weighted(&mut net, a, c, 0).is_err());
    }

    #[test]
    fn uniform_formula_exhaustive_small() {
        let mut checked = 0;
        for n in 1..=30u32 {
            for g in 1..=n {
                let spec0 = RefinedSpec::new(n, g, 1, 1);
                if state_space(&spec0) > 1 << 16 {
                    continue;
                }
                let groups = n.div_ceil(g);
                for gt in 1..=g {
                    for mt in 1..=groups {
                        let spec = RefinedSpec::new(n, g, gt, mt);
                        let fast = min_firing_set_size(&spec).unwrap();
                        assert_eq!(Some(fast), enumerate_group_counts(&spec), "{spec:?}");
                        if n % g == 0 {
                            assert_eq!(fast, u64::from(mt * gt));
                        }
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 1000, "only {checked} specs checked");
    }

    proptest! {
        #[test]
        fn extra_layer_never_lowers_min_set(n in 1u32..200, g in 1u32..6, gt_seed in 0u32..6, layers in 1u32..3) {
            let gt = 1 + gt_seed % g;
            let deeper = RefinedSpec { input_count: n, group_size: g, group_threshold: gt, main_threshold: 1, layers: layers + 1 };
            let top = *deeper.level_sizes().last().unwrap();
            for mt in 1..=top {
                let shallow = RefinedSpec { main_threshold: mt, layers, ..deeper.clone() };
                let deep = RefinedSpec { main_threshold: mt, ..deeper.clone() };
                prop_assert!(min_firing_set_size(&deep).unwrap() >= min_firing_set_size(&shallow).unwrap());
            }
        }
    }
}
