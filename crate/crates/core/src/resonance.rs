//! Resonance search over a network snapshot.
//!
//! Each seed sends a forward wave along open synapses. Wherever the wave hits
//! a dead end (a terminal, or optionally a refractory neuron) it is reflected
//! back along the edges the forward wave used. An edge resonates as strongly
//! as the weaker of its two directions, and every resonating edge belongs to
//! the recognised path. Reports from several seeds add up edge by edge.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Network, NeuronId, SynapseId};

pub const DEFAULT_MAX_DEPTH: u32 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceConfig {
    pub max_depth: u32,
    /// Also reflect from refractory neurons (firing blocked), which then do not propagate.
    pub reflect_blocked: bool,
}

impl Default for ResonanceConfig {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
            reflect_blocked: false,
        }
    }
}

/// Neurons with no open outgoing synapse.
pub fn find_terminals(network: &Network) -> BTreeSet<NeuronId> {
    network
        .neurons()
        .map(|n| n.id)
        .filter(|&id| !has_open_output(network, id))
        .collect()
}

fn has_open_output(network: &Network, id: NeuronId) -> bool {
    network
        .outgoing(id)
        .iter()
        .any(|s| network.synapse(*s).is_ok_and(|syn| syn.is_open()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EdgeVisits {
    pub synapse: SynapseId,
    pub pre: NeuronId,
    pub post: NeuronId,
    pub forward: u32,
    pub backward: u32,
    pub resonance: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResonanceReport {
    /// Hash of the network the report was computed on.
    pub snapshot: String,
    pub forward_visits: BTreeMap<SynapseId, u32>,
    pub backward_visits: BTreeMap<SynapseId, u32>,
    pub resonance: BTreeMap<SynapseId, u32>,
    pub recognized_path: BTreeSet<SynapseId>,
    pub terminals_hit: BTreeSet<NeuronId>,
    endpoints: BTreeMap<SynapseId, (NeuronId, NeuronId)>,
}

impl ResonanceReport {
    pub fn empty(snapshot: impl Into<String>) -> Self {
        Self {
            snapshot: snapshot.into(),
            forward_visits: BTreeMap::new(),
            backward_visits: BTreeMap::new(),
            resonance: BTreeMap::new(),
            recognized_path: BTreeSet::new(),
            terminals_hit: BTreeSet::new(),
            endpoints: BTreeMap::new(),
        }
    }

    pub fn forward(&self, s: SynapseId) -> u32 {
        self.forward_visits.get(&s).copied().unwrap_or(0)
    }

    pub fn backward(&self, s: SynapseId) -> u32 {
        self.backward_visits.get(&s).copied().unwrap_or(0)
    }

    pub fn resonance_of(&self, s: SynapseId) -> u32 {
        self.resonance.get(&s).copied().unwrap_or(0)
    }

    fn finish(&mut self) {
        self.resonance = self
            .forward_visits
            .iter()
            .map(|(s, &f)| (*s, f.min(self.backward(*s))))
            .filter(|(_, r)| *r > 0)
            .collect();
        self.recognized_path = self.resonance.keys().copied().collect();
    }

    pub fn edges(&self) -> Vec<EdgeVisits> {
        self.endpoints
            .iter()
            .map(|(&s, &(pre, post))| EdgeVisits {
                synapse: s,
                pre,
                post,
                forward: self.forward(s),
                backward: self.backward(s),
                resonance: self.resonance_of(s),
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            snapshot: &'a str,
            edges: Vec<EdgeVisits>,
            recognized_path: &'a BTreeSet<SynapseId>,
            terminals_hit: &'a BTreeSet<NeuronId>,
        }
        Ok(serde_json::to_string_pretty(&Doc {
            snapshot: &self.snapshot,
            edges: self.edges(),
            recognized_path: &self.recognized_path,
            terminals_hit: &self.terminals_hit,
        })?)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = crate::harness::csv_writer(out);
        for e in self.edges() {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Forward and reflected traversal from each seed, summed over seeds.
pub fn resonate(
    network: &Network,
    seeds: &BTreeSet<NeuronId>,
    config: &ResonanceConfig,
) -> Result<ResonanceReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("resonance needs at least one seed"));
    }
    if let Some(bad) = seeds.iter().find(|s| !network.contains(**s)) {
        return Err(Error::NotFound(format!("seed {bad}")));
    }
    let mut total = ResonanceReport::empty(network.snapshot_hash());
    for &seed in seeds {
        let single = resonate_one(network, seed, config);
        total = combine_searches(&total, &single)?;
    }
    Ok(total)
}

fn is_reflector(network: &Network, id: NeuronId, config: &ResonanceConfig) -> bool {
    if !has_open_output(network, id) {
        return true;
    }
    config.reflect_blocked && network.neuron(id).is_ok_and(|n| n.refractory_remaining > 0)
}

fn resonate_one(network: &Network, seed: NeuronId, config: &ResonanceConfig) -> ResonanceReport {
    let mut report = ResonanceReport::empty(network.snapshot_hash());
    let mut depth: BTreeMap<NeuronId, u32> = BTreeMap::from([(seed, 0)]);
    let mut queue = VecDeque::from([seed]);
    let mut reached = BTreeSet::new();
    while let Some(u) = queue.pop_front() {
        if is_reflector(network, u, config) {
            reached.insert(u);
            continue;
        }
        let d = depth[&u];
        if d >= config.max_depth {
            continue;
        }
        let mut out: Vec<SynapseId> = network.outgoing(u).to_vec();
        out.sort_by_key(|s| network.synapse(*s).map(|syn| syn.post).ok());
        for s in out {
            let syn = network.synapse(s).expect("outgoing synapse exists");
            if !syn.is_open() {
                continue;
            }
            *report.forward_visits.entry(s).or_insert(0) += 1;
            report.endpoints.insert(s, (syn.pre, syn.post));
            if let std::collections::btree_map::Entry::Vacant(e) = depth.entry(syn.post) {
                e.insert(d + 1);
                queue.push_back(syn.post);
            }
        }
    }

    let mut incoming: BTreeMap<NeuronId, Vec<SynapseId>> = BTreeMap::new();
    for &s in report.forward_visits.keys() {
        let (_, post) = report.endpoints[&s];
        incoming.entry(post).or_default().push(s);
    }
    for &terminal in &reached {
        let mut seen = BTreeSet::from([terminal]);
        let mut queue = VecDeque::from([terminal]);
        while let Some(v) = queue.pop_front() {
            for &s in incoming.get(&v).map_or(&[][..], Vec::as_slice) {
                *report.backward_visits.entry(s).or_insert(0) += 1;
                let (pre, _) = report.endpoints[&s];
                if seen.insert(pre) {
                    queue.push_back(pre);
                }
            }
        }
    }
    report.terminals_hit = reached;
    report.finish();
    report
}

/// Edge-wise sum of two reports over the same snapshot.
pub fn combine_searches(a: &ResonanceReport, b: &ResonanceReport) -> Result<ResonanceReport> {
    if a.snapshot != b.snapshot {
        return Err(Error::InvalidCombination {
            left: a.snapshot.clone(),
            right: b.snapshot.clone(),
        });
    }
    let mut out = a.clone();
    for (s, v) in &b.forward_visits {
        *out.forward_visits.entry(*s).or_insert(0) += v;
    }
    for (s, v) in &b.backward_visits {
        *out.backward_visits.entry(*s).or_insert(0) += v;
    }
    out.endpoints
        .extend(b.endpoints.iter().map(|(k, v)| (*k, *v)));
    out.terminals_hit.extend(b.terminals_hit.iter().copied());
    out.finish();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn chain(n: u32) -> Network {
        let mut net = Network::new(0);
        for _ in 0..n {
            net.add_neuron(1.0).unwrap();
        }
        for i in 1..n {
            net.add_synapse(NeuronId(i - 1), NeuronId(i), 1.0, 1)
                .unwrap();
        }
        net
    }

    fn seeds(ids: &[u32]) -> BTreeSet<NeuronId> {
        ids.iter().map(|&i| NeuronId(i)).collect()
    }

    #[test]
    fn terminals() {
        assert_eq!(find_terminals(&chain(3)), seeds(&[2]));
        let mut cyc = chain(2);
        cyc.add_synapse(NeuronId(1), NeuronId(0), 1.0, 1).unwrap();
        assert!(find_terminals(&cyc).is_empty());
        let mut closed = chain(2);
        closed.set_open_fraction(SynapseId(0), 0.0).unwrap();
        assert_eq!(find_terminals(&closed), seeds(&[0, 1]));
    }

    #[test]
    fn chain_reflects_fully() {
        let net = chain(3);
        let r = resonate(&net, &seeds(&[0]), &ResonanceConfig::default()).unwrap();
        assert_eq!(r.resonance_of(SynapseId(0)), 1);
        assert_eq!(r.resonance_of(SynapseId(1)), 1);
        assert_eq!(r.recognized_path.len(), 2);
        assert_eq!(r.terminals_hit, seeds(&[2]));
    }

    #[test]
    fn cyclic_branch_does_not_reflect() {
        // 0 -> 1 -> 2 (terminal); 0 -> 3 <-> 4
        let mut net = chain(3);
        let a = net.add_neuron(1.0).unwrap();
        let b = net.add_neuron(1.0).unwrap();
        let s03 = net.add_synapse(NeuronId(0), a, 1.0, 1).unwrap();
        let s34 = net.add_synapse(a, b, 1.0, 1).unwrap();
        let s43 = net.add_synapse(b, a, 1.0, 1).unwrap();
        let r = resonate(&net, &seeds(&[0]), &ResonanceConfig::default()).unwrap();
        for s in [s03, s34, s43] {
            assert!(r.forward(s) > 0);
            assert_eq!(r.backward(s), 0);
            assert!(!r.recognized_path.contains(&s));
        }
        assert!(r.recognized_path.contains(&SynapseId(1)));
    }

    #[test]
    fn shared_channel_resonates_twice() {
        // 0 -> 2, 1 -> 2, 2 -> 3 -> 4
        let mut net = Network::new(0);
        for _ in 0..5 {
            net.add_neuron(1.0).unwrap();
        }
        net.add_synapse(NeuronId(0), NeuronId(2), 1.0, 1).unwrap();
        net.add_synapse(NeuronId(1), NeuronId(2), 1.0, 1).unwrap();
        let shared = net.add_synapse(NeuronId(2), NeuronId(3), 1.0, 1).unwrap();
        net.add_synapse(NeuronId(3), NeuronId(4), 1.0, 1).unwrap();
        let cfg = ResonanceConfig::default();
        let joint = resonate(&net, &seeds(&[0, 1]), &cfg).unwrap();
        let a = resonate(&net, &seeds(&[0]), &cfg).unwrap();
        let b = resonate(&net, &seeds(&[1]), &cfg).unwrap();
        assert!(joint.resonance_of(shared) >= 2);
        assert_eq!(
            joint.resonance_of(shared),
            a.resonance_of(shared) + b.resonance_of(shared)
        );
        assert!(joint.resonance_of(shared) > a.resonance_of(shared));
        assert_eq!(combine_searches(&a, &b).unwrap(), joint);
    }

    #[test]
    fn combine_identity_and_mismatch() {
        let net = chain(4);
        let r = resonate(&net, &seeds(&[1]), &ResonanceConfig::default()).unwrap();
        let e = ResonanceReport::empty(net.snapshot_hash());
        assert_eq!(combine_searches(&r, &e).unwrap(), r);
        let other = resonate(&chain(5), &seeds(&[0]), &ResonanceConfig::default()).unwrap();
        assert!(matches!(
            combine_searches(&r, &other),
            Err(Error::InvalidCombination { .. })
        ));
    }

    #[test]
    fn depth_limit_and_bad_seeds() {
        let net = chain(6);
        let cfg = ResonanceConfig {
            max_depth: 2,
            ..ResonanceConfig::default()
        };
        let r = resonate(&net, &seeds(&[0]), &cfg).unwrap();
        assert!(r.terminals_hit.is_empty());
        assert!(r.recognized_path.is_empty());
        assert!(matches!(
            resonate(&net, &seeds(&[9]), &cfg),
            Err(Error::NotFound(_))
        ));
        assert!(resonate(&net, &BTreeSet::new(), &cfg).is_err());
    }

    #[test]
    fn refractory_neurons_reflect_when_enabled() {
        let mut net = chain(4);
        // fire neuron 1 so it is refractory
        net.step(&seeds(&[0])).unwrap();
        assert!(net.neuron(NeuronId(1)).unwrap().refractory_remaining > 0);
        let cfg = ResonanceConfig {
            reflect_blocked: true,
            ..ResonanceConfig::default()
        };
        let r = resonate(&net, &seeds(&[0]), &cfg).unwrap();
        assert_eq!(r.terminals_hit, seeds(&[1]));
        assert_eq!(r.recognized_path, [SynapseId(0)].into());
    }

    #[test]
    fn csv_and_json() {
        let r = resonate(&chain(3), &seeds(&[0]), &ResonanceConfig::default()).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "synapse,pre,post,forward,backward,resonance\n0,0,1,1,1,1\n1,1,2,1,1,1\n"
        );
        assert!(r.to_json().unwrap().contains("\"recognized_path\""));
    }

    fn random_net() -> impl Strategy<Value = Network> {
        (3u32..10, prop::collection::vec((0u32..10, 0u32..10), 0..25)).prop_map(|(n, edges)| {
            let mut net = Network::new(0);
            for _ in 0..n {
                net.add_neuron(1.0).unwrap();
            }
            for (a, b) in edges {
                let _ = net.add_synapse(NeuronId(a % n), NeuronId(b % n), 1.0, 1);
            }
            net
        })
    }

    proptest! {
        #[test]
        fn reflection_and_monotonicity(net in random_net(), picks in prop::collection::btree_set(0u32..10, 1..4), extra in 0u32..10) {
            let n = net.neuron_count() as u32;
            let seeds: BTreeSet<NeuronId> = picks.iter().map(|p| NeuronId(p % n)).collect();
            let cfg = ResonanceConfig::default();
            let r = resonate(&net, &seeds, &cfg).unwrap();
            for (s, &b) in &r.backward_visits {
                prop_assert!(b == 0 || r.forward(*s) > 0);
            }
            for (s, &res) in &r.resonance {
                prop_assert!(res <= r.forward(*s).min(r.backward(*s)));
            }
            let mut more = seeds.clone();
            more.insert(NeuronId(extra % n));
            let r2 = resonate(&net, &more, &cfg).unwrap();
            if more.len() > seeds.len() {
                for (s, &res) in &r.resonance {
                    prop_assert!(r2.resonance_of(*s) >= res);
                }
            }
        }

        #[test]
        fn combine_commutes_and_associates(net in random_net(), a in 0u32..10, b in 0u32..10, c in 0u32..10) {
            let n = net.neuron_count() as u32;
            let cfg = ResonanceConfig::default();
            let run = |i: u32| resonate(&net, &[NeuronId(i % n)].into(), &cfg).unwrap();
            let (ra, rb, rc) = (run(a), run(b), run(c));
            prop_assert_eq!(combine_searches(&ra, &rb).unwrap(), combine_searches(&rb, &ra).unwrap());
            let left = combine_searches(&combine_searches(&ra, &rb).unwrap(), &rc).unwrap();
            let right = combine_searches(&ra, &combine_searches(&rb, &rc).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }
    }
}
