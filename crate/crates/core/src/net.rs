//! The binary threshold-neuron graph and its synchronous firing engine.
//!
//! Every neuron emits exactly 1 when its summed input reaches its threshold
//! and 0 otherwise. Signals travel one synapse per tick: a neuron that fires
//! at tick `t` contributes to its targets' input sums at tick `t + 1`.
//! Externally driven neurons contribute in the same tick they are driven.
//! Analogue behaviour comes only from a synapse's open fraction and its
//! multiplicity (the number of parallel unit inputs it stands for).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::feedback;

/// Absolute tolerance used when comparing input sums against thresholds.
pub const FIRING_TOLERANCE: f64 = 1e-9;

/// Default number of ticks a neuron stays silent after firing.
pub const DEFAULT_REFRACTORY_PERIOD: u32 = 1;

/// Number of [`FiringRecord`]s kept for windowed queries such as balance detection.
pub const DEFAULT_HISTORY_LIMIT: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeuronId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SynapseId(pub u32);

impl NeuronId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl SynapseId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for SynapseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Stepwise activation: `true` iff `input_sum` reaches `threshold`.
pub fn fires(threshold: f64, input_sum: f64) -> Result<bool> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::invalid(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    Ok(input_sum >= threshold - FIRING_TOLERANCE)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neuron {
    pub id: NeuronId,
    pub threshold: f64,
    pub refractory_remaining: u32,
    pub last_fired: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synapse {
    pub id: SynapseId,
    pub pre: NeuronId,
    pub post: NeuronId,
    pub open_fraction: f64,
    pub distance: u32,
    /// Parallel unit inputs represented by this edge (weight expansion).
    pub multiplicity: u32,
}

impl Synapse {
    /// Signal delivered to `post` when `pre` fires.
    #[inline]
    pub fn delivery(&self) -> f64 {
        self.open_fraction * f64::from(self.multiplicity)
    }

    #[inline]
    pub fn is_open(&self) -> bool {
        self.open_fraction > 0.0
    }
}

/// Outcome of a single tick.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FiringRecord {
    pub tick: u64,
    /// Sources whose output reached their targets this tick: neurons that
    /// fired last tick plus the externally driven ones.
    pub active: BTreeSet<NeuronId>,
    pub fired: BTreeSet<NeuronId>,
    /// Neurons that were refractory this tick and blocked their input.
    pub blocked: BTreeSet<NeuronId>,
    /// Total input per neuron; neurons that received nothing are omitted.
    pub input_sums: BTreeMap<NeuronId, f64>,
    /// Average excess per input synapse for every fired neuron with at least one open input.
    pub rejections: BTreeMap<NeuronId, f64>,
}

impl FiringRecord {
    pub fn input_sum(&self, id: NeuronId) -> f64 {
        self.input_sums.get(&id).copied().unwrap_or(0.0)
    }

    pub fn max_excess(&self) -> f64 {
        self.rejections.values().copied().fold(0.0, f64::max)
    }

    pub fn total_excess(&self) -> f64 {
        // empty f64 sums are -0.0
        self.rejections.values().fold(0.0, |a, b| a + b)
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    neurons: Vec<Neuron>,
    synapses: Vec<Synapse>,
    edges: BTreeMap<(NeuronId, NeuronId), SynapseId>,
    incoming: Vec<Vec<SynapseId>>,
    outgoing: Vec<Vec<SynapseId>>,
    tick: u64,
    rng_seed: u64,
    refractory_period: u32,
    fired_last: BTreeSet<NeuronId>,
    history: VecDeque<FiringRecord>,
    history_limit: usize,
}

impl Default for Network {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Network {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            neurons: Vec::new(),
            synapses: Vec::new(),
            edges: BTreeMap::new(),
            incoming: Vec::new(),
            outgoing: Vec::new(),
            tick: 0,
            rng_seed,
            refractory_period: DEFAULT_REFRACTORY_PERIOD,
            fired_last: BTreeSet::new(),
            history: VecDeque::new(),
            history_limit: DEFAULT_HISTORY_LIMIT,
        }
    }

    pub fn with_refractory_period(mut self, ticks: u32) -> Self {
        self.refractory_period = ticks;
        self
    }

    pub fn set_history_limit(&mut self, limit: usize) {
        self.history_limit = limit.max(1);
        while self.history.len() > self.history_limit {
            self.history.pop_front();
        }
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn refractory_period(&self) -> u32 {
        self.refractory_period
    }

    pub fn neuron_count(&self) -> usize {
        self.neurons.len()
    }

    pub fn synapse_count(&self) -> usize {
        self.synapses.len()
    }

    pub fn neurons(&self) -> impl ExactSizeIterator<Item = &Neuron> {
        self.neurons.iter()
    }

    pub fn synapses(&self) -> impl ExactSizeIterator<Item = &Synapse> {
        self.synapses.iter()
    }

    pub fn neuron(&self, id: NeuronId) -> Result<&Neuron> {
        self.neurons
            .get(id.index())
            .ok_or_else(|| Error::NotFound(format!("neuron {id}")))
    }

    pub fn synapse(&self, id: SynapseId) -> Result<&Synapse> {
        self.synapses
            .get(id.index())
            .ok_or_else(|| Error::NotFound(format!("synapse {id}")))
    }

    pub fn synapse_between(&self, pre: NeuronId, post: NeuronId) -> Option<&Synapse> {
        self.edges
            .get(&(pre, post))
            .map(|s| &self.synapses[s.index()])
    }

    pub fn incoming(&self, id: NeuronId) -> &[SynapseId] {
        self.incoming.get(id.index()).map_or(&[], Vec::as_slice)
    }

    pub fn outgoing(&self, id: NeuronId) -> &[SynapseId] {
        self.outgoing.get(id.index()).map_or(&[], Vec::as_slice)
    }

    /// Number of unit inputs arriving through open synapses (N in the excess formula).
    pub fn open_input_count(&self, id: NeuronId) -> u32 {
        self.incoming(id)
            .iter()
            .map(|s| &self.synapses[s.index()])
            .filter(|s| s.is_open())
            .map(|s| s.multiplicity)
            .sum()
    }

    pub fn contains(&self, id: NeuronId) -> bool {
        id.index() < self.neurons.len()
    }

    pub fn history(&self) -> &VecDeque<FiringRecord> {
        &self.history
    }

    pub fn last_record(&self) -> Option<&FiringRecord> {
        self.history.back()
    }

    pub fn add_neuron(&mut self, threshold: f64) -> Result<NeuronId> {
        if !(threshold > 0.0) || !threshold.is_finite() {
            return Err(Error::invalid(format!(
                "threshold must be positive, got {threshold}"
            )));
        }
        let id = NeuronId(self.neurons.len() as u32);
        self.neurons.push(Neuron {
            id,
            threshold,
            refractory_remaining: 0,
            last_fired: None,
        });
        self.incoming.push(Vec::new());
        self.outgoing.push(Vec::new());
        Ok(id)
    }

    pub fn add_synapse(
        &mut self,
        pre: NeuronId,
        post: NeuronId,
        open_fraction: f64,
        distance: u32,
    ) -> Result<SynapseId> {
        self.add_synapse_with_multiplicity(pre, post, open_fraction, distance, 1)
    }

    pub fn add_synapse_with_multiplicity(
        &mut self,
        pre: NeuronId,
        post: NeuronId,
        open_fraction: f64,
        distance: u32,
        multiplicity: u32,
    ) -> Result<SynapseId> {
        self.neuron(pre)?;
        self.neuron(post)?;
        if pre == post {
            return Err(Error::invalid(format!("self-loop on {pre}")));
        }
        check_fraction(open_fraction)?;
        if distance < 1 {
            return Err(Error::invalid("synapse distance must be at least 1"));
        }
        if multiplicity < 1 {
            return Err(Error::invalid("synapse multiplicity must be at least 1"));
        }
        if self.edges.contains_key(&(pre, post)) {
            return Err(Error::DuplicateEdge { pre, post });
        }
        let id = SynapseId(self.synapses.len() as u32);
        self.synapses.push(Synapse {
            id,
            pre,
            post,
            open_fraction,
            distance,
            multiplicity,
        });
        self.edges.insert((pre, post), id);
        self.incoming[post.index()].push(id);
        self.outgoing[pre.index()].push(id);
        Ok(id)
    }

    pub fn set_open_fraction(&mut self, id: SynapseId, open_fraction: f64) -> Result<()> {
        check_fraction(open_fraction)?;
        let syn = self
            .synapses
            .get_mut(id.index())
            .ok_or_else(|| Error::NotFound(format!("synapse {id}")))?;
        syn.open_fraction = open_fraction;
        Ok(())
    }

    pub fn set_multiplicity(&mut self, id: SynapseId, multiplicity: u32) -> Result<()> {
        if multiplicity < 1 {
            return Err(Error::invalid("synapse multiplicity must be at least 1"));
        }
        let syn = self
            .synapses
            .get_mut(id.index())
            .ok_or_else(|| Error::NotFound(format!("synapse {id}")))?;
        syn.multiplicity = multiplicity;
        Ok(())
    }

    /// Clears dynamic state (tick, refractory counters, history) but keeps the structure.
    pub fn reset_state(&mut self) {
        self.tick = 0;
        self.fired_last.clear();
        self.history.clear();
        for n in &mut self.neurons {
            n.refractory_remaining = 0;
            n.last_fired = None;
        }
    }

    /// Advances the network by one synchronous tick.
    pub fn step(&mut self, external_inputs: &BTreeSet<NeuronId>) -> Result<FiringRecord> {
        if let Some(bad) = external_inputs.iter().find(|id| !self.contains(**id)) {
            return Err(Error::NotFound(format!("external input {bad}")));
        }
        let active: BTreeSet<NeuronId> = self.fired_last.union(external_inputs).copied().collect();

        let mut input_sums: BTreeMap<NeuronId, f64> = BTreeMap::new();
        for syn in &self.synapses {
            if syn.is_open() && active.contains(&syn.pre) {
                *input_sums.entry(syn.post).or_insert(0.0) += syn.delivery();
            }
        }

        let mut fired = BTreeSet::new();
        let mut blocked = BTreeSet::new();
        for neuron in &mut self.neurons {
            if neuron.refractory_remaining > 0 {
                neuron.refractory_remaining -= 1;
                blocked.insert(neuron.id);
                continue;
            }
            let sum = input_sums.get(&neuron.id).copied().unwrap_or(0.0);
            if sum >= neuron.threshold - FIRING_TOLERANCE {
                fired.insert(neuron.id);
            }
        }

        let mut rejections = BTreeMap::new();
        for &id in &fired {
            let n = self.open_input_count(id);
            if n >= 1 {
                let neuron = &self.neurons[id.index()];
                let excess = feedback::average_excess(input_sums[&id], neuron.threshold, n)?;
                rejections.insert(id, excess);
            }
            let neuron = &mut self.neurons[id.index()];
            neuron.refractory_remaining = self.refractory_period;
            neuron.last_fired = Some(self.tick);
        }

        let record = FiringRecord {
            tick: self.tick,
            active,
            fired: fired.clone(),
            blocked,
            input_sums,
            rejections,
        };
        self.fired_last = fired;
        self.tick += 1;
        if self.history.len() == self.history_limit {
            self.history.pop_front();
        }
        self.history.push_back(record.clone());
        Ok(record)
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            neurons: self
                .neurons
                .iter()
                .map(|n| NeuronDoc {
                    id: n.id,
                    threshold: n.threshold,
                    refractory: n.refractory_remaining,
                })
                .collect(),
            synapses: self
                .synapses
                .iter()
                .map(|s| SynapseDoc {
                    pre: s.pre,
                    post: s.post,
                    open_fraction: s.open_fraction,
                    distance: s.distance,
                    multiplicity: s.multiplicity,
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Self> {
        let mut net = Network::new(0);
        for (i, n) in doc.neurons.iter().enumerate() {
            if n.id.index() != i {
                return Err(Error::Parse(format!(
                    "neuron ids must be dense and ascending; found {} at position {i}",
                    n.id
                )));
            }
            net.add_neuron(n.threshold)?;
            net.neurons[i].refractory_remaining = n.refractory;
        }
        for s in &doc.synapses {
            net.add_synapse_with_multiplicity(
                s.pre,
                s.post,
                s.open_fraction,
                s.distance,
                s.multiplicity,
            )?;
        }
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetworkDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }

    /// Content hash of the serialized structure, used to tie reports to a snapshot.
    pub fn snapshot_hash(&self) -> String {
        let json = serde_json::to_string(&self.to_document()).expect("network document serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::invalid(format!("open fraction {f} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub neurons: Vec<NeuronDoc>,
    pub synapses: Vec<SynapseDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronDoc {
    pub id: NeuronId,
    pub threshold: f64,
    pub refractory: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynapseDoc {
    pub pre: NeuronId,
    pub post: NeuronId,
    pub open_fraction: f64,
    pub distance: u32,
    pub multiplicity: u32,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[u32]) -> BTreeSet<NeuronId> {
        ids.iter().map(|&i| NeuronId(i)).collect()
    }

    #[test]
    fn stepwise_activation() {
        assert!(fires(4.0, 4.0).unwrap());
        assert!(!fires(4.0, 3.0).unwrap());
        assert!(!fires(1.0, 0.0).unwrap());
        assert!(matches!(fires(0.0, 1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(fires(-2.0, 1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn empty_network_step() {
        let mut net = Network::new(7);
        let rec = net.step(&BTreeSet::new()).unwrap();
        assert!(rec.fired.is_empty());
        assert_eq!(net.tick(), 1);
    }

    #[test]
    fn five_inputs_drive_threshold_four() {
        let mut net = Network::new(0);
        let main = net.add_neuron(4.0).unwrap();
        let inputs: Vec<_> = (0..5).map(|_| net.add_neuron(1.0).unwrap()).collect();
        for &i in &inputs {
            net.add_synapse(i, main, 1.0, 1).unwrap();
        }
        let rec = net.step(&inputs.iter().copied().collect()).unwrap();
        assert!(rec.fired.contains(&main));
        assert_eq!(rec.input_sum(main), 5.0);
    }

    #[test]
    fn refractory_blocks_next_tick() {
        let mut net = Network::new(0);
        let a = net.add_neuron(1.0).unwrap();
        let b = net.add_neuron(1.0).unwrap();
        net.add_synapse(a, b, 1.0, 1).unwrap();
        let drive = set(&[0]);
        assert!(net.step(&drive).unwrap().fired.contains(&b));
        let second = net.step(&drive).unwrap();
        assert!(!second.fired.contains(&b));
        assert!(second.blocked.contains(&b));
        assert!(net.step(&drive).unwrap().fired.contains(&b));
    }

    #[test]
    fn ids_are_dense_and_duplicates_rejected() {
        let mut net = Network::new(0);
        assert_eq!(net.add_neuron(4.0).unwrap(), NeuronId(0));
        let b = net.add_neuron(1.0).unwrap();
        net.add_synapse(NeuronId(0), b, 1.0, 1).unwrap();
        assert!(matches!(
            net.add_synapse(NeuronId(0), b, 1.0, 1),
            Err(Error::DuplicateEdge { .. })
        ));
        assert!(matches!(
            net.add_synapse(b, b, 1.0, 1),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            net.add_synapse(b, NeuronId(0), 1.5, 1),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            net.add_synapse(b, NeuronId(0), 1.0, 0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            net.add_synapse(b, NeuronId(9), 1.0, 1),
            Err(Error::NotFound(_))
        ));
        assert!(matches!(
            net.add_neuron(0.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn half_open_synapse_delivers_half() {
        let mut net = Network::new(0);
        let a = net.add_neuron(1.0).unwrap();
        let b = net.add_neuron(0.25).unwrap();
        net.add_synapse(a, b, 0.5, 3).unwrap();
        let rec = net.step(&set(&[0])).unwrap();
        assert_eq!(rec.input_sum(b), 0.5);
    }

    #[test]
    fn signal_takes_one_tick_per_hop() {
        let mut net = Network::new(0);
        let a = net.add_neuron(1.0).unwrap();
        let b = net.add_neuron(1.0).unwrap();
        let c = net.add_neuron(1.0).unwrap();
        net.add_synapse(a, b, 1.0, 1).unwrap();
        net.add_synapse(b, c, 1.0, 1).unwrap();
        let r0 = net.step(&set(&[0])).unwrap();
        assert_eq!(r0.fired, set(&[1]));
        let r1 = net.step(&BTreeSet::new()).unwrap();
        assert_eq!(r1.fired, set(&[2]));
    }

    #[test]
    fn unknown_external_input() {
        let mut net = Network::new(0);
        net.add_neuron(1.0).unwrap();
        assert!(matches!(net.step(&set(&[3])), Err(Error::NotFound(_))));
    }

    #[test]
    fn excess_recorded_for_fired_neurons() {
        let mut net = Network::new(0);
        let main = net.add_neuron(5.0).unwrap();
        let inputs: Vec<_> = (0..10).map(|_| net.add_neuron(1.0).unwrap()).collect();
        for &i in &inputs {
            net.add_synapse(i, main, 1.0, 1).unwrap();
        }
        let rec = net.step(&inputs.iter().copied().collect()).unwrap();
        assert_eq!(rec.rejections[&main], 0.5);
    }

    #[test]
    fn json_is_stable() {
        let mut net = Network::new(0);
        let a = net.add_neuron(4.0).unwrap();
        let b = net.add_neuron(0.1).unwrap();
        net.add_synapse_with_multiplicity(b, a, 0.3, 2, 3).unwrap();
        let text = net.to_json().unwrap();
        assert!(text.find("\"neurons\"").unwrap() < text.find("\"synapses\"").unwrap());
        let again = Network::from_json(&text).unwrap().to_json().unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn json_rejects_sparse_ids() {
        let text = r#"{"neurons":[{"id":1,"threshold":1.0,"refractory":0}],"synapses":[]}"#;
        assert!(matches!(Network::from_json(text), Err(Error::Parse(_))));
    }
}
