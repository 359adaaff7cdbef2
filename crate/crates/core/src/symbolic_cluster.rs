//! Time-based symbolic clustering.
//!
//! Concepts presented together form one hidden node. Hidden nodes are never
//! merged; only an identical presentation reinforces one. Hidden nodes that
//! share any base concept are grouped, transitively, under a global concept,
//! which is queried in reverse to get its member feature sets back.
//!
//! In fuzzy mode a presentation also reinforces every existing hidden node
//! nested inside it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ConceptSet = BTreeSet<String>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenNode {
    pub id: u32,
    pub inputs: ConceptSet,
    pub weight: f64,
    pub created_at: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalConcept {
    pub id: usize,
    pub members: BTreeSet<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventReport {
    pub event: u64,
    pub created: Option<u32>,
    pub reinforced: Vec<u32>,
    /// Hidden nodes whose weight decayed to zero and were removed.
    pub died: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterNet {
    base_concepts: ConceptSet,
    hidden_nodes: Vec<HiddenNode>,
    global_concepts: Vec<GlobalConcept>,
    decay: f64,
    events: u64,
    next_id: u32,
}

impl ClusterNet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Net whose unreinforced hidden nodes lose `decay` weight per event.
    pub fn with_decay(decay: f64) -> Result<Self> {
        if !(decay >= 0.0) || !decay.is_finite() {
            return Err(Error::invalid(format!(
                "decay must be non-negative, got {decay}"
            )));
        }
        Ok(Self {
            decay,
            ..Self::default()
        })
    }

    pub fn base_concepts(&self) -> &ConceptSet {
        &self.base_concepts
    }

    pub fn hidden_nodes(&self) -> &[HiddenNode] {
        &self.hidden_nodes
    }

    pub fn global_concepts(&self) -> &[GlobalConcept] {
        &self.global_concepts
    }

    pub fn hidden(&self, id: u32) -> Option<&HiddenNode> {
        self.hidden_nodes.iter().find(|h| h.id == id)
    }

    pub fn global_of(&self, hidden: u32) -> Option<usize> {
        self.global_concepts
            .iter()
            .find(|g| g.members.contains(&hidden))
            .map(|g| g.id)
    }

    pub fn present_event<I, S>(&mut self, concepts: I, fuzzy: bool) -> Result<EventReport>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: ConceptSet = concepts.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(Error::invalid("an event needs at least one concept"));
        }
        let event = self.events;
        self.events += 1;
        self.base_concepts.extend(set.iter().cloned());

        let mut report = EventReport {
            event,
            ..EventReport::default()
        };
        let mut touched = BTreeSet::new();
        for h in &mut self.hidden_nodes {
            let exact = h.inputs == set;
            let nested = fuzzy && h.inputs.is_subset(&set);
            if exact || nested {
                h.weight += 1.0;
                report.reinforced.push(h.id);
                touched.insert(h.id);
            }
        }
        if !self.hidden_nodes.iter().any(|h| h.inputs == set) {
            let id = self.next_id;
            self.next_id += 1;
            self.hidden_nodes.push(HiddenNode {
                id,
                inputs: set,
                weight: 1.0,
                created_at: event,
            });
            report.created = Some(id);
            touched.insert(id);
        }

        if self.decay > 0.0 {
            for h in &mut self.hidden_nodes {
                if !touched.contains(&h.id) {
                    h.weight = (h.weight - self.decay).max(0.0);
                    if h.weight == 0.0 {
                        report.died.push(h.id);
                    }
                }
            }
            self.hidden_nodes.retain(|h| h.weight > 0.0);
        }
        self.recompute_globals();
        Ok(report)
    }

    /// Member feature sets of a global concept, heaviest first, oldest first on ties.
    pub fn retrieve(&self, global: usize) -> Result<Vec<(ConceptSet, f64)>> {
        let gc = self
            .global_concepts
            .get(global)
            .ok_or_else(|| Error::NotFound(format!("global concept GC{global}")))?;
        let mut members: Vec<&HiddenNode> = self
            .hidden_nodes
            .iter()
            .filter(|h| gc.members.contains(&h.id))
            .collect();
        members.sort_by(|a, b| {
            b.weight
                .total_cmp(&a.weight)
                .then(a.created_at.cmp(&b.created_at))
                .then(a.id.cmp(&b.id))
        });
        Ok(members
            .into_iter()
            .map(|h| (h.inputs.clone(), h.weight))
            .collect())
    }

    /// Removes hidden nodes with weight at or below `threshold`. Base concepts stay.
    pub fn prune(&mut self, threshold: f64) -> Result<Vec<u32>> {
        if !(threshold >= 0.0) {
            return Err(Error::invalid(format!(
                "prune threshold must be non-negative, got {threshold}"
            )));
        }
        let removed: Vec<u32> = self
            .hidden_nodes
            .iter()
            .filter(|h| h.weight <= threshold)
            .map(|h| h.id)
            .collect();
        self.hidden_nodes.retain(|h| h.weight > threshold);
        self.recompute_globals();
        Ok(removed)
    }

    /// Groups hidden nodes by transitive overlap of their input sets. Global ids
    /// follow the creation order of each group's oldest member.
    fn recompute_globals(&mut self) {
        let n = self.hidden_nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, h) in self.hidden_nodes.iter().enumerate() {
            for label in &h.inputs {
                match owner.get(label.as_str()) {
                    Some(&j) => {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                    None => {
                        owner.insert(label, i);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().insert(self.hidden_nodes[i].id);
        }
        // hidden_nodes stays in creation order, so the smallest index is the oldest member
        self.global_concepts = groups
            .into_values()
            .enumerate()
            .map(|(id, members)| GlobalConcept { id, members })
            .collect();
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut net: ClusterNet = serde_json::from_str(text)?;
        net.recompute_globals();
        Ok(net)
    }
}

/// Parses `time<TAB>label,label,...` lines. Times must strictly increase.
pub fn parse_events(text: &str) -> Result<Vec<(u64, ConceptSet)>> {
    let mut out: Vec<(u64, ConceptSet)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (time, labels) = line.split_once('\t').ok_or_else(|| {
            Error::Parse(format!("line {}: expected time<TAB>labels", lineno + 1))
        })?;
        let time: u64 = time
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad time {time:?}", lineno + 1)))?;
        if let Some((prev, _)) = out.last() {
            if time <= *prev {
                return Err(Error::Parse(format!(
                    "line {}: time {time} does not follow {prev}",
                    lineno + 1
                )));
            }
        }
        let set: ConceptSet = labels
            .split(',')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        if set.is_empty() {
            return Err(Error::Parse(format!("line {}: no labels", lineno + 1)));
        }
        out.push((time, set));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn set(labels: &[&str]) -> ConceptSet {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn exact_repeat_reinforces() {
        let mut net = ClusterNet::new();
        net.present_event(["C1", "C2", "C3"], false).unwrap();
        let r = net.present_event(["C3", "C2", "C1", "C1"], false).unwrap();
        assert_eq!(r.created, None);
        assert_eq!(net.hidden_nodes().len(), 1);
        assert_eq!(net.hidden_nodes()[0].weight, 2.0);
        assert!(net.present_event(Vec::<String>::new(), false).is_err());
    }

    #[test]
    fn fuzzy_reinforces_nested_groups_only() {
        let mut net = ClusterNet::new();
        net.present_event(["C2", "C3"], false).unwrap();
        net.present_event(["C1", "C5"], false).unwrap();
        let r = net.present_event(["C1", "C2", "C3"], true).unwrap();
        assert_eq!(r.reinforced, vec![0]);
        assert_eq!(net.hidden(0).unwrap().weight, 2.0);
        assert_eq!(net.hidden(1).unwrap().weight, 1.0);
        assert_eq!(r.created, Some(2));
    }

    #[test]
    fn overlapping_events_share_a_global() {
        let mut net = ClusterNet::new();
        net.present_event(["C0", "C1"], false).unwrap();
        net.present_event(["C1", "C2", "C3"], false).unwrap();
        net.present_event(["C3", "C4"], false).unwrap();
        assert_eq!(net.hidden_nodes().len(), 3);
        assert_eq!(net.global_concepts().len(), 1);
        let sets: Vec<_> = net
            .retrieve(0)
            .unwrap()
            .into_iter()
            .map(|(s, _)| s)
            .collect();
        assert_eq!(
            sets,
            vec![
                set(&["C0", "C1"]),
                set(&["C1", "C2", "C3"]),
                set(&["C3", "C4"])
            ]
        );
        assert!(matches!(net.retrieve(1), Err(Error::NotFound(_))));
    }

    #[test]
    fn singleton_global() {
        let mut net = ClusterNet::new();
        net.present_event(["x"], false).unwrap();
        assert_eq!(net.retrieve(0).unwrap(), vec![(set(&["x"]), 1.0)]);
    }

    #[test]
    fn decayed_node_dies() {
        let mut net = ClusterNet::with_decay(0.5).unwrap();
        net.present_event(["C3", "C4"], false).unwrap();
        let r = net.present_event(["C0", "C1"], false).unwrap();
        assert!(r.died.is_empty());
        assert_eq!(net.hidden(0).unwrap().weight, 0.5);
        let r = net.present_event(["C0", "C1"], false).unwrap();
        assert_eq!(r.died, vec![0]);
        assert!(net.hidden(0).is_none());
        let sets: Vec<_> = net
            .retrieve(0)
            .unwrap()
            .into_iter()
            .map(|(s, _)| s)
            .collect();
        assert_eq!(sets, vec![set(&["C0", "C1"])]);
        assert!(net.base_concepts().contains("C4"));
        assert!(ClusterNet::with_decay(-1.0).is_err());
    }

    #[test]
    fn late_node_dies_and_neighbour_stays() {
        let chain = [&["C0", "C1"][..], &["C1", "C2"], &["C2", "C3"]];
        // pruning route
        let mut net = ClusterNet::new();
        for e in chain.iter().chain(chain.iter()) {
            net.present_event(e.iter().copied(), false).unwrap();
        }
        net.present_event(["C3", "C4"], false).unwrap();
        assert_eq!(net.prune(1.0).unwrap(), vec![3]);
        assert_eq!(net.global_of(2), Some(0));
        assert_eq!(net.retrieve(0).unwrap().len(), 3);
        assert!(net.base_concepts().contains("C4"));

        // decay route
        let mut net = ClusterNet::with_decay(1.0).unwrap();
        net.present_event(["C3", "C4"], false).unwrap();
        let r = net.present_event(["C2", "C3"], false).unwrap();
        assert_eq!(r.died, vec![0]);
        assert_eq!(net.hidden_nodes().len(), 1);
        assert_eq!(net.retrieve(0).unwrap(), vec![(set(&["C2", "C3"]), 1.0)]);
    }

    #[test]
    fn prune_splits_bridged_global() {
        let mut net = ClusterNet::new();
        net.present_event(["a", "b"], false).unwrap();
        net.present_event(["c", "d"], false).unwrap();
        net.present_event(["b", "c"], false).unwrap();
        net.present_event(["a", "b"], false).unwrap();
        net.present_event(["c", "d"], false).unwrap();
        assert_eq!(net.global_concepts().len(), 1);
        assert!(net.prune(0.5).unwrap().is_empty());
        assert_eq!(net.prune(1.0).unwrap(), vec![2]);
        assert_eq!(net.global_concepts().len(), 2);
        assert_eq!(net.base_concepts().len(), 4);
    }

    #[test]
    fn parses_event_files() {
        let events = parse_events("1\tC0,C1\n2\tC1, C2 ,C3\n\n5\tC3\n").unwrap();
        assert_eq!(events.len(), 3);
        assert_eq!(events[1].1, set(&["C1", "C2", "C3"]));
        assert!(parse_events("2\ta\n2\tb\n").is_err());
        assert!(parse_events("x\ta\n").is_err());
        assert!(parse_events("1 a\n").is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut net = ClusterNet::with_decay(0.25).unwrap();
        net.present_event(["a", "b"], false).unwrap();
        net.present_event(["b", "c"], true).unwrap();
        let text = net.to_json().unwrap();
        let back = ClusterNet::from_json(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_json().unwrap(), text);
    }

    /// Brute-force overlap closure: flood fill over the pairwise overlap graph.
    fn closure_oracle(net: &ClusterNet) -> BTreeSet<BTreeSet<u32>> {
        let nodes = net.hidden_nodes();
        let mut seen = vec![false; nodes.len()];
        let mut out = BTreeSet::new();
        for start in 0..nodes.len() {
            if seen[start] {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                comp.insert(nodes[i].id);
                for j in 0..nodes.len() {
                    if !seen[j] && !nodes[i].inputs.is_disjoint(&nodes[j].inputs) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            out.insert(comp);
        }
        out
    }

    fn events() -> impl Strategy<Value = Vec<(BTreeSet<u8>, bool)>> {
        prop::collection::vec(
            (prop::collection::btree_set(0u8..8, 1..4), any::<bool>()),
            1..30,
        )
    }

    proptest! {
        #[test]
        fn globals_partition_by_overlap(evs in events(), decay in prop::sample::select(vec![0.0, 0.3])) {
            let mut net = ClusterNet::with_decay(decay).unwrap();
            for (s, fuzzy) in &evs {
                let before: BTreeMap<u32, f64> = net.hidden_nodes().iter().map(|h| (h.id, h.weight)).collect();
                net.present_event(s.iter().map(|c| format!("c{c}")), *fuzzy).unwrap();
                let groups: BTreeSet<BTreeSet<u32>> =
                    net.global_concepts().iter().map(|g| g.members.clone()).collect();
                prop_assert_eq!(groups, closure_oracle(&net));
                if decay == 0.0 {
                    for h in net.hidden_nodes() {
                        if let Some(w) = before.get(&h.id) {
                            prop_assert!(h.weight >= *w);
                        }
                    }
                }
            }
        }

        #[test]
        fn retrieval_order_is_total(evs in events()) {
            let mut net = ClusterNet::new();
            for (s, fuzzy) in &evs {
                net.present_event(s.iter().map(|c| format!("c{c}")), *fuzzy).unwrap();
            }
            for g in 0..net.global_concepts().len() {
                let got = net.retrieve(g).unwrap();
                prop_assert_eq!(&got, &net.clone().retrieve(g).unwrap());
                prop_assert!(got.windows(2).all(|w| w[0].1 >= w[1].1));
            }
        }
    }
}
