//! Workload builders shared by the benchmarks.

use std::collections::BTreeSet;

use renforge_core::{ConceptForest, Network, NeuronId};

/// `inputs` unit sources wired into one main neuron.
pub fn direct_unit(inputs: u32, threshold: f64) -> (Network, BTreeSet<NeuronId>) {
    let mut net = Network::new(0);
    let main = net.add_neuron(threshold).expect("valid threshold");
    let sources: BTreeSet<_> = (0..inputs)
        .map(|_| net.add_neuron(1.0).expect("valid threshold"))
        .collect();
    for &s in &sources {
        net.add_synapse(s, main, 1.0, 1).expect("fresh edge");
    }
    (net, sources)
}

/// Deterministic word sequences over a small vocabulary.
pub fn corpus(lines: usize) -> Vec<Vec<String>> {
    const WORDS: [&str; 8] = [
        "black", "cat", "sat", "mat", "drank", "milk", "white", "dog",
    ];
    (0..lines)
        .map(|i| {
            let len = 2 + i % 3;
            (0..len)
                .map(|j| WORDS[(i * 7 + j * 3) % WORDS.len()].to_owned())
                .collect()
        })
        .collect()
}

pub fn forest(lines: usize) -> ConceptForest {
    let mut f = ConceptForest::new();
    for seq in corpus(lines) {
        f.insert_sequence(&seq).expect("non-empty sequence");
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workloads_build() {
        let (net, sources) = direct_unit(10, 5.0);
        assert_eq!(net.neuron_count(), 11);
        assert_eq!(sources.len(), 10);
        assert!(forest(50).count_rule_holds());
    }
}
