use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::growth::InputSchedule;
use crate::net::NeuronId;

/// Drives the same sources every tick.
#[derive(Clone, Debug)]
pub struct AllFiring(pub BTreeSet<NeuronId>);

impl InputSchedule for AllFiring {
    fn inputs(&mut self, _tick: u64) -> BTreeSet<NeuronId> {
        self.0.clone()
    }
}

/// Each source fires independently with a fixed probability per tick.
#[derive(Clone, Debug)]
pub struct RandomFiring {
    sources: Vec<NeuronId>,
    probability: f64,
    rng: ChaCha8Rng,
}

impl RandomFiring {
    pub fn new(sources: Vec<NeuronId>, probability: f64, seed: u64) -> Self {
        Self {
            sources,
            probability: probability.clamp(0.0, 1.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl InputSchedule for RandomFiring {
    fn inputs(&mut self, _tick: u64) -> BTreeSet<NeuronId> {
        let p = self.probability;
        self.sources
            .iter()
            .copied()
            .filter(|_| self.rng.gen_bool(p))
            .collect()
    }
}

/// Replays a fixed list of input sets, repeating the last one when it runs out.
#[derive(Clone, Debug)]
pub struct Scripted(pub Vec<BTreeSet<NeuronId>>);

impl InputSchedule for Scripted {
    fn inputs(&mut self, tick: u64) -> BTreeSet<NeuronId> {
        let idx = (tick as usize).min(self.0.len().saturating_sub(1));
        self.0.get(idx).cloned().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_schedule_is_seeded() {
        let sources: Vec<_> = (0..20).map(NeuronId).collect();
        let mut a = RandomFiring::new(sources.clone(), 0.5, 9);
        let mut b = RandomFiring::new(sources.clone(), 0.5, 9);
        for t in 0..10 {
            assert_eq!(a.inputs(t), b.inputs(t));
        }
        let mut all = RandomFiring::new(sources.clone(), 1.0, 1);
        assert_eq!(all.inputs(0).len(), 20);
    }

    #[test]
    fn script_holds_last_entry() {
        let mut s = Scripted(vec![[NeuronId(1)].into(), [NeuronId(2)].into()]);
        assert_eq!(s.inputs(0), [NeuronId(1)].into());
        assert_eq!(s.inputs(5), [NeuronId(2)].into());
        assert!(Scripted(vec![]).inputs(0).is_empty());
    }
}
