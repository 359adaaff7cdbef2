//! Self-organising growth driven by rejected input.
//!
//! Each tick, synapses feeding a neuron that fired with too much input collect
//! turbulence (the backward repulsion that reaches them). A synapse whose
//! turbulence passes the bud threshold grows a bud. Buds into the same target
//! whose sources keep firing together join into a new intermediary neuron
//! that needs all of them to fire and delivers a single unit signal to the
//! target. The original paths then close in proportion to how often they were
//! rejected, so a source that also fires on its own keeps a narrowed path.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{self, DEFAULT_BALANCE_EPSILON};
use crate::net::{FiringRecord, Network, NeuronId, SynapseId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntermediaryThreshold {
    /// Every joined source must fire.
    All,
    /// `ceil(f * group size)` sources must fire.
    Fraction(f64),
}

impl IntermediaryThreshold {
    fn for_group(self, size: usize) -> f64 {
        match self {
            IntermediaryThreshold::All => size as f64,
            IntermediaryThreshold::Fraction(f) => (f * size as f64).ceil().max(1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthConfig {
    /// Turbulence a synapse must accumulate before it buds.
    pub bud_threshold: f64,
    /// Sliding window, in ticks, for co-firing and rejection statistics and balance checks.
    pub window: usize,
    /// Minimum co-firing agreement for two buds to join.
    pub agreement: f64,
    /// Multiplier applied to a synapse's turbulence when its signal is accepted.
    pub decay: f64,
    pub balance_epsilon: f64,
    /// Opposing force per segment, per unit of forward delivery on the synapse.
    pub forward_force: f64,
    /// Open fractions below this are closed outright.
    pub closure_cutoff: f64,
    pub intermediary_threshold: IntermediaryThreshold,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self {
            bud_threshold: 3.0,
            window: 8,
            agreement: 0.9,
            decay: 0.5,
            balance_epsilon: DEFAULT_BALANCE_EPSILON,
            forward_force: 0.05,
            closure_cutoff: 0.05,
            intermediary_threshold: IntermediaryThreshold::All,
        }
    }
}

impl GrowthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bud_threshold > 0.0) {
            return Err(Error::invalid("bud threshold must be positive"));
        }
        if self.window == 0 {
            return Err(Error::invalid("growth window must be at least one tick"));
        }
        if !(self.agreement > 0.0 && self.agreement <= 1.0) {
            return Err(Error::invalid("co-firing agreement must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return Err(Error::invalid("decay must lie in [0, 1)"));
        }
        if !(self.forward_force >= 0.0) || !(self.balance_epsilon >= 0.0) {
            return Err(Error::invalid(
                "forward force and balance epsilon must be non-negative",
            ));
        }
        if !(0.0..=1.0).contains(&self.closure_cutoff) {
            return Err(Error::invalid("closure cutoff must lie in [0, 1]"));
        }
        if let IntermediaryThreshold::Fraction(f) = self.intermediary_threshold {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::invalid(
                    "intermediary threshold fraction must lie in (0, 1]",
                ));
            }
        }
        Ok(())
    }
}

/// What happened to one synapse's signal in a tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Silent,
    /// Arrived while the target was refractory.
    Blocked,
    Accepted,
    Rejected,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynapseTurbulence {
    pub accumulator: f64,
    pub budded: bool,
    /// Already absorbed into an intermediary; takes no further part in growth.
    pub joined: bool,
    outcomes: VecDeque<Outcome>,
}

impl SynapseTurbulence {
    /// Ticks in the window where the signal reached a responsive target.
    pub fn fired_count(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, Outcome::Accepted | Outcome::Rejected))
            .count()
    }

    pub fn rejection_count(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| **o == Outcome::Rejected)
            .count()
    }

    pub fn last_outcome(&self) -> Option<Outcome> {
        self.outcomes.back().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurbulenceState {
    window: usize,
    synapses: BTreeMap<SynapseId, SynapseTurbulence>,
    active_history: VecDeque<BTreeSet<NeuronId>>,
}

impl TurbulenceState {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            synapses: BTreeMap::new(),
            active_history: VecDeque::new(),
        }
    }

    pub fn get(&self, id: SynapseId) -> Option<&SynapseTurbulence> {
        self.synapses.get(&id)
    }

    pub fn get_mut(&mut self, id: SynapseId) -> &mut SynapseTurbulence {
        self.synapses.entry(id).or_default()
    }

    pub fn total(&self) -> f64 {
        self.synapses.values().map(|s| s.accumulator).sum()
    }

    /// Record that `sources` were active this tick without touching synapse state.
    pub fn push_active(&mut self, sources: BTreeSet<NeuronId>) {
        self.active_history.push_back(sources);
        while self.active_history.len() > self.window {
            self.active_history.pop_front();
        }
    }

    pub fn push_outcome(&mut self, id: SynapseId, outcome: Outcome) {
        let window = self.window;
        let entry = self.get_mut(id);
        entry.outcomes.push_back(outcome);
        while entry.outcomes.len() > window {
            entry.outcomes.pop_front();
        }
    }

    /// Fraction of window ticks where both sources fired, out of those where either did.
    pub fn co_firing(&self, a: NeuronId, b: NeuronId) -> f64 {
        let (mut both, mut either) = (0usize, 0usize);
        for active in &self.active_history {
            let (x, y) = (active.contains(&a), active.contains(&b));
            both += usize::from(x && y);
            either += usize::from(x || y);
        }
        if either == 0 {
            0.0
        } else {
            both as f64 / either as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthEventKind {
    BudSpawned,
    NeuronsJoined,
    IntermediaryCreated,
    PathClosed,
    PathReduced,
}

impl fmt::Display for GrowthEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthEventKind::BudSpawned => "bud_spawned",
            GrowthEventKind::NeuronsJoined => "neurons_joined",
            GrowthEventKind::IntermediaryCreated => "intermediary_created",
            GrowthEventKind::PathClosed => "path_closed",
            GrowthEventKind::PathReduced => "path_reduced",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthEvent {
    pub kind: GrowthEventKind,
    pub tick: u64,
    pub neurons: Vec<NeuronId>,
    pub synapses: Vec<SynapseId>,
}

impl GrowthEvent {
    fn new(
        kind: GrowthEventKind,
        tick: u64,
        neurons: Vec<NeuronId>,
        synapses: Vec<SynapseId>,
    ) -> Self {
        Self {
            kind,
            tick,
            neurons,
            synapses,
        }
    }

    fn order_key(&self) -> (SynapseId, GrowthEventKind) {
        (
            self.synapses
                .first()
                .copied()
                .unwrap_or(SynapseId(u32::MAX)),
            self.kind,
        )
    }
}

/// Intermediary neurons created so far, keyed by target and sorted source set.
type Registry = BTreeMap<(NeuronId, Vec<NeuronId>), NeuronId>;

#[derive(Clone, Debug)]
pub struct Growth {
    config: GrowthConfig,
    turbulence: TurbulenceState,
    registry: Registry,
    intermediaries: Vec<NeuronId>,
}

impl Growth {
    pub fn new(config: GrowthConfig) -> Result<Self> {
        config.validate()?;
        let turbulence = TurbulenceState::new(config.window);
        Ok(Self {
            config,
            turbulence,
            registry: Registry::new(),
            intermediaries: Vec::new(),
        })
    }

    pub fn config(&self) -> &GrowthConfig {
        &self.config
    }

    pub fn turbulence(&self) -> &TurbulenceState {
        &self.turbulence
    }

    pub fn turbulence_mut(&mut self) -> &mut TurbulenceState {
        &mut self.turbulence
    }

    pub fn intermediaries(&self) -> &[NeuronId] {
        &self.intermediaries
    }

    /// Folds one tick's firing record into the turbulence state.
    pub fn accumulate_turbulence(
        &mut self,
        network: &Network,
        record: &FiringRecord,
    ) -> Result<()> {
        self.turbulence.push_active(record.active.clone());
        for syn in network.synapses() {
            let outcome = if !syn.is_open() || !record.active.contains(&syn.pre) {
                Outcome::Silent
            } else if record.blocked.contains(&syn.post) {
                Outcome::Blocked
            } else {
                match record.rejections.get(&syn.post) {
                    Some(&excess)
                        if record.fired.contains(&syn.post)
                            && excess
                                > self.config.balance_epsilon + crate::net::FIRING_TOLERANCE =>
                    {
                        Outcome::Rejected
                    }
                    _ => Outcome::Accepted,
                }
            };
            let entry = self.turbulence.get_mut(syn.id);
            match outcome {
                Outcome::Rejected => {
                    let excess = record.rejections[&syn.post];
                    let force = self.config.forward_force * syn.delivery();
                    entry.accumulator += feedback::repulsion_at(excess, syn.distance, force)?;
                }
                Outcome::Accepted => entry.accumulator *= self.config.decay,
                Outcome::Silent | Outcome::Blocked => {}
            }
            self.turbulence.push_outcome(syn.id, outcome);
        }
        Ok(())
    }

    /// Buds over-driven synapses and joins co-firing buds into intermediaries.
    pub fn spawn_and_join(&mut self, network: &mut Network, tick: u64) -> Result<Vec<GrowthEvent>> {
        let mut events = Vec::new();
        let mut buds: BTreeMap<NeuronId, Vec<SynapseId>> = BTreeMap::new();
        for syn in network.synapses() {
            let entry = self.turbulence.get_mut(syn.id);
            if entry.joined || !syn.is_open() {
                continue;
            }
            if !entry.budded && entry.accumulator >= self.config.bud_threshold {
                entry.budded = true;
                events.push(GrowthEvent::new(
                    GrowthEventKind::BudSpawned,
                    tick,
                    vec![syn.pre, syn.post],
                    vec![syn.id],
                ));
            }
            if entry.budded {
                buds.entry(syn.post).or_default().push(syn.id);
            }
        }

        for (target, mut pending) in buds {
            while let Some(group) = self.best_group(network, &pending) {
                pending.retain(|s| !group.contains(s));
                let mut sources: Vec<NeuronId> = group
                    .iter()
                    .map(|s| network.synapse(*s).map(|syn| syn.pre))
                    .collect::<Result<_>>()?;
                sources.sort_unstable();
                if self.registry.contains_key(&(target, sources.clone())) {
                    continue;
                }
                events.extend(self.join(network, target, &group, &sources, tick)?);
            }
        }
        events.sort_by_key(GrowthEvent::order_key);
        Ok(events)
    }

    /// Largest set of pending buds whose sources pairwise meet the agreement
    /// level; ties go to the lowest seed synapse. `None` if no group of two exists.
    fn best_group(&self, network: &Network, pending: &[SynapseId]) -> Option<Vec<SynapseId>> {
        let pre = |s: SynapseId| network.synapse(s).map(|syn| syn.pre).ok();
        let mut best: Option<Vec<SynapseId>> = None;
        for &seed in pending {
            let mut group = vec![seed];
            for &other in pending {
                if other == seed {
                    continue;
                }
                let agrees = group.iter().all(|&m| match (pre(m), pre(other)) {
                    (Some(a), Some(b)) => self.turbulence.co_firing(a, b) >= self.config.agreement,
                    _ => false,
                });
                if agrees {
                    group.push(other);
                }
            }
            if group.len() >= 2 && best.as_ref().is_none_or(|b| group.len() > b.len()) {
                group.sort_unstable();
                best = Some(group);
            }
        }
        best
    }

    fn join(
        &mut self,
        network: &mut Network,
        target: NeuronId,
        group: &[SynapseId],
        sources: &[NeuronId],
        tick: u64,
    ) -> Result<Vec<GrowthEvent>> {
        let mut events = vec![GrowthEvent::new(
            GrowthEventKind::NeuronsJoined,
            tick,
            sources.to_vec(),
            group.to_vec(),
        )];
        let threshold = self.config.intermediary_threshold.for_group(group.len());
        let inter = network.add_neuron(threshold)?;
        let mut created = Vec::with_capacity(sources.len() + 1);
        for &src in sources {
            created.push(network.add_synapse(src, inter, 1.0, 1)?);
        }
        created.push(network.add_synapse(inter, target, 1.0, 1)?);
        let mut ids = group.to_vec();
        ids.extend(&created);
        events.push(GrowthEvent::new(
            GrowthEventKind::IntermediaryCreated,
            tick,
            vec![inter, target],
            ids,
        ));
        self.registry.insert((target, sources.to_vec()), inter);
        self.intermediaries.push(inter);

        events.extend(self.close_paths(network, group, tick)?);
        for &s in group {
            let entry = self.turbulence.get_mut(s);
            entry.accumulator = 0.0;
            entry.budded = false;
            entry.joined = true;
        }
        Ok(events)
    }

    /// Narrows each original path by its rejection ratio over the window.
    pub fn close_paths(
        &mut self,
        network: &mut Network,
        group: &[SynapseId],
        tick: u64,
    ) -> Result<Vec<GrowthEvent>> {
        let mut events = Vec::new();
        for &id in group {
            let Some(entry) = self.turbulence.get(id) else {
                continue;
            };
            let fired = entry.fired_count();
            if fired == 0 {
                continue;
            }
            let ratio = entry.rejection_count() as f64 / fired as f64;
            if ratio == 0.0 {
                continue;
            }
            let syn = network.synapse(id)?;
            let narrowed = syn.open_fraction * (1.0 - ratio);
            let (fraction, kind) = if narrowed < self.config.closure_cutoff {
                (0.0, GrowthEventKind::PathClosed)
            } else {
                (narrowed, GrowthEventKind::PathReduced)
            };
            let endpoints = vec![syn.pre, syn.post];
            network.set_open_fraction(id, fraction)?;
            events.push(GrowthEvent::new(kind, tick, endpoints, vec![id]));
        }
        Ok(events)
    }

    /// Accumulates turbulence for `record` and applies any growth it triggers.
    pub fn process(
        &mut self,
        network: &mut Network,
        record: &FiringRecord,
    ) -> Result<Vec<GrowthEvent>> {
        self.accumulate_turbulence(network, record)?;
        self.spawn_and_join(network, record.tick)
    }
}

/// Source of externally driven neurons per tick.
pub trait InputSchedule {
    fn inputs(&mut self, tick: u64) -> BTreeSet<NeuronId>;
}

impl<F> InputSchedule for F
where
    F: FnMut(u64) -> BTreeSet<NeuronId>,
{
    fn inputs(&mut self, tick: u64) -> BTreeSet<NeuronId> {
        self(tick)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    /// Ticks elapsed before the balance check first passed; `None` if it never did.
    pub ticks_to_balance: Option<u64>,
    pub ticks_run: u64,
    pub intermediaries_created: usize,
    /// Largest average excess in the first tick where anything fired.
    pub initial_max_excess: f64,
    /// Largest average excess over the final window.
    pub final_max_excess: f64,
    /// Sum of average excess over neurons firing in the final tick.
    pub final_total_excess: f64,
    pub growth_events: usize,
}

/// Per-tick view handed to observers of [`run_until_balanced_with`].
pub struct TickSummary<'a> {
    pub record: &'a FiringRecord,
    pub events: &'a [GrowthEvent],
    pub turbulence_total: f64,
    pub intermediaries_created: usize,
    pub balanced: bool,
}

pub fn run_until_balanced(
    network: &mut Network,
    schedule: &mut dyn InputSchedule,
    config: &GrowthConfig,
    max_ticks: u64,
) -> Result<ConvergenceReport> {
    run_until_balanced_with(network, schedule, config, max_ticks, |_| {})
}

pub fn run_until_balanced_with(
    network: &mut Network,
    schedule: &mut dyn InputSchedule,
    config: &GrowthConfig,
    max_ticks: u64,
    mut observe: impl FnMut(&TickSummary<'_>),
) -> Result<ConvergenceReport> {
    if max_ticks < 1 {
        return Err(Error::invalid("max_ticks must be at least 1"));
    }
    let mut growth = Growth::new(config.clone())?;
    let start = network.tick();
    let mut initial = None;
    let mut ticks_to_balance = None;
    let mut event_count = 0;
    let mut ran = 0u64;
    for i in 0..max_ticks {
        let drive = schedule.inputs(network.tick());
        let record = network.step(&drive)?;
        if initial.is_none() && !record.rejections.is_empty() {
            initial = Some(record.max_excess());
        }
        let events = growth.process(network, &record)?;
        event_count += events.len();
        let seen = (network.tick() - start) as usize;
        // a full window of quiet history is required
        let balanced = events.is_empty()
            && seen >= config.window
            && feedback::is_balanced(network, config.window, config.balance_epsilon);
        observe(&TickSummary {
            record: &record,
            events: &events,
            turbulence_total: growth.turbulence().total(),
            intermediaries_created: growth.intermediaries().len(),
            balanced,
        });
        ran = i + 1;
        if balanced {
            ticks_to_balance = Some(i);
            break;
        }
    }
    let tail = config.window.min(ran as usize);
    let final_max_excess = network
        .history()
        .iter()
        .rev()
        .take(tail)
        .map(FiringRecord::max_excess)
        .fold(0.0, f64::max);
    Ok(ConvergenceReport {
        ticks_to_balance,
        ticks_run: ran,
        intermediaries_created: growth.intermediaries().len(),
        initial_max_excess: initial.unwrap_or(0.0),
        final_max_excess,
        final_total_excess: network
            .last_record()
            .map_or(0.0, FiringRecord::total_excess),
        growth_events: event_count,
    })
}
