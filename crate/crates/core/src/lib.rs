//! Binary threshold-neuron networks and the structures built on top of them.
//!
//! The crate is organised bottom-up:
//!
//! - [`net`]: the neuron graph and its synchronous firing engine.
//! - [`refined`]: intermediary layers that give binary units fractional input weights.
//! - [`feedback`]: excess-input and backward-repulsion arithmetic, balance detection.
//! - [`growth`]: turbulence accumulation and intermediary-neuron formation.
//! - [`concept_forest`]: counted concept trees with base splitting and linked search.
//! - [`symbolic_cluster`]: time-based event clustering into hidden and global concepts.
//! - [`resonance`]: forward/backward traversal marking the recognised search path.
//! - [`harness`]: scenarios, sweeps, metrics output and the built-in verification suite.

// `!(x >= 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concept_forest;
pub mod error;
pub mod feedback;
pub mod growth;
pub mod harness;
pub mod net;
pub mod refined;
pub mod resonance;
pub mod symbolic_cluster;

pub use concept_forest::{ConceptForest, DynamicLink, SearchPath};
pub use error::{Error, Result};
pub use feedback::{average_excess, is_balanced, repulsion_at, resistance_profile, total_input};
pub use growth::{ConvergenceReport, Growth, GrowthConfig, GrowthEvent, GrowthEventKind};
pub use net::{fires, FiringRecord, Network, Neuron, NeuronId, Synapse, SynapseId};
pub use refined::{build_refined, min_firing_set_size, RefinedSpec, RefinedUnit};
pub use resonance::{ResonanceConfig, ResonanceReport};
pub use symbolic_cluster::ClusterNet;
