use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::concept_forest::{tokenize, ConceptForest};
use crate::error::{Error, Result};
use crate::growth::{
    run_until_balanced_with, ConvergenceReport, GrowthConfig, GrowthEvent, InputSchedule,
};
use crate::net::{Network, NeuronId, SynapseId};
use crate::refined::{build_refined, effective_weight, min_firing_set_size};
use crate::resonance::{resonate, ResonanceConfig};
use crate::symbolic_cluster::{ClusterNet, ConceptSet};

use super::config::ExperimentConfig;
use super::schedule::{AllFiring, RandomFiring};
use super::{csv_writer, write_file};

pub const SCENARIOS: &[&str] = &[
    "fig2_growth",
    "fig3_cluster",
    "fig4_trees",
    "fig6_stack",
    "convergence",
    "refined_units",
];

/// Four short sentences that force one branch to split off as its own tree.
pub const SPLIT_CORPUS: &str = "black cat sat mat\nblack cat drank milk\ndrank milk\ndrank milk\n";

/// Slightly larger corpus for the full pipeline.
pub const STACK_CORPUS: &str = "black cat sat mat\n\
black cat drank milk\n\
drank milk\n\
drank milk\n\
white dog drank water\n\
black cat chased white dog\n";

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub tick: u64,
    pub fired_count: usize,
    pub total_excess: f64,
    pub max_excess: f64,
    pub turbulence_total: f64,
    pub intermediaries_created: usize,
    pub balanced_flag: u8,
}

#[derive(Serialize)]
struct EventRow {
    tick: u64,
    kind: String,
    neurons: String,
    synapses: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub details: Value,
}

/// Result of the three-input growth scenario.
#[derive(Clone, Debug)]
pub struct CoFiringGrowth {
    pub network: Network,
    pub main: NeuronId,
    /// The two sources that always fire together.
    pub partners: [NeuronId; 2],
    /// The source that sometimes fires alone.
    pub loner: NeuronId,
    /// Original paths: partner, partner, loner.
    pub paths: [SynapseId; 3],
    pub report: ConvergenceReport,
    pub metrics: Vec<MetricsRow>,
    pub events: Vec<GrowthEvent>,
}

impl CoFiringGrowth {
    pub fn open_fraction(&self, path: SynapseId) -> f64 {
        self.network.synapse(path).map_or(0.0, |s| s.open_fraction)
    }
}

/// Three sources overdrive a threshold-1 neuron. Two always fire together;
/// the third also fires alone on tick 0 and every 20th tick.
pub fn co_firing_growth(
    seed: u64,
    growth: &GrowthConfig,
    max_ticks: u64,
) -> Result<CoFiringGrowth> {
    let mut net = Network::new(seed);
    let main = net.add_neuron(1.0)?;
    let a1 = net.add_neuron(1.0)?;
    let a2 = net.add_neuron(1.0)?;
    let b = net.add_neuron(1.0)?;
    let paths = [
        net.add_synapse(a1, main, 1.0, 1)?,
        net.add_synapse(a2, main, 1.0, 1)?,
        net.add_synapse(b, main, 1.0, 1)?,
    ];
    let mut schedule = move |tick: u64| -> BTreeSet<NeuronId> {
        if tick.is_multiple_of(20) {
            [b].into()
        } else {
            [a1, a2, b].into()
        }
    };
    let (report, metrics, events) = drive(&mut net, &mut schedule, growth, max_ticks)?;
    Ok(CoFiringGrowth {
        network: net,
        main,
        partners: [a1, a2],
        loner: b,
        paths,
        report,
        metrics,
        events,
    })
}

fn drive(
    net: &mut Network,
    schedule: &mut dyn InputSchedule,
    growth: &GrowthConfig,
    max_ticks: u64,
) -> Result<(ConvergenceReport, Vec<MetricsRow>, Vec<GrowthEvent>)> {
    let mut metrics = Vec::new();
    let mut events = Vec::new();
    let report = run_until_balanced_with(net, schedule, growth, max_ticks, |t| {
        metrics.push(MetricsRow {
            tick: t.record.tick,
            fired_count: t.record.fired.len(),
            total_excess: t.record.total_excess(),
            max_excess: t.record.max_excess(),
            turbulence_total: t.turbulence_total,
            intermediaries_created: t.intermediaries_created,
            balanced_flag: u8::from(t.balanced),
        });
        events.extend_from_slice(t.events);
    })?;
    Ok((report, metrics, events))
}

/// Events for the cluster scenario: three overlapping feature sets presented
/// once, three times and twice.
pub fn overlap_events() -> Vec<ConceptSet> {
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<ConceptSet>();
    let t0 = set(&["C0", "C1"]);
    let t1 = set(&["C1", "C2", "C3"]);
    let t2 = set(&["C2", "C4"]);
    vec![t0, t1.clone(), t2.clone(), t1.clone(), t2, t1]
}

/// Runs the configured scenario and writes its outputs into `output_dir`.
pub fn run_scenario(config: &ExperimentConfig) -> Result<ScenarioSummary> {
    config.validate()?;
    let dir = config.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut outputs = Vec::new();
    let details = match config.scenario.as_str() {
        "fig2_growth" => fig2_growth(config, dir, &mut outputs)?,
        "fig3_cluster" => fig3_cluster(config, dir, &mut outputs)?,
        "fig4_trees" => fig4_trees(config, dir, &mut outputs)?,
        "fig6_stack" => fig6_stack(config, dir, &mut outputs)?,
        "convergence" => convergence(config, dir, &mut outputs)?,
        "refined_units" => refined_units(config, dir, &mut outputs)?,
        other => return Err(Error::Config(format!("unknown scenario {other:?}"))),
    };
    outputs.push("summary.json".into());
    let summary = ScenarioSummary {
        scenario: config.scenario.clone(),
        seed: config.seed,
        outputs,
        details,
    };
    write_file(
        &dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_growth_outputs(
    dir: &Path,
    net: &Network,
    metrics: &[MetricsRow],
    events: &[GrowthEvent],
    outputs: &mut Vec<String>,
) -> Result<()> {
    write_rows(&dir.join("metrics.csv"), metrics)?;
    let join = |xs: Vec<String>| xs.join(";");
    let rows: Vec<EventRow> = events
        .iter()
        .map(|e| EventRow {
            tick: e.tick,
            kind: e.kind.to_string(),
            neurons: join(e.neurons.iter().map(|n| n.0.to_string()).collect()),
            synapses: join(e.synapses.iter().map(|s| s.0.to_string()).collect()),
        })
        .collect();
    write_rows(&dir.join("growth_events.csv"), &rows)?;
    write_file(&dir.join("network.json"), &net.to_json()?)?;
    outputs.extend(["metrics.csv", "growth_events.csv", "network.json"].map(String::from));
    Ok(())
}

fn event_totals(events: &[GrowthEvent]) -> BTreeMap<String, usize> {
    let mut totals = BTreeMap::new();
    for e in events {
        *totals.entry(e.kind.to_string()).or_insert(0) += 1;
    }
    totals
}

fn fig2_growth(config: &ExperimentConfig, dir: &Path, outputs: &mut Vec<String>) -> Result<Value> {
    let run = co_firing_growth(config.seed, &config.growth, config.max_ticks)?;
    write_growth_outputs(dir, &run.network, &run.metrics, &run.events, outputs)?;
    Ok(json!({
        "convergence": run.report,
        "events": event_totals(&run.events),
        "open_fraction": {
            "partner_a": run.open_fraction(run.paths[0]),
            "partner_b": run.open_fraction(run.paths[1]),
            "loner": run.open_fraction(run.paths[2]),
        },
        "open_inputs_to_main": run.network.open_input_count(run.main),
    }))
}

fn convergence(config: &ExperimentConfig, dir: &Path, outputs: &mut Vec<String>) -> Result<Value> {
    let s = &config.schedule;
    let mut net = Network::new(config.seed);
    let main = net.add_neuron(s.threshold)?;
    let sources = (0..s.inputs)
        .map(|_| net.add_neuron(1.0))
        .collect::<Result<Vec<_>>>()?;
    for &src in &sources {
        net.add_synapse(src, main, 1.0, 1)?;
    }
    let mut schedule: Box<dyn InputSchedule> = if s.firing_probability >= 1.0 {
        Box::new(AllFiring(sources.iter().copied().collect()))
    } else {
        Box::new(RandomFiring::new(
            sources,
            s.firing_probability,
            config.seed,
        ))
    };
    let (report, metrics, events) = drive(
        &mut net,
        schedule.as_mut(),
        &config.growth,
        config.max_ticks,
    )?;
    write_growth_outputs(dir, &net, &metrics, &events, outputs)?;
    Ok(json!({
        "inputs": s.inputs,
        "threshold": s.threshold,
        "convergence": report,
        "events": event_totals(&events),
        "open_inputs_to_main": net.open_input_count(main),
    }))
}

fn read_corpus(config: &ExperimentConfig, fallback: &str) -> Result<String> {
    match &config.corpus {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::io(path, e)),
        None => Ok(fallback.to_owned()),
    }
}

fn forest_details(forest: &ConceptForest, corpus: &str) -> Value {
    let trees: Vec<Value> = (0..forest.tree_count())
        .map(|t| {
            let root = forest.root(t).expect("tree index in range");
            let terminals: Vec<&str> = forest
                .terminal_nodes(t)
                .into_iter()
                .map(|n| forest.label(n))
                .collect();
            json!({"root": forest.label(root), "count": forest.count(root), "terminals": terminals})
        })
        .collect();
    let links: Vec<Value> = forest
        .links()
        .iter()
        .map(|l| json!({"from": forest.label(l.from), "to": forest.label(l.to_root), "label": l.label}))
        .collect();
    let queries: Vec<Value> = corpus
        .lines()
        .map(tokenize)
        .filter(|t| !t.is_empty())
        .map(|tokens| {
            let hits: Vec<Vec<String>> = forest
                .search(&tokens)
                .iter()
                .map(|p| p.labels().into_iter().map(String::from).collect())
                .collect();
            json!({"query": tokens.join(" "), "paths": hits})
        })
        .collect();
    json!({
        "trees": trees,
        "links": links,
        "count_rule_holds": forest.count_rule_holds(),
        "queries": queries,
    })
}

fn fig4_trees(config: &ExperimentConfig, dir: &Path, outputs: &mut Vec<String>) -> Result<Value> {
    let corpus = read_corpus(config, SPLIT_CORPUS)?;
    let forest = ConceptForest::from_corpus(&corpus)?;
    write_file(&dir.join("forest.json"), &forest.to_json()?)?;
    outputs.push("forest.json".into());
    Ok(forest_details(&forest, &corpus))
}

fn cluster_details(net: &ClusterNet) -> Result<Value> {
    let mut globals = Vec::new();
    for g in net.global_concepts() {
        let ranked: Vec<Value> = net
            .retrieve(g.id)?
            .into_iter()
            .map(|(set, w)| json!({"concepts": set, "weight": w}))
            .collect();
        globals.push(json!({"id": g.id, "members": g.members, "retrieved": ranked}));
    }
    Ok(json!({
        "base_concepts": net.base_concepts(),
        "hidden_nodes": net.hidden_nodes().len(),
        "global_concepts": globals,
    }))
}

fn fig3_cluster(config: &ExperimentConfig, dir: &Path, outputs: &mut Vec<String>) -> Result<Value> {
    let mut net = ClusterNet::with_decay(config.decay)?;
    for event in overlap_events() {
        net.present_event(event, config.fuzzy)?;
    }
    write_file(&dir.join("cluster.json"), &net.to_json()?)?;
    outputs.push("cluster.json".into());
    cluster_details(&net)
}

fn fig6_stack(config: &ExperimentConfig, dir: &Path, outputs: &mut Vec<String>) -> Result<Value> {
    let corpus = read_corpus(config, STACK_CORPUS)?;
    let forest = ConceptForest::from_corpus(&corpus)?;

    // each sentence is an event over the tree bases it mentions
    let mut cluster = ClusterNet::with_decay(config.decay)?;
    for line in corpus.lines() {
        let bases: ConceptSet = tokenize(line)
            .into_iter()
            .filter(|t| !forest.bases(t).is_empty())
            .collect();
        if !bases.is_empty() {
            cluster.present_event(bases, config.fuzzy)?;
        }
    }

    let (network, neuron_of) = forest.to_network()?;
    let top: ConceptSet = match cluster.global_concepts().first() {
        Some(g) => cluster
            .retrieve(g.id)?
            .into_iter()
            .next()
            .map(|(s, _)| s)
            .unwrap_or_default(),
        None => ConceptSet::new(),
    };
    let seeds: BTreeSet<NeuronId> = top
        .iter()
        .flat_map(|label| forest.bases(label).to_vec())
        .filter_map(|t| forest.root(t))
        .map(|n| neuron_of[&n])
        .collect();
    let report = resonate(&network, &seeds, &ResonanceConfig::default())?;

    write_file(&dir.join("forest.json"), &forest.to_json()?)?;
    write_file(&dir.join("cluster.json"), &cluster.to_json()?)?;
    write_file(&dir.join("resonance.json"), &report.to_json()?)?;
    let path = dir.join("resonance.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    report.write_csv(BufWriter::new(file))?;
    outputs.extend(
        [
            "forest.json",
            "cluster.json",
            "resonance.json",
            "resonance.csv",
        ]
        .map(String::from),
    );

    let label_of: BTreeMap<NeuronId, &str> = neuron_of
        .iter()
        .map(|(n, id)| (*id, forest.label(*n)))
        .collect();
    let strongest = report
        .resonance
        .iter()
        .max_by_key(|(s, r)| (**r, std::cmp::Reverse(**s)))
        .map(|(s, r)| {
            let syn = network.synapse(*s).expect("reported synapse exists");
            json!({"synapse": s, "from": label_of[&syn.pre], "to": label_of[&syn.post], "resonance": r})
        });
    Ok(json!({
        "forest": forest_details(&forest, &corpus),
        "cluster": cluster_details(&cluster)?,
        "seed_concepts": top,
        "snapshot": report.snapshot,
        "recognized_edges": report.recognized_path.len(),
        "terminals_hit": report.terminals_hit.iter().map(|n| label_of[n]).collect::<Vec<_>>(),
        "strongest_edge": strongest,
    }))
}

#[derive(Serialize)]
struct RefinedRow {
    input_count: u32,
    group_size: u32,
    group_threshold: u32,
    main_threshold: u32,
    layers: u32,
    intermediaries: usize,
    latency: u64,
    min_firing_set: u64,
    input_weight: String,
}

fn refined_units(
    config: &ExperimentConfig,
    dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<Value> {
    let mut rows = Vec::new();
    for spec in &config.refined_specs {
        let mut net = Network::new(config.seed);
        let unit = build_refined(&mut net, spec)?;
        // follow the single outgoing edge from the first input up to main
        let mut path = vec![unit.inputs[0]];
        while *path.last().expect("non-empty") != unit.main {
            let out = net.outgoing(*path.last().expect("non-empty"));
            let next = out
                .first()
                .ok_or_else(|| Error::NotFound("path from input to main".into()))?;
            path.push(net.synapse(*next)?.post);
        }
        rows.push(RefinedRow {
            input_count: spec.input_count,
            group_size: spec.group_size,
            group_threshold: spec.group_threshold,
            main_threshold: spec.main_threshold,
            layers: spec.layers,
            intermediaries: unit.intermediaries().len(),
            latency: unit.latency(),
            min_firing_set: min_firing_set_size(spec)?,
            input_weight: effective_weight(&net, &path)?.to_string(),
        });
    }
    write_rows(&dir.join("refined.csv"), &rows)?;
    outputs.push("refined.csv".into());
    Ok(json!({ "units": rows }))
}
