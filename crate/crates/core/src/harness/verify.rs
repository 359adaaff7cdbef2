use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::concept_forest::{tokenize, ConceptForest, LINK_LABEL};
use crate::error::{Error, Result};
use crate::feedback::{average_excess, resistance_profile};
use crate::growth::{run_until_balanced, GrowthConfig};
use crate::net::{Network, NeuronId};
use crate::refined::{expand_weighted, min_firing_set_size, RefinedSpec};
use crate::symbolic_cluster::{ClusterNet, ConceptSet};

use super::config::ExperimentConfig;
use super::scenario::{co_firing_growth, overlap_events, run_scenario, SCENARIOS, SPLIT_CORPUS};
use super::schedule::AllFiring;
use super::sweep::{sweep, write_sweep_csv};

const TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CriterionResult {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub results: Vec<CriterionResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    /// One line per criterion. Contains no timings or paths, so two runs render identically.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let status = if r.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{:<4} {status}  {:<32} {}", r.id, r.name, r.detail);
        }
        let passed = self.results.iter().filter(|r| r.passed).count();
        let _ = writeln!(out, "{passed}/{} criteria passed", self.results.len());
        out
    }
}

fn criterion(
    id: &'static str,
    name: &'static str,
    outcome: Result<(bool, String)>,
) -> CriterionResult {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        name,
        passed,
        detail,
    }
}

/// Runs every acceptance criterion and reports the outcome of each.
pub fn verify() -> VerifyReport {
    let mut report = verify_checks();
    report
        .results
        .push(criterion("A10", "determinism", check_determinism()));
    report
}

/// Every criterion except the determinism run, which is built on top of these.
pub fn verify_checks() -> VerifyReport {
    let results = vec![
        criterion("A1", "minimum firing set", check_min_firing_set()),
        criterion(
            "A2",
            "average excess",
            Ok(check_excess_formula(average_excess)),
        ),
        criterion("A3", "resistance profile", check_profile()),
        criterion(
            "A4",
            "weighted expansion",
            check_weighted_equivalence(200, 0xA4),
        ),
        criterion("A5", "tree split and link", check_trees()),
        criterion("A6", "growth scenario", check_growth()),
        criterion("A7", "fuzzy reinforcement", check_fuzzy(1000, 0xA7)),
        criterion("A8", "retrieval order", check_retrieval()),
        criterion("A9", "convergence", check_convergence()),
    ];
    VerifyReport { results }
}

/// Brute force over every vector of per-group firing counts.
fn enumerate_min_set(groups: u32, size: u32, group_threshold: u32, main_threshold: u32) -> u64 {
    let radix = u64::from(size) + 1;
    let total = radix.pow(groups);
    let mut best = u64::MAX;
    for code in 0..total {
        let mut c = code;
        let (mut fired, mut used) = (0, 0u64);
        for _ in 0..groups {
            let k = c % radix;
            c /= radix;
            used += k;
            if k >= u64::from(group_threshold) {
                fired += 1;
            }
        }
        if fired >= main_threshold {
            best = best.min(used);
        }
    }
    best
}

fn check_min_firing_set() -> Result<(bool, String)> {
    let got = min_firing_set_size(&RefinedSpec::new(25, 5, 4, 4))?;
    let oracle = enumerate_min_set(5, 5, 4, 4);
    Ok((
        got == 16 && oracle == 16,
        format!("computed {got}, enumerated {oracle}, expected 16"),
    ))
}

/// Checks an average-excess implementation against the two worked cases.
pub fn check_excess_formula(f: impl Fn(f64, f64, u32) -> Result<f64>) -> (bool, String) {
    let cases = [((10.0, 5.0, 10), 0.5), ((50.0, 5.0, 50), 0.9)];
    let mut ok = true;
    let mut parts = Vec::new();
    for ((total, threshold, n), want) in cases {
        match f(total, threshold, n) {
            Ok(got) => {
                ok &= (got - want).abs() <= TOLERANCE;
                parts.push(format!("({total},{threshold},{n}) = {got}"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("({total},{threshold},{n}) failed: {e}"));
            }
        }
    }
    (ok, parts.join(", "))
}

fn check_profile() -> Result<(bool, String)> {
    let got = resistance_profile(5.0, 10);
    let want: Vec<f64> = (1..=10).map(|k| f64::from(5 * k)).collect();
    Ok((got == want, format!("{got:?}")))
}

struct WeightedCase {
    inputs: usize,
    /// (output threshold, weight per input)
    outputs: Vec<(u32, Vec<u32>)>,
}

fn random_case(rng: &mut ChaCha8Rng) -> WeightedCase {
    let inputs = rng.gen_range(1..=12);
    let outputs = (0..rng.gen_range(1..=3))
        .map(|_| {
            let weights: Vec<u32> = (0..inputs).map(|_| rng.gen_range(0..=4)).collect();
            let total: u32 = weights.iter().sum();
            (rng.gen_range(1..=total.max(1)), weights)
        })
        .collect();
    WeightedCase { inputs, outputs }
}

/// Multiplicity edges and explicit relay neurons, both wired from the same case.
/// Network, input neurons, target neurons.
type Expansion = (Network, Vec<NeuronId>, Vec<NeuronId>);

fn build_expansions(case: &WeightedCase) -> Result<[Expansion; 2]> {
    let mut built = Vec::new();
    for relay in [false, true] {
        let mut net = Network::new(0);
        let ins = (0..case.inputs)
            .map(|_| net.add_neuron(1.0))
            .collect::<Result<Vec<_>>>()?;
        let mut outs = Vec::new();
        for (threshold, weights) in &case.outputs {
            let out = net.add_neuron(f64::from(*threshold))?;
            for (i, &w) in weights.iter().enumerate().filter(|(_, w)| **w > 0) {
                if relay {
                    for _ in 0..w {
                        let r = net.add_neuron(1.0)?;
                        net.add_synapse(ins[i], r, 1.0, 1)?;
                        net.add_synapse(r, out, 1.0, 1)?;
                    }
                } else {
                    expand_weighted(&mut net, ins[i], out, w)?;
                }
            }
            outs.push(out);
        }
        built.push((net, ins, outs));
    }
    Ok(built
        .try_into()
        .unwrap_or_else(|_| unreachable!("two expansions built")))
}

/// Compares weighted-sum firing with both unit-weight expansions on every input pattern.
pub fn check_weighted_equivalence(samples: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patterns = 0u64;
    for sample in 0..samples {
        let case = random_case(&mut rng);
        let [(mut mult, m_in, m_out), (mut relay, r_in, r_out)] = build_expansions(&case)?;
        for mask in 0u32..(1 << case.inputs) {
            let on = |i: usize| mask >> i & 1 == 1;
            let expected: Vec<bool> = case
                .outputs
                .iter()
                .map(|(t, w)| {
                    w.iter()
                        .enumerate()
                        .filter(|(i, _)| on(*i))
                        .map(|(_, w)| w)
                        .sum::<u32>()
                        >= *t
                })
                .collect();

            mult.reset_state();
            let drive: BTreeSet<_> = m_in
                .iter()
                .enumerate()
                .filter(|(i, _)| on(*i))
                .map(|(_, n)| *n)
                .collect();
            let rec = mult.step(&drive)?;
            let got_mult: Vec<bool> = m_out.iter().map(|o| rec.fired.contains(o)).collect();

            relay.reset_state();
            let drive: BTreeSet<_> = r_in
                .iter()
                .enumerate()
                .filter(|(i, _)| on(*i))
                .map(|(_, n)| *n)
                .collect();
            relay.step(&drive)?;
            let rec = relay.step(&BTreeSet::new())?;
            let got_relay: Vec<bool> = r_out.iter().map(|o| rec.fired.contains(o)).collect();

            if got_mult != expected || got_relay != expected {
                return Ok((
                    false,
                    format!("sample {sample} pattern {mask:#b}: expected {expected:?}, multiplicity {got_mult:?}, relay {got_relay:?}"),
                ));
            }
            patterns += 1;
        }
    }
    Ok((
        true,
        format!("{samples} networks, {patterns} patterns, no mismatch"),
    ))
}

fn check_trees() -> Result<(bool, String)> {
    let forest = ConceptForest::from_corpus(SPLIT_CORPUS)?;
    let link_ok = forest.links().len() == 1 && {
        let l = &forest.links()[0];
        forest.label(l.from) == "cat" && forest.label(l.to_root) == "drank" && l.label == LINK_LABEL
    };
    let hits = forest.search(&tokenize("black cat drank milk"));
    let crosses = hits
        .iter()
        .any(|p| p.crosses_link() && p.labels() == ["black", "cat", "drank", "milk"]);
    let ok = forest.tree_count() == 2 && link_ok && forest.count_rule_holds() && crosses;
    Ok((
        ok,
        format!(
            "{} trees, {} link(s), count rule {}, query crosses link {}",
            forest.tree_count(),
            forest.links().len(),
            forest.count_rule_holds(),
            crosses
        ),
    ))
}

fn check_growth() -> Result<(bool, String)> {
    let cfg = ExperimentConfig::default();
    let run = co_firing_growth(cfg.seed, &cfg.growth, 200)?;
    let [a, b, loner] = run.paths.map(|p| run.open_fraction(p));
    let ok = run.report.intermediaries_created >= 1
        && a == 0.0
        && b == 0.0
        && loner > 0.0
        && loner < 1.0
        && run.report.ticks_to_balance.is_some();
    Ok((
        ok,
        format!(
            "{} intermediary, partner paths {a}/{b}, loner path {loner:.4}, balanced at tick {:?}",
            run.report.intermediaries_created, run.report.ticks_to_balance
        ),
    ))
}

fn random_set(rng: &mut ChaCha8Rng, alphabet: usize) -> ConceptSet {
    let size = rng.gen_range(1..=4.min(alphabet));
    let mut set = ConceptSet::new();
    while set.len() < size {
        set.insert(format!("c{}", rng.gen_range(0..alphabet)));
    }
    set
}

fn check_fuzzy(pairs: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0usize;
    for pair in 0..pairs {
        let alphabet = rng.gen_range(2..=8);
        let mut net = ClusterNet::new();
        for _ in 0..rng.gen_range(1..=8) {
            let fuzzy = rng.gen_bool(0.5);
            net.present_event(random_set(&mut rng, alphabet), fuzzy)?;
        }
        let before: BTreeMap<u32, (ConceptSet, f64)> = net
            .hidden_nodes()
            .iter()
            .map(|h| (h.id, (h.inputs.clone(), h.weight)))
            .collect();
        let event = random_set(&mut rng, alphabet);
        let report = net.present_event(event.clone(), true)?;
        for (id, (inputs, weight)) in &before {
            let subset = inputs.is_subset(&event);
            let reinforced = report.reinforced.contains(id);
            let grew = net.hidden(*id).is_some_and(|h| h.weight > *weight);
            if subset != reinforced || subset != grew {
                return Ok((
                    false,
                    format!("pair {pair}: node {id} {inputs:?} vs event {event:?}"),
                ));
            }
            checked += 1;
        }
    }
    Ok((
        true,
        format!("{pairs} pairs, {checked} node checks, no counterexample"),
    ))
}

fn check_retrieval() -> Result<(bool, String)> {
    let mut net = ClusterNet::new();
    let events = overlap_events();
    for e in &events {
        net.present_event(e.iter().cloned(), false)?;
    }
    let got = net.retrieve(0)?;
    let want = [
        (events[1].clone(), 3.0),
        (events[2].clone(), 2.0),
        (events[0].clone(), 1.0),
    ];
    let ok =
        got.len() == want.len() && got.iter().zip(&want).all(|(g, w)| g.0 == w.0 && g.1 == w.1);
    let shown: Vec<String> = got
        .iter()
        .map(|(s, w)| {
            format!(
                "{{{}}}x{w}",
                s.iter().cloned().collect::<Vec<_>>().join(",")
            )
        })
        .collect();
    Ok((ok, shown.join(" > ")))
}

fn check_convergence() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [10u32, 25, 50] {
        let mut net = Network::new(0);
        let main = net.add_neuron(5.0)?;
        let sources = (0..n)
            .map(|_| net.add_neuron(1.0))
            .collect::<Result<BTreeSet<_>>>()?;
        for &s in &sources {
            net.add_synapse(s, main, 1.0, 1)?;
        }
        let report = run_until_balanced(
            &mut net,
            &mut AllFiring(sources),
            &GrowthConfig::default(),
            500,
        )?;
        ok &= report.ticks_to_balance.is_some()
            && report.final_max_excess < report.initial_max_excess;
        parts.push(format!(
            "N={n}: {:.3} -> {:.3} by tick {:?}",
            report.initial_max_excess, report.final_max_excess, report.ticks_to_balance
        ));
    }
    Ok((ok, parts.join("; ")))
}

/// SHA-256 over every file below `dir`, visited in sorted path order.
pub fn hash_dir(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        let path = dir.join(&rel);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("below root").to_path_buf());
        }
    }
    Ok(())
}

/// Every scenario, a small sweep and the rendered checks, written into `dir`.
fn full_run(dir: &Path) -> Result<()> {
    for name in SCENARIOS {
        let mut cfg = ExperimentConfig::for_scenario(name);
        cfg.output_dir = dir.join(name);
        run_scenario(&cfg)?;
    }
    let cfg = ExperimentConfig::default();
    write_sweep_csv(&dir.join("sweep.csv"), &sweep(&cfg, 6)?)?;
    super::write_file(&dir.join("verify.txt"), &verify_checks().render())
}

fn check_determinism() -> Result<(bool, String)> {
    let a = tempfile::tempdir().map_err(|e| Error::io("<tempdir>", e))?;
    let b = tempfile::tempdir().map_err(|e| Error::io("<tempdir>", e))?;
    full_run(a.path())?;
    full_run(b.path())?;
    let (ha, hb) = (hash_dir(a.path())?, hash_dir(b.path())?);
    Ok((
        ha == hb,
        format!("run hashes {} / {}", &ha[..16], &hb[..16]),
    ))
}
