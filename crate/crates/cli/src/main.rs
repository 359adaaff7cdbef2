use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use renforge_core::concept_forest::tokenize;
use renforge_core::harness::{self, ExperimentConfig};
use renforge_core::resonance::{resonate, ResonanceConfig};
use renforge_core::symbolic_cluster::parse_events;
use renforge_core::{ClusterNet, ConceptForest, Error, Result};

#[derive(Parser)]
#[command(
    name = "renforge",
    version,
    about = "Threshold-network growth, concept trees and clustering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its outputs.
    Run(RunArgs),
    /// Run many seeded direct units and write sweep.csv.
    Sweep(SweepArgs),
    /// Build or query a concept forest.
    #[command(subcommand)]
    Trees(TreesCommand),
    /// Cluster timed concept events.
    Cluster(ClusterArgs),
    /// Forward and reflected traversal over a saved forest.
    Resonate(ResonateArgs),
    /// Run the acceptance checks; exits non-zero if any fails.
    Verify,
    /// Show configuration.
    Config(ConfigArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides the scenario named in the config.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 30)]
    samples: usize,
}

#[derive(Subcommand)]
enum TreesCommand {
    /// Insert every line of a corpus and save the forest as JSON.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print every path matching a query, one per line.
    Query {
        #[arg(long)]
        forest: PathBuf,
        #[arg(long)]
        terms: String,
    },
}

#[derive(Args)]
struct ClusterArgs {
    /// Lines of `time<TAB>label,label,...`.
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    fuzzy: bool,
    #[arg(long, default_value_t = 0.0)]
    decay: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ResonateArgs {
    #[arg(long)]
    forest: PathBuf,
    /// Space-separated labels; every tree based on one of them is a seed.
    #[arg(long)]
    seeds: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    reflect_blocked: bool,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    print_defaults: bool,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = load_config(&args.common)?;
            if let Some(s) = args.scenario {
                cfg.scenario = s;
            }
            let summary = harness::run_scenario(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Sweep(args) => {
            let cfg = load_config(&args.common)?;
            let rows = harness::sweep(&cfg, args.samples)?;
            fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::Io {
                path: cfg.output_dir.clone(),
                source: e,
            })?;
            let path = cfg.output_dir.join("sweep.csv");
            harness::write_sweep_csv(&path, &rows)?;
            let balanced = rows.iter().filter(|r| r.ticks_to_balance >= 0).count();
            println!(
                "{} samples, {balanced} balanced, wrote {}",
                rows.len(),
                path.display()
            );
        }
        Command::Trees(TreesCommand::Ingest { corpus, out }) => {
            let forest = ConceptForest::from_corpus(&read(&corpus)?)?;
            write(&out, &forest.to_json()?)?;
            println!(
                "{} trees, {} links",
                forest.tree_count(),
                forest.links().len()
            );
        }
        Command::Trees(TreesCommand::Query { forest, terms }) => {
            let forest = ConceptForest::from_json(&read(&forest)?)?;
            for path in forest.search(&tokenize(&terms)) {
                let marker = if path.crosses_link() {
                    " (via link)"
                } else {
                    ""
                };
                println!("{}{marker}", path.labels().join(" "));
            }
        }
        Command::Cluster(args) => {
            let mut net = ClusterNet::with_decay(args.decay)?;
            for (_, set) in parse_events(&read(&args.events)?)? {
                net.present_event(set, args.fuzzy)?;
            }
            write(&args.out, &net.to_json()?)?;
            for g in net.global_concepts() {
                let sets: Vec<String> = net
                    .retrieve(g.id)?
                    .into_iter()
                    .map(|(s, w)| {
                        format!("{{{}}}x{w}", s.into_iter().collect::<Vec<_>>().join(","))
                    })
                    .collect();
                println!("GC{}: {}", g.id, sets.join(" "));
            }
        }
        Command::Resonate(args) => {
            let forest = ConceptForest::from_json(&read(&args.forest)?)?;
            let (net, neuron_of) = forest.to_network()?;
            let seeds: BTreeSet<_> = tokenize(&args.seeds)
                .iter()
                .flat_map(|l| forest.bases(l).to_vec())
                .filter_map(|t| forest.root(t))
                .map(|n| neuron_of[&n])
                .collect();
            let cfg = ResonanceConfig {
                reflect_blocked: args.reflect_blocked,
                ..ResonanceConfig::default()
            };
            let report = resonate(&net, &seeds, &cfg)?;
            fs::create_dir_all(&args.out).map_err(|e| Error::Io {
                path: args.out.clone(),
                source: e,
            })?;
            write(&args.out.join("resonance.json"), &report.to_json()?)?;
            let csv_path = args.out.join("resonance.csv");
            let file = fs::File::create(&csv_path).map_err(|e| Error::Io {
                path: csv_path.clone(),
                source: e,
            })?;
            report.write_csv(file)?;
            println!(
                "{} seeds, {} recognized edges, snapshot {}",
                seeds.len(),
                report.recognized_path.len(),
                report.snapshot
            );
        }
        Command::Verify => {
            let report = harness::verify();
            print!("{}", report.render());
            if !report.all_passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Config(args) => {
            if args.print_defaults {
                println!("{}", ExperimentConfig::default().to_json()?);
            } else {
                println!("scenarios: {}", harness::SCENARIOS.join(", "));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
