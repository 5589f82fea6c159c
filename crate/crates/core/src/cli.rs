//! Command-line entry point: subcommands for ingestion, matching,
//! interpolation, prediction, and the experiment harness, with a TOML
//! config file, flag overrides, and stable exit codes (0 success, 1 usage,
//! 2 data error, 3 numerical failure).

use crate::error::{Error, Result};
use crate::gnn::{build_features_from_edges, predict_links, split_edges, train_link_predictor};
use crate::graph::{interpolate, MobilityGraph, Modality, Period};
use crate::harness::{
    comparison_csv, compare_matched_unmatched, distance_csv, distance_report, run_monte_carlo,
    timing_benchmark, McConfig, DEFAULT_LAMBDAS,
};
use crate::ingest::{
    build_mobility_graph, filter_trips, layout_fruchterman_reingold, parse_trips,
    select_common_nodes, ColumnNames, IngestConfig,
};
use crate::matching::{faq_match, pad_with_null_nodes, MatchConfig};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

const LAYOUT_ITERATIONS: usize = 100;

/// Derive a per-stage seed from the global seed so stages are
/// independently reproducible (FNV-1a over the stage name, mixed with the
/// seed).
pub fn stage_seed(global: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^= global;
    h.wrapping_mul(0x100000001b3)
}

#[derive(Parser)]
#[command(
    name = "mobigraph",
    version,
    about = "Build, match, interpolate and evaluate mobility graphs"
)]
struct Cli {
    /// Global seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file mirroring the flags; flags win over the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; every artifact is written below it.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker-concurrency cap (reserved; execution is currently sequential).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct MatchFlags {
    /// Edge-vs-node balance in [0, 1].
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Frank-Wolfe gap threshold.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Attribute cost of matching a real node to a null node.
    #[arg(long)]
    null_cost: Option<f64>,
}

#[derive(Args, Clone, Default)]
struct McFlags {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a trip CSV and emit AM and PM graph JSON (layout computed on
    /// the AM graph and shared with the PM graph).
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n_nodes: Option<usize>,
        #[arg(long, value_parser = parse_modality)]
        modality: Option<Modality>,
        /// Restrict output to one period (both are built either way).
        #[arg(long, value_parser = parse_period)]
        period: Option<Period>,
        #[arg(long)]
        min_duration: Option<f64>,
        #[arg(long)]
        max_duration: Option<f64>,
        /// Also write GraphML exports.
        #[arg(long)]
        graphml: bool,
    },
    /// Register two graphs and emit the match result JSON.
    Match {
        #[arg(long)]
        g1: PathBuf,
        #[arg(long)]
        g2: PathBuf,
        #[command(flatten)]
        matching: MatchFlags,
    },
    /// Emit the straight-line walk between two registered graphs as a JSON
    /// array of graph documents.
    Interpolate {
        #[arg(long)]
        g1: PathBuf,
        /// Second graph, assumed registered unless --register is given.
        #[arg(long)]
        g2: PathBuf,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        /// Run the matcher first and interpolate toward the registered copy.
        #[arg(long)]
        register: bool,
        #[command(flatten)]
        matching: MatchFlags,
    },
    /// Train a link predictor on one graph and emit scores and the loss
    /// history as CSV.
    Predict {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Monte-Carlo link-prediction trials; emits the likelihood histogram
    /// CSV and raw trial records.
    Montecarlo {
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        mc: McFlags,
    },
    /// Matched-vs-unmatched Monte-Carlo comparison; emits a CSV row.
    Compare {
        #[arg(long)]
        g1: PathBuf,
        #[arg(long)]
        g2: PathBuf,
        #[command(flatten)]
        mc: McFlags,
        #[command(flatten)]
        matching: MatchFlags,
    },
    /// Matching compute-time scaling with a quadratic fit; emits CSV.
    Benchmark {
        /// Comma-separated node sizes.
        #[arg(long, default_value = "16,32,64,128")]
        sizes: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Lambda-sweep distance report (distance before and after matching).
    Report {
        #[arg(long)]
        g1: PathBuf,
        #[arg(long)]
        g2: PathBuf,
        /// Comma-separated lambda values.
        #[arg(long)]
        lambdas: Option<String>,
        #[command(flatten)]
        matching: MatchFlags,
    },
}

fn parse_modality(s: &str) -> std::result::Result<Modality, String> {
    match s {
        "avg-time" => Ok(Modality::AvgTravelTime),
        "trip-count" => Ok(Modality::TripCount),
        other => Err(format!(
            "unknown modality `{other}` (expected avg-time or trip-count)"
        )),
    }
}

fn parse_period(s: &str) -> std::result::Result<Period, String> {
    match s {
        "am" => Ok(Period::Am),
        "pm" => Ok(Period::Pm),
        other => Err(format!("unknown period `{other}` (expected am or pm)")),
    }
}

/// Config file sections mirroring the flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default, rename = "match")]
    pub matching: MatchSection,
    #[serde(default)]
    pub montecarlo: McSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub n_nodes: Option<usize>,
    pub modality: Option<String>,
    pub min_duration: Option<f64>,
    pub max_duration: Option<f64>,
    pub pickup_datetime_column: Option<String>,
    pub dropoff_datetime_column: Option<String>,
    pub pickup_location_column: Option<String>,
    pub dropoff_location_column: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchSection {
    pub lambda: Option<f64>,
    pub restarts: Option<usize>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub null_cost: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub trials: Option<usize>,
    pub top_k: Option<usize>,
    pub bins: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub test_fraction: Option<f64>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))
        }
    }
}

fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> u64 {
    flag.or(file.seed)
        .or_else(|| {
            std::env::var("MOBIGRAPH_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0)
}

fn build_match_config(flags: &MatchFlags, file: &MatchSection, seed: u64) -> MatchConfig {
    let defaults = MatchConfig::default();
    MatchConfig {
        lambda: flags.lambda.or(file.lambda).unwrap_or(defaults.lambda),
        max_iterations: flags
            .max_iters
            .or(file.max_iters)
            .unwrap_or(defaults.max_iterations),
        convergence_tol: flags.tol.or(file.tol).unwrap_or(defaults.convergence_tol),
        restarts: flags.restarts.or(file.restarts).unwrap_or(defaults.restarts),
        seed: stage_seed(seed, "match"),
        null_cost: flags
            .null_cost
            .or(file.null_cost)
            .unwrap_or(defaults.null_cost),
    }
}

fn build_mc_config(flags: &McFlags, file: &McSection, seed: u64) -> McConfig {
    let defaults = McConfig::default();
    McConfig {
        trials: flags.trials.or(file.trials).unwrap_or(defaults.trials),
        top_k: flags.top_k.or(file.top_k).unwrap_or(defaults.top_k),
        bins: flags.bins.or(file.bins).unwrap_or(defaults.bins),
        epochs: flags.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        lr: flags.lr.or(file.lr).unwrap_or(defaults.lr),
        test_fraction: flags
            .test_fraction
            .or(file.test_fraction)
            .unwrap_or(defaults.test_fraction),
        node_sizes: defaults.node_sizes,
        base_seed: stage_seed(seed, "montecarlo"),
        gnn: defaults.gnn,
    }
}

fn load_graph(path: &Path) -> Result<MobilityGraph> {
    let text = fs::read_to_string(path)?;
    MobilityGraph::from_json(&text)
}

fn write_artifact(out_dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(name), contents)?;
    Ok(())
}

/// Parse argv, run the selected subcommand, and return the process exit
/// code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            // --help and --version print to stdout and exit 0; everything
            // else is a usage error.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = load_file_config(cli.config.as_deref())?;
    let seed = resolve_seed(cli.seed, &file);
    let out = cli.out.as_path();
    match cli.command {
        Command::Ingest {
            input,
            n_nodes,
            modality,
            period,
            min_duration,
            max_duration,
            graphml,
        } => {
            let defaults = IngestConfig::default();
            let modality = modality
                .or_else(|| {
                    file.ingest
                        .modality
                        .as_deref()
                        .and_then(|s| parse_modality(s).ok())
                })
                .unwrap_or(defaults.modality);
            let columns = ColumnNames {
                pickup_datetime: file
                    .ingest
                    .pickup_datetime_column
                    .clone()
                    .unwrap_or_else(|| ColumnNames::default().pickup_datetime),
                dropoff_datetime: file
                    .ingest
                    .dropoff_datetime_column
                    .clone()
                    .unwrap_or_else(|| ColumnNames::default().dropoff_datetime),
                pickup_location: file
                    .ingest
                    .pickup_location_column
                    .clone()
                    .unwrap_or_else(|| ColumnNames::default().pickup_location),
                dropoff_location: file
                    .ingest
                    .dropoff_location_column
                    .clone()
                    .unwrap_or_else(|| ColumnNames::default().dropoff_location),
            };
            let cfg = IngestConfig {
                n_nodes: n_nodes.or(file.ingest.n_nodes).unwrap_or(defaults.n_nodes),
                seed: stage_seed(seed, "ingest"),
                modality,
                min_duration_minutes: min_duration
                    .or(file.ingest.min_duration)
                    .unwrap_or(defaults.min_duration_minutes),
                max_duration_minutes: max_duration
                    .or(file.ingest.max_duration)
                    .unwrap_or(defaults.max_duration_minutes),
                columns,
            };
            run_ingest(&input, &cfg, period, graphml, out)
        }
        Command::Match { g1, g2, matching } => {
            let cfg = build_match_config(&matching, &file.matching, seed);
            let (g1, g2) = load_equal_sized_pair(&g1, &g2)?;
            let result = faq_match(&g1, &g2, &cfg)?;
            write_artifact(out, "match.json", &serde_json::to_string_pretty(&result)?)?;
            println!(
                "matched {} nodes: objective {:.6}, d_pre {:.6}, d_post {:.6}",
                g1.n(),
                result.objective,
                result.d_pre,
                result.d_post
            );
            Ok(())
        }
        Command::Interpolate {
            g1,
            g2,
            steps,
            register,
            matching,
        } => {
            let (g1, mut g2) = load_equal_sized_pair(&g1, &g2)?;
            if register {
                let cfg = build_match_config(&matching, &file.matching, seed);
                let result = faq_match(&g1, &g2, &cfg)?;
                g2 = crate::graph::permute_graph(&g2, &result.permutation)?;
            }
            let path = interpolate(&g1, &g2, steps)?;
            let docs: Vec<serde_json::Value> = path
                .steps
                .iter()
                .map(|g| serde_json::from_str(&g.to_json()?).map_err(Error::from))
                .collect::<Result<_>>()?;
            write_artifact(out, "path.json", &serde_json::to_string_pretty(&docs)?)?;
            Ok(())
        }
        Command::Predict {
            graph,
            test_fraction,
            epochs,
            lr,
        } => {
            let g = load_graph(&graph)?;
            let mc_defaults = McConfig::default();
            let test_fraction = test_fraction
                .or(file.montecarlo.test_fraction)
                .unwrap_or(mc_defaults.test_fraction);
            let epochs = epochs.or(file.montecarlo.epochs).unwrap_or(5000);
            let lr = lr.or(file.montecarlo.lr).unwrap_or(mc_defaults.lr);
            let split_seed = stage_seed(seed, "predict-split");
            let train_seed = stage_seed(seed, "predict-train");
            let split = split_edges(&g, test_fraction, split_seed)?;
            let (model, history) = train_link_predictor(&g, &split, epochs, lr, train_seed)?;
            let features = build_features_from_edges(&g.node_attrs, &split.train_pos, g.n());
            let mut candidates = split.test_pos.clone();
            candidates.extend(split.test_neg.iter().copied());
            let scores = predict_links(&model, &features, &split.train_pos, &candidates)?;
            let positives: HashSet<_> = split.test_pos.iter().copied().collect();
            let mut scores_csv = String::from("u,v,likelihood,held_out_edge\n");
            for (pair, s) in candidates.iter().zip(&scores) {
                scores_csv.push_str(&format!(
                    "{},{},{},{}\n",
                    pair.0,
                    pair.1,
                    s,
                    positives.contains(pair)
                ));
            }
            let mut loss_csv = String::from("epoch,loss\n");
            for (e, l) in history.iter().enumerate() {
                loss_csv.push_str(&format!("{e},{l}\n"));
            }
            write_artifact(out, "scores.csv", &scores_csv)?;
            write_artifact(out, "loss.csv", &loss_csv)?;
            write_artifact(out, "model.json", &model.to_json()?)?;
            Ok(())
        }
        Command::Montecarlo { graph, mc } => {
            let g = load_graph(&graph)?;
            let cfg = build_mc_config(&mc, &file.montecarlo, seed);
            let (hist, records) = run_monte_carlo(&g, &cfg)?;
            write_artifact(out, "histogram.csv", &hist.to_csv())?;
            write_artifact(out, "trials.json", &serde_json::to_string_pretty(&records)?)?;
            println!(
                "{} trials x top-{}: {} scored candidates binned",
                records.len(),
                cfg.top_k,
                hist.total()
            );
            Ok(())
        }
        Command::Compare {
            g1,
            g2,
            mc,
            matching,
        } => {
            let (g1, g2) = load_equal_sized_pair(&g1, &g2)?;
            let mc_cfg = build_mc_config(&mc, &file.montecarlo, seed);
            let match_cfg = build_match_config(&matching, &file.matching, seed);
            let row = compare_matched_unmatched(&g1, &g2, &mc_cfg, &match_cfg)?;
            write_artifact(out, "comparison.csv", &comparison_csv(&[row]))?;
            Ok(())
        }
        Command::Benchmark { sizes, repeats } => {
            let node_sizes: Vec<usize> = sizes
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad size `{s}`")))
                })
                .collect::<Result<_>>()?;
            let report = timing_benchmark(&node_sizes, repeats, stage_seed(seed, "benchmark"))?;
            write_artifact(out, "timing.csv", &report.to_csv())?;
            println!(
                "quadratic fit r^2 = {:.4} over sizes {:?}",
                report.r_squared, node_sizes
            );
            Ok(())
        }
        Command::Report {
            g1,
            g2,
            lambdas,
            matching,
        } => {
            let (g1, g2) = load_equal_sized_pair(&g1, &g2)?;
            let lambdas: Vec<f64> = match lambdas {
                None => DEFAULT_LAMBDAS.to_vec(),
                Some(s) => s
                    .split(',')
                    .map(|x| {
                        x.trim()
                            .parse()
                            .map_err(|_| Error::InvalidConfig(format!("bad lambda `{x}`")))
                    })
                    .collect::<Result<_>>()?,
            };
            let match_cfg = build_match_config(&matching, &file.matching, seed);
            let rows = distance_report(&g1, &g2, &lambdas, &match_cfg)?;
            write_artifact(out, "distances.csv", &distance_csv(&rows))?;
            Ok(())
        }
    }
}

/// Load two graph documents, padding with null nodes when the sizes differ.
fn load_equal_sized_pair(p1: &Path, p2: &Path) -> Result<(MobilityGraph, MobilityGraph)> {
    let g1 = load_graph(p1)?;
    let g2 = load_graph(p2)?;
    if g1.n() == g2.n() {
        Ok((g1, g2))
    } else {
        Ok(pad_with_null_nodes(&g1, &g2))
    }
}

fn run_ingest(
    input: &Path,
    cfg: &IngestConfig,
    only_period: Option<Period>,
    graphml: bool,
    out: &Path,
) -> Result<()> {
    cfg.validate()?;
    let file = fs::File::open(input)?;
    let (trips, diags) = parse_trips(file, &cfg.columns)?;
    if !diags.is_empty() {
        eprintln!("skipped {} malformed rows", diags.len());
        for d in diags.iter().take(10) {
            eprintln!("  row {}: {}", d.row, d.reason);
        }
    }
    let zones = select_common_nodes(&trips, cfg.n_nodes, cfg.seed)?;
    let build = |period: Period| -> Result<MobilityGraph> {
        let kept = filter_trips(
            &trips,
            period,
            cfg.min_duration_minutes,
            cfg.max_duration_minutes,
        );
        build_mobility_graph(&kept, &zones, cfg.modality, period)
    };
    let am = build(Period::Am)?;
    let mut pm = build(Period::Pm)?;
    // layout once on the AM graph; PM reuses the coordinates zone-for-zone
    let am = layout_fruchterman_reingold(&am, cfg.seed, LAYOUT_ITERATIONS);
    pm.node_attrs = am.node_attrs.clone();
    for (name, g) in [("graph_am", &am), ("graph_pm", &pm)] {
        let wanted = match only_period {
            None => true,
            Some(p) => p == g.period,
        };
        if !wanted {
            continue;
        }
        write_artifact(out, &format!("{name}.json"), &g.to_json()?)?;
        if graphml {
            write_artifact(out, &format!("{name}.graphml"), &g.to_graphml())?;
        }
    }
    println!(
        "ingested {} trips ({} skipped), {} zones selected",
        trips.len(),
        diags.len(),
        zones.len()
    );
    Ok(())
}
