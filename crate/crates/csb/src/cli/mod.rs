//! The `csb` command line: scenario generation, experiment execution,
//! bound tables, and plot emission.

pub mod plot;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    corollary_bound, gaps_of, lemma1_bound, omega_max_of, remark1_increment, theorem1_bound,
    BoundParams, RestartCase,
};
use crate::error::{CsbError, Result};
use crate::harness::{
    run_experiment, write_aggregate_csv, write_event_csv, write_file_atomic, write_round_csv,
    ExperimentConfig,
};
use crate::policies::PolicyParams;
use crate::sem_core::{generate_synthetic_scenario, GeneratorParams, Scenario};

#[derive(Parser, Debug)]
#[command(name = "csb", version, about = "Piecewise-stationary SEM semi-bandit simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic piecewise-stationary scenario file.
    Generate(GenerateArgs),
    /// Run a replicated experiment and write CSV results.
    Run(RunArgs),
    /// Print the regret-bound table for given parameters or a scenario.
    Bounds(BoundsArgs),
    /// Render mean-regret curves from an aggregated CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// JSON file of generator parameters; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the synthetic-study defaults (K=18, 3 groups of 6, m=4,
    /// T=25000, 4+4 changes, density 0.15, weights U[0.1,0.9]).
    #[arg(long)]
    pub paper_defaults: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "scenario.json")]
    pub out: PathBuf,
    /// Number of base arms K.
    #[arg(long = "K")]
    pub arms: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Super-arm size m.
    #[arg(long)]
    pub super_arm_size: Option<usize>,
    /// Comma-separated group sizes, e.g. `6,6,6`.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<usize>>,
    /// Number of graph and distribution change-points.
    #[arg(long, num_args = 2, value_names = ["GRAPH", "DIST"])]
    pub changes: Option<Vec<usize>>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub weight_min: Option<f64>,
    #[arg(long)]
    pub weight_max: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Comma-separated registry names, e.g. `ps-sem-ucb-gr,glr-cucb`.
    #[arg(long, value_delimiter = ',')]
    pub policies: Option<Vec<String>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for rounds.csv, aggregate.csv, events.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// File form of the run configuration.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct RunConfigFile {
    pub scenario: Option<PathBuf>,
    #[serde(default)]
    pub policies: Vec<PolicySpec>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySpec {
    pub name: String,
    #[serde(default)]
    pub params: PolicyParams,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    /// Derive omega_max, gaps, and segment counts from a scenario file.
    #[arg(long)]
    pub from_scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub omega_max: f64,
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    #[arg(long = "K", default_value_t = 1)]
    pub arms: usize,
    #[arg(long, default_value_t = 3)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1.0)]
    pub delta_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta_max: f64,
    /// GLR confidence; defaults to 1/T.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Exploration probability; defaults to 0 (pure analysis term).
    #[arg(long, default_value_t = 0.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.0)]
    pub max_delay: f64,
    /// Comma-separated `segments:size` pairs per group, e.g. `3:6,2:6`.
    #[arg(long, value_delimiter = ',')]
    pub group_profile: Option<Vec<String>>,
    #[arg(long, default_value_t = 1)]
    pub graph_segments: usize,
    #[arg(long)]
    pub delta_min_change: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Aggregated CSV produced by `run`.
    #[arg(long)]
    pub input: PathBuf,
    /// Scenario file supplying change-point marker rounds.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value = "regret.svg")]
    pub out: PathBuf,
}

/// Executes a parsed invocation; the binary maps errors to exit code 1.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => generate(&args),
        Command::Run(args) => run(&args),
        Command::Bounds(args) => bounds(&args),
        Command::Plot(args) => plot_command(&args),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CsbError::invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn generator_params(args: &GenerateArgs) -> Result<GeneratorParams> {
    let mut params = match (&args.config, args.paper_defaults) {
        (Some(path), _) => read_json::<GeneratorParams>(path)?,
        _ => GeneratorParams::paper_defaults(),
    };
    if let Some(k) = args.arms {
        params.arm_count = k;
        // Keep derived fields consistent unless explicitly overridden.
        if args.groups.is_none() {
            params.group_sizes = vec![k];
        }
        if args.super_arm_size.is_none() {
            params.super_arm_size = params.super_arm_size.min(k);
        }
    }
    if let Some(t) = args.horizon {
        params.horizon = t;
    }
    if let Some(m) = args.super_arm_size {
        params.super_arm_size = m;
    }
    if let Some(groups) = &args.groups {
        params.group_sizes = groups.clone();
    }
    if let Some(changes) = &args.changes {
        params.graph_changes = changes[0];
        params.dist_changes = changes[1];
    }
    if let Some(d) = args.density {
        params.edge_density = d;
    }
    if let Some(w) = args.weight_min {
        params.weight_min = w;
    }
    if let Some(w) = args.weight_max {
        params.weight_max = w;
    }
    if let Some(s) = args.noise {
        params.noise_scale = s;
    }
    Ok(params)
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let params = generator_params(args)?;
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let scenario = generate_synthetic_scenario(&params, &mut rng)?;
    let json = scenario.to_json()?;
    write_file_atomic(&args.out, |buf| {
        buf.extend_from_slice(json.as_bytes());
        buf.push(b'\n');
        Ok(())
    })?;
    println!(
        "wrote {} (K={}, T={}, {} graph / {} dist segments)",
        args.out.display(),
        scenario.arm_count,
        scenario.horizon,
        scenario.graph_segments.len(),
        scenario.dist_segments.len()
    );
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let file: RunConfigFile = match &args.config {
        Some(path) => read_json(path)?,
        None => RunConfigFile::default(),
    };
    let scenario_path = args
        .scenario
        .clone()
        .or(file.scenario)
        .ok_or_else(|| CsbError::invalid("a scenario file is required (--scenario)"))?;
    let scenario = Scenario::from_json(&std::fs::read_to_string(&scenario_path).map_err(
        |e| CsbError::invalid(format!("cannot read {}: {e}", scenario_path.display())),
    )?)?;
    let policies: Vec<(String, PolicyParams)> = match &args.policies {
        Some(names) => names
            .iter()
            .map(|n| (n.clone(), PolicyParams::new()))
            .collect(),
        None => file
            .policies
            .iter()
            .map(|s| (s.name.clone(), s.params.clone()))
            .collect(),
    };
    let config = ExperimentConfig {
        scenario,
        policies,
        replications: args.reps.or(file.reps).unwrap_or(20),
        master_seed: args.seed.or(file.seed).unwrap_or(0),
    };
    let out_dir = args
        .out
        .clone()
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("results"));

    let bundle = run_experiment(&config)?;
    write_file_atomic(&out_dir.join("rounds.csv"), |buf| {
        write_round_csv(buf, &bundle.replications)
    })?;
    write_file_atomic(&out_dir.join("aggregate.csv"), |buf| {
        write_aggregate_csv(buf, &bundle)
    })?;
    write_file_atomic(&out_dir.join("events.csv"), |buf| {
        write_event_csv(buf, &bundle.events)
    })?;

    println!("final mean cumulative regret over {} replications:", config.replications);
    for p in &bundle.per_policy {
        println!(
            "  {:<16} {:>12.3} ± {:.3}",
            p.policy,
            p.final_mean_regret(),
            2.0 * p.final_se()
        );
    }
    Ok(())
}

fn parse_group_profile(entries: &[String]) -> Result<Vec<(usize, usize)>> {
    entries
        .iter()
        .map(|e| {
            let (n, k) = e
                .split_once(':')
                .ok_or_else(|| CsbError::invalid("group profile entries must be `segments:size`"))?;
            Ok((
                n.trim().parse().map_err(|_| CsbError::invalid("bad segment count"))?,
                k.trim().parse().map_err(|_| CsbError::invalid("bad group size"))?,
            ))
        })
        .collect()
}

/// Smallest across breakpoints of the largest per-arm post-truncation
/// mean shift.
fn min_change_magnitude(scenario: &Scenario) -> Option<f64> {
    let segments = scenario.dist_segments.len();
    (0..segments.saturating_sub(1))
        .map(|seg| {
            let a = scenario.truncated_means(seg);
            let b = scenario.truncated_means(seg + 1);
            a.iter()
                .zip(&b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0_f64, f64::max)
        })
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.min(m))))
}

fn bound_params(args: &BoundsArgs) -> Result<BoundParams> {
    if let Some(path) = &args.from_scenario {
        let scenario = Scenario::from_json(&std::fs::read_to_string(path).map_err(|e| {
            CsbError::invalid(format!("cannot read {}: {e}", path.display()))
        })?)?;
        let (delta_min, delta_max) = gaps_of(&scenario)?;
        let group_profile = (0..scenario.grouping.len())
            .map(|g| (scenario.group_segment_count(g), scenario.grouping[g].len()))
            .collect();
        return Ok(BoundParams {
            omega_max: omega_max_of(&scenario)?,
            m: scenario.super_arm_size,
            k: scenario.arm_count,
            horizon: scenario.horizon,
            delta_min,
            delta_max,
            delta: args
                .delta
                .unwrap_or(1.0 / scenario.horizon as f64),
            p: args.p,
            max_delay: args.max_delay,
            group_profile,
            graph_segments: scenario.graph_segments.len(),
            delta_min_change: args
                .delta_min_change
                .or_else(|| min_change_magnitude(&scenario))
                .unwrap_or(delta_min),
        });
    }
    let group_profile = match &args.group_profile {
        Some(entries) => parse_group_profile(entries)?,
        None => vec![(1, args.arms)],
    };
    Ok(BoundParams {
        omega_max: args.omega_max,
        m: args.m,
        k: args.arms,
        horizon: args.horizon,
        delta_min: args.delta_min,
        delta_max: args.delta_max,
        delta: args.delta.unwrap_or(1.0 / args.horizon as f64),
        p: args.p,
        max_delay: args.max_delay,
        group_profile,
        graph_segments: args.graph_segments,
        delta_min_change: args.delta_min_change.unwrap_or(args.delta_min),
    })
}

fn bounds(args: &BoundsArgs) -> Result<()> {
    let params = bound_params(args)?;
    println!(
        "parameters: omega_max={:.4} m={} K={} T={} delta_min={:.4} delta_max={:.4}",
        params.omega_max, params.m, params.k, params.horizon, params.delta_min, params.delta_max
    );
    println!("lemma1  (stationary):       {:.4}", lemma1_bound(&params)?);
    println!("theorem1 (nonstationary):   {:.4}", theorem1_bound(&params)?);
    println!("corollary (order bound):    {:.4}", corollary_bound(&params)?);
    println!("remark1 increments (C1=C2=1, eta=1, s=0):");
    println!("  {:>5} {:>10} {:>10} {:>10}", "kappa", "local", "global", "group");
    for kappa in 1..=params.k {
        let local =
            remark1_increment(RestartCase::Local, 1.0, 1.0, kappa as f64, 1.0, 0.0, params.k);
        let global =
            remark1_increment(RestartCase::Global, 1.0, 1.0, kappa as f64, 1.0, 0.0, params.k);
        let group =
            remark1_increment(RestartCase::Group, 1.0, 1.0, kappa as f64, 1.0, 0.0, params.k);
        println!("  {kappa:>5} {local:>10.4} {global:>10.4} {group:>10.4}");
    }
    Ok(())
}

fn plot_command(args: &PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| CsbError::invalid(format!("cannot read {}: {e}", args.input.display())))?;
    let series = plot::series_from_aggregate_csv(&text)?;
    let (dist_changes, graph_changes) = match &args.scenario {
        Some(path) => {
            let scenario = Scenario::from_json(&std::fs::read_to_string(path).map_err(|e| {
                CsbError::invalid(format!("cannot read {}: {e}", path.display()))
            })?)?;
            (
                scenario
                    .dist_change_events()
                    .into_iter()
                    .map(|(round, _)| round)
                    .collect(),
                scenario.graph_change_rounds(),
            )
        }
        None => (Vec::new(), Vec::new()),
    };
    let svg = plot::render_svg(&series, &dist_changes, &graph_changes)?;
    write_file_atomic(&args.out, |buf| {
        buf.extend_from_slice(svg.as_bytes());
        Ok(())
    })?;
    println!("wrote {}", args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generate_args(out: PathBuf, seed: u64) -> GenerateArgs {
        GenerateArgs {
            config: None,
            paper_defaults: false,
            seed,
            out,
            arms: Some(5),
            horizon: Some(300),
            super_arm_size: None,
            groups: None,
            changes: Some(vec![0, 0]),
            density: Some(0.3),
            weight_min: None,
            weight_max: None,
            noise: None,
        }
    }

    #[test]
    fn generate_is_deterministic_and_valid() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        generate(&generate_args(a.clone(), 7)).unwrap();
        generate(&generate_args(b.clone(), 7)).unwrap();
        let ja = std::fs::read(&a).unwrap();
        assert_eq!(ja, std::fs::read(&b).unwrap());
        let s = Scenario::from_json(std::str::from_utf8(&ja).unwrap()).unwrap();
        assert_eq!(s.arm_count, 5);
        assert_eq!(s.graph_segments.len(), 1);
        assert_eq!(s.dist_segments.len(), 1);
    }

    #[test]
    fn run_writes_three_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let scenario_path = dir.path().join("s.json");
        generate(&generate_args(scenario_path.clone(), 1)).unwrap();
        let out = dir.path().join("results");
        run(&RunArgs {
            config: None,
            scenario: Some(scenario_path),
            policies: Some(vec!["cucb-sw".into(), "cts".into()]),
            reps: Some(2),
            seed: Some(1),
            out: Some(out.clone()),
        })
        .unwrap();
        for file in ["rounds.csv", "aggregate.csv", "events.csv"] {
            assert!(out.join(file).exists(), "{file} missing");
        }
    }

    #[test]
    fn bounds_from_flags_matches_calculator() {
        let args = BoundsArgs {
            from_scenario: None,
            omega_max: 1.0,
            m: 1,
            arms: 1,
            horizon: 3,
            delta_min: 1.0,
            delta_max: 1.0,
            delta: None,
            p: 0.0,
            max_delay: 0.0,
            group_profile: None,
            graph_segments: 1,
            delta_min_change: None,
        };
        let params = bound_params(&args).unwrap();
        assert!(lemma1_bound(&params).unwrap() > 0.0);
        bounds(&args).unwrap();
    }

    #[test]
    fn group_profile_parsing() {
        assert_eq!(
            parse_group_profile(&["3:6".into(), "2:6".into()]).unwrap(),
            vec![(3, 6), (2, 6)]
        );
        assert!(parse_group_profile(&["3x6".into()]).is_err());
    }
}
