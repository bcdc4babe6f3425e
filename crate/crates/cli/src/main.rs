use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use trustlab::attack::{closed_form_cost, cost_grid, verify_cost_oracle, verify_grid, CostParams, OracleVerdict};
use trustlab::experiments::{
    parse_override, run_config_file, run_preset, similarity_heatmap, write_cost_curves, write_similarity_matrix,
    write_similarity_summary, Metadata, PresetId, SyntheticGraphSpec,
};
use trustlab::{Execution, ThreatModel};

#[derive(Parser)]
#[command(name = "trustlab", version, about = "Trust metric simulations and attack-cost analysis")]
struct Cli {
    /// Base seed; runs use seed, seed+1, ...
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of seeds per configuration.
    #[arg(long, global = true, default_value_t = 1)]
    seeds: usize,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Run batches on a single thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments of a TOML config file.
    Simulate { config: PathBuf },
    /// Closed-form attack costs: one point with --n-honest, otherwise the full grids.
    Cost(CostArgs),
    /// Similarity matrix of the synthetic camouflage graph.
    Similarity(SimilarityArgs),
    /// Run a named preset.
    Preset {
        name: String,
        /// Override a config key, e.g. --set f=0.6
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check every closed-form cost against the ledger oracle.
    Verify,
}

#[derive(Args)]
struct CostArgs {
    /// Threat models (A-F); all when omitted.
    models: Vec<String>,
    #[arg(long)]
    n_honest: Option<u32>,
    #[arg(long)]
    services: Option<u32>,
    #[arg(long)]
    trust_good: Option<f64>,
    #[arg(long)]
    trust_malicious: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_type_b: Option<u32>,
}

#[derive(Args)]
struct SimilarityArgs {
    /// Honest-rating level of the camouflage participants; repeatable.
    #[arg(long, default_values_t = [0.3, 0.5, 0.7, 0.9])]
    eta: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    n_regular: usize,
    #[arg(long, default_value_t = 30)]
    n_malicious: usize,
    #[arg(long, default_value_t = 1.0)]
    zipf_exponent: f64,
}

fn parse_models(names: &[String]) -> Result<Vec<ThreatModel>> {
    if names.is_empty() {
        return Ok(ThreatModel::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| ThreatModel::parse(n).with_context(|| format!("threat model {n:?}")))
        .collect()
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn cost(args: &CostArgs, seed: u64, out_dir: &Path) -> Result<()> {
    let models = parse_models(&args.models)?;
    let Some(n_honest) = args.n_honest else {
        let meta = Metadata::new(seed, "cost-grid").note("closed-form attack costs");
        print_paths(&write_cost_curves(out_dir, &meta, &models)?);
        return Ok(());
    };
    let d = CostParams::default();
    let params = CostParams {
        n_honest,
        authentic_services: args.services.unwrap_or(d.authentic_services),
        trust_good: args.trust_good.unwrap_or(d.trust_good),
        trust_malicious: args.trust_malicious.unwrap_or(d.trust_malicious),
        eta: args.eta.unwrap_or(d.eta),
        gamma: args.gamma.unwrap_or(d.gamma),
        n_type_b: args.n_type_b.or(d.n_type_b),
    };
    println!("model,n_malicious,n_type_b,dishonest_ratings,honest_ratings,authentic_services,total_ratings,raw_bound,oracle");
    for model in models {
        let r = closed_form_cost(model, &params).with_context(|| format!("model {model}"))?;
        let verdict = match verify_cost_oracle(model, &params)? {
            OracleVerdict::Confirmed => "confirmed".to_string(),
            refuted => format!("{refuted:?}"),
        };
        println!(
            "{model},{},{},{},{},{},{},{},{verdict}",
            r.n_malicious,
            r.n_type_b,
            r.dishonest_ratings,
            r.honest_ratings,
            r.authentic_services,
            r.total_ratings,
            r.raw_bound
        );
    }
    Ok(())
}

fn similarity(args: &SimilarityArgs, seed: u64, out_dir: &Path, exec: Execution) -> Result<()> {
    let meta = Metadata::new(
        seed,
        &format!("{}|{}|{}|{:?}", args.n_regular, args.n_malicious, args.zipf_exponent, args.eta),
    );
    let mut studies = Vec::new();
    let mut paths = Vec::new();
    for &eta in &args.eta {
        let spec = SyntheticGraphSpec {
            n_regular: args.n_regular,
            n_malicious: args.n_malicious,
            eta,
            zipf_exponent: args.zipf_exponent,
            ..SyntheticGraphSpec::default()
        };
        let study = similarity_heatmap(&spec, seed, exec)?;
        println!(
            "eta={eta}: good-good {:.4}, cross {:.4}, malicious-malicious {:.4}",
            study.mean_good_good, study.mean_cross, study.mean_malicious_malicious
        );
        let path = out_dir.join(format!("similarity_eta{eta}.csv"));
        write_similarity_matrix(&path, &meta, &study)?;
        paths.push(path);
        studies.push(study);
    }
    let path = out_dir.join("similarity_summary.csv");
    write_similarity_summary(&path, &meta, &studies)?;
    paths.push(path);
    print_paths(&paths);
    Ok(())
}

fn verify(exec: Execution) -> Result<bool> {
    let grid = cost_grid();
    let mut refuted = 0;
    for (g, v) in grid.iter().zip(verify_grid(&grid, exec)) {
        if !v?.is_confirmed() {
            refuted += 1;
            println!("refuted: {} {:?}", g.model, g.params);
        }
    }
    println!("{} of {} grid points confirmed", grid.len() - refuted, grid.len());
    Ok(refuted == 0)
}

fn run(cli: Cli) -> Result<bool> {
    if cli.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Simulate { config } => {
            let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
            let runs = run_config_file(&text, cli.seed, cli.seeds, &cli.out_dir, exec)?;
            for (label, r) in &runs {
                println!(
                    "{label} seed={} metric={} failed_fraction={:.4}",
                    r.config.seed, r.metric.name, r.failed_fraction
                );
            }
            println!("wrote summary.csv, trajectories.csv, services.csv to {}", cli.out_dir.display());
        }
        Command::Cost(args) => cost(args, seed, &cli.out_dir)?,
        Command::Similarity(args) => similarity(args, seed, &cli.out_dir, exec)?,
        Command::Preset { name, overrides } => {
            let preset = PresetId::parse(name)?;
            let overrides = overrides.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
            print_paths(&run_preset(preset, &overrides, seed, cli.seeds, &cli.out_dir, exec)?);
        }
        Command::Verify => return verify(exec),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
