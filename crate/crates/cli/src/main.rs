use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fragsim::frag_codec::FrameModel;
use fragsim::harness::{aggregate_files, run_experiment, table1_check, Scenario};
use fragsim::node_stack::Strategy;
use fragsim::sim_core::PdrCurve;
use fragsim::topology::{
    build_topology, parse_site_plan, save_topology, write_site_plan, SelectionRule, SiteParams, SitePlan,
};

/// Fragment forwarding vs. hop-wise reassembly on a simulated 802.15.4 mesh.
#[derive(Parser)]
#[command(name = "fragsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select a tree of nodes from a site plan and write a topology file.
    GenerateTopology(GenerateArgs),
    /// Run every configuration of a scenario and write per-run and aggregate files.
    Run(RunArgs),
    /// Fold run files into one aggregate JSON document.
    Aggregate(AggregateArgs),
    /// Check the payload to fragment count mapping of the reference payload table.
    Table1Check(Table1Args),
}

#[derive(Args)]
struct GenerateArgs {
    /// Site plan file; a synthetic grid-and-offices plan is used when absent.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Seed of the synthetic site plan.
    #[arg(long, default_value_t = 1)]
    plan_seed: u64,
    /// Also write the site plan used.
    #[arg(long)]
    write_plan: Option<PathBuf>,
    /// Sink node id; defaults to the first node of the plan.
    #[arg(long)]
    sink: Option<u16>,
    /// Seed of the breadth-first member selection.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Try successive seeds until the tree has exactly this many hops.
    #[arg(long)]
    max_hops: Option<u32>,
    /// Seeds to try with --max-hops.
    #[arg(long, default_value_t = 1000)]
    attempts: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long, short)]
    scenario: PathBuf,
    /// Directory for run files and aggregate.json.
    #[arg(long, short)]
    out: PathBuf,
    /// Override the scenario's strategies.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    /// Override the scenario's payload sizes.
    #[arg(long, value_delimiter = ',')]
    payloads: Option<Vec<usize>>,
    /// Override the scenario's seeds (and run count).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Override the send interval bounds in seconds, as LO,HI.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    interval: Option<Vec<f64>>,
    /// Override packets per source.
    #[arg(long)]
    packets: Option<u32>,
    /// Force perfect links and unbounded buffers.
    #[arg(long)]
    lossless: bool,
}

#[derive(Args)]
struct AggregateArgs {
    /// Run files of one scenario.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Table1Args {
    #[arg(long)]
    mtu: Option<usize>,
    #[arg(long)]
    l2_overhead: Option<usize>,
    #[arg(long)]
    compressed_header: Option<usize>,
}

fn generate(a: GenerateArgs) -> Result<()> {
    let plan = match &a.plan {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_site_plan(&text)?
        }
        None => SitePlan::synthetic(&SiteParams::default(), a.plan_seed),
    };
    if let Some(p) = &a.write_plan {
        std::fs::write(p, write_site_plan(&plan)).with_context(|| format!("writing {}", p.display()))?;
    }
    let sink = a.sink.unwrap_or_else(|| plan.default_sink());
    let rule = SelectionRule::default();
    let curve = PdrCurve::default();
    let seeds = match a.max_hops {
        Some(_) => a.seed..a.seed.saturating_add(a.attempts),
        None => a.seed..a.seed + 1,
    };
    let mut last_err = None;
    for seed in seeds {
        match build_topology(&plan, sink, seed, &rule, &curve) {
            Ok(t) if a.max_hops.is_some_and(|h| t.max_hops() != h) || !t.has_bottleneck() => continue,
            Ok(t) => {
                save_topology(&t, &a.out)?;
                println!("seed {seed}: {} nodes, max {} hops, written to {}", t.len(), t.max_hops(), a.out.display());
                return Ok(());
            }
            Err(e) => last_err = Some(e),
        }
    }
    match last_err {
        Some(e) if a.max_hops.is_none() => Err(e.into()),
        _ => bail!("no seed produced a matching topology"),
    }
}

fn run(a: RunArgs) -> Result<bool> {
    let mut s = Scenario::from_file(&a.scenario)?;
    if let Some(v) = a.strategies {
        s.strategies = v;
    }
    if let Some(v) = a.payloads {
        s.payloads = v;
    }
    if let Some(v) = a.seeds {
        s.runs = v.len() as u32;
        s.seeds = v;
    }
    if let Some(v) = a.interval {
        s.interval_s = [v[0], v[1]];
    }
    if let Some(v) = a.packets {
        s.packets_per_source = v;
    }
    s.lossless |= a.lossless;
    let out = run_experiment(&s, &a.out)?;
    let mut healthy = true;
    for series in &out.aggregate.series {
        println!(
            "{:<9} {:>5} B {:>2} frag  pdr {:.3}  l2 retx/node {:>7.1}  rbuf full {:>7.1}  violations {}",
            series.strategy,
            series.payload,
            series.fragments,
            series.pdr.mean,
            series.l2_retransmissions.mean,
            series.rbuf_full.mean,
            series.violations
        );
        healthy &= series.violations == 0;
    }
    println!("{} run files and {} written", out.run_files.len(), out.aggregate_file.display());
    Ok(healthy)
}

fn aggregate(a: AggregateArgs) -> Result<()> {
    let agg = aggregate_files(&a.files)?;
    match &a.out {
        Some(p) => std::fs::write(p, agg.to_json()).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{}", agg.to_json()),
    }
    Ok(())
}

fn table1(a: Table1Args) -> bool {
    let mut model = FrameModel::default();
    model.mtu = a.mtu.unwrap_or(model.mtu);
    model.l2_overhead = a.l2_overhead.unwrap_or(model.l2_overhead);
    model.compressed_header = a.compressed_header.unwrap_or(model.compressed_header);
    let rows = table1_check(&model);
    for r in &rows {
        println!("{r}");
    }
    rows.iter().all(|r| r.ok())
}

fn exit(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenerateTopology(a) => generate(a).map(|_| true),
        Command::Run(a) => run(a),
        Command::Aggregate(a) => aggregate(a).map(|_| true),
        Command::Table1Check(a) => Ok(table1(a)),
    };
    match result {
        Ok(ok) => exit(ok),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
