use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use cellfree::complexity::complexity;
use cellfree::experiment::{run_experiment, worker_pool, ExperimentSpec, RzfRegularization, Sweep, SweepVariable};
use cellfree::power::Policy;
use cellfree::precoding::Scheme;
use cellfree::validate::run_checks;
use cellfree::{generate_snapshot, NetworkConfig};

/// Cell-free massive MIMO downlink simulator.
///
/// Worker threads come from CELLFREE_THREADS (default: all cores).
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one network and print it as JSON.
    Snapshot {
        #[command(flatten)]
        net: NetFlags,
        /// Snapshot seed (defaults to the network seed).
        #[arg(long)]
        snapshot_seed: Option<u64>,
        /// Write to a file instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run a snapshot sweep and write CSV/JSON results.
    Run(RunFlags),
    /// Print per-AP operation counts versus the number of strong pilots.
    Complexity {
        #[arg(long, default_value_t = 16)]
        antennas: usize,
        #[arg(long, default_value_t = 10)]
        pilots: usize,
        #[arg(long, default_value_t = 20)]
        ues: usize,
        /// Downlink data samples per coherence block.
        #[arg(long, default_value_t = 95)]
        data_len: usize,
        /// Only this number of strong pilots (default: 0..=pilots).
        #[arg(long)]
        strong: Option<usize>,
    },
    /// Run the built-in invariant checks.
    Validate,
}

/// Network overrides; every flag maps to a `[network]` key.
#[derive(Args)]
struct NetFlags {
    /// TOML file; keys under `[network]` (or top-level for `snapshot`) win over flags.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    aps: Option<usize>,
    #[arg(long)]
    antennas: Option<usize>,
    #[arg(long)]
    ues: Option<usize>,
    #[arg(long)]
    pilots: Option<usize>,
    #[arg(long)]
    grouping: Option<f64>,
    #[arg(long)]
    clustering: Option<f64>,
    #[arg(long)]
    area: Option<f64>,
    #[arg(long)]
    mc_realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl NetFlags {
    fn apply(&self, cfg: &mut NetworkConfig) {
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut cfg.num_aps, self.aps);
        set(&mut cfg.antennas_per_ap, self.antennas);
        set(&mut cfg.num_ues, self.ues);
        set(&mut cfg.pilot_len, self.pilots);
        set(&mut cfg.mc_realizations, self.mc_realizations);
        if let Some(v) = self.grouping {
            cfg.grouping_threshold = v;
        }
        if let Some(v) = self.clustering {
            cfg.clustering_threshold = v;
        }
        if let Some(v) = self.area {
            cfg.area_side_m = v;
        }
        if let Some(v) = self.seed {
            cfg.rng_seed = v;
        }
    }
}

#[derive(Args)]
struct RunFlags {
    #[command(flatten)]
    net: NetFlags,
    /// Comma-separated: mrt, fzf, pzf, ppzf, ppzf-no-mrt, rzf.
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<Scheme>,
    /// Comma-separated: heuristic, maxmin.
    #[arg(long, value_delimiter = ',')]
    policies: Vec<Policy>,
    #[arg(long)]
    snapshots: Option<usize>,
    /// One of antennas_per_ap (M), pilot_len (tau_p), grouping_threshold
    /// (upsilon), clustering_threshold (kappa), num_ues (K).
    #[arg(long, requires = "values")]
    sweep: Option<SweepVariable>,
    #[arg(long, value_delimiter = ',', requires = "sweep")]
    values: Vec<f64>,
    /// Also evaluate closed-form schemes by Monte-Carlo.
    #[arg(long)]
    monte_carlo: bool,
    /// heuristic or allocated.
    #[arg(long)]
    rzf_regularization: Option<RzfRegularization>,
    #[arg(long)]
    rzf_realizations: Option<usize>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Recursively overwrites `base` with the entries of `top`.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn read_table(path: &PathBuf) -> anyhow::Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse::<toml::Table>().with_context(|| format!("parsing {}", path.display()))
}

fn network(flags: &NetFlags) -> anyhow::Result<NetworkConfig> {
    let mut cfg = NetworkConfig::default();
    flags.apply(&mut cfg);
    if let Some(path) = &flags.config {
        let mut base = toml::Table::try_from(&cfg)?;
        let mut file = read_table(path)?;
        let top = match file.remove("network") {
            Some(toml::Value::Table(t)) => t,
            _ => file,
        };
        merge(&mut base, top);
        cfg = toml::Value::Table(base).try_into()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(flags: &RunFlags) -> anyhow::Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    flags.net.apply(&mut spec.network);
    if !flags.schemes.is_empty() {
        spec.schemes = flags.schemes.clone();
    }
    if !flags.policies.is_empty() {
        spec.policies = flags.policies.clone();
    }
    if let Some(n) = flags.snapshots {
        spec.snapshots = n;
    }
    if let Some(variable) = flags.sweep {
        spec.sweep = Some(Sweep { variable, values: flags.values.clone() });
    }
    spec.monte_carlo |= flags.monte_carlo;
    if let Some(r) = flags.rzf_regularization {
        spec.rzf_regularization = r;
    }
    if let Some(n) = flags.rzf_realizations {
        spec.rzf_realizations = n;
    }
    if let Some(o) = &flags.output {
        spec.output_dir = o.clone();
    }
    if let Some(path) = &flags.net.config {
        let mut base = toml::Table::try_from(&spec)?;
        merge(&mut base, read_table(path)?);
        spec = toml::Value::Table(base).try_into().with_context(|| format!("invalid experiment in {}", path.display()))?;
    }
    spec.validate()?;
    Ok(spec)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Snapshot { net, snapshot_seed, output } => {
            let cfg = network(&net)?;
            let snap = generate_snapshot(&cfg, snapshot_seed.unwrap_or(cfg.rng_seed))?;
            let json = serde_json::to_string_pretty(&snap.dump())?;
            match output {
                Some(p) => std::fs::write(&p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
                None => println!("{json}"),
            }
        }
        Command::Run(flags) => {
            let spec = experiment(&flags)?;
            let out = worker_pool()?.install(|| run_experiment(&spec))?;
            println!("scheme,policy,method,value,median_se,p05_se,median_sum_se");
            for s in &out.summary {
                let value = s.value.map(|v| v.to_string()).unwrap_or_default();
                println!(
                    "{},{},{},{},{:.4},{:.4},{:.4}",
                    s.scheme,
                    s.policy.name(),
                    s.method.name(),
                    value,
                    s.median_se,
                    s.p05_se,
                    s.median_sum_se
                );
            }
            eprintln!("wrote {} records to {}", out.records.len(), spec.output_dir.display());
        }
        Command::Complexity { antennas, pilots, ues, data_len, strong } => {
            let range = match strong {
                Some(s) => s..=s,
                None => 0..=pilots,
            };
            println!("strong_pilots,scheme,multiplications,divisions,transmission,normalized");
            for ts in range {
                let r = complexity(antennas, pilots, ts, data_len, ues)?;
                for c in &r.costs {
                    println!("{ts},{},{},{},{},{:.6}", c.scheme, c.multiplications, c.divisions, c.transmission, c.normalized);
                }
            }
        }
        Command::Validate => {
            let checks = run_checks()?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                println!("{} {:<40} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if failed > 0 {
                bail!("{failed} of {} checks failed", checks.len());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
