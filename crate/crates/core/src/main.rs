use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use wsn_collab::sim::output::{check_parent, describe, emit_results, render_sweep_summary};
use wsn_collab::sim::runner::trial_topology;
use wsn_collab::sim::selfcheck::run_checks;
use wsn_collab::sim::{geometric_layout, run_scenario, sweep, Mode, ScenarioConfig, TopologyConfig};
use wsn_collab::{Error, Result};

#[derive(Parser)]
#[command(name = "wsn-collab", version, about = "Collaborative sequential estimation over sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). The built-in reference scenario is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the mode (static, centralized, decentralized, benchmark-only, timevarying).
    #[arg(long)]
    mode: Option<String>,
    /// Override the number of trials.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its result table.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output table (CSV); the configuration is echoed to `<out>.config.toml`.
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
    },
    /// Run the scenario once per value of its [sweep] section.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Output directory (must exist).
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the topology (and sensor positions for geometric graphs).
    Topology {
        #[command(flatten)]
        common: Common,
        /// Trial whose layout to print.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Run the identity and invariant checks.
    Check {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::from_file(p)?,
        None => ScenarioConfig::reference(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(m) = &common.mode {
        cfg.mode = Mode::parse(m)?;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common, out } => {
            let cfg = load(&common)?;
            check_parent(&out)?;
            let result = run_scenario(&cfg)?;
            emit_results(&result, &out)?;
            info!("{}", describe(&result));
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Sweep { common, out } => {
            let cfg = load(&common)?;
            if !out.is_dir() {
                return Err(Error::Io {
                    path: out,
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "directory does not exist"),
                });
            }
            let spec = cfg.sweep.clone().ok_or_else(|| Error::Config("configuration has no [sweep] section".into()))?;
            let runs = sweep(&cfg)?;
            let name = spec.parameter.name();
            for (v, r) in &runs {
                let path = out.join(format!("{name}_{v}.csv"));
                emit_results(r, &path)?;
                info!("{name} = {v}: {}", describe(r));
            }
            let summary = out.join(format!("{name}_summary.csv"));
            std::fs::write(&summary, render_sweep_summary(name, &runs))
                .map_err(|source| Error::Io { path: summary.clone(), source })?;
            println!("wrote {}", summary.display());
            Ok(true)
        }
        Command::Topology { common, trial } => {
            let cfg = load(&common)?;
            if let TopologyConfig::Geometric { seed, radius } = &cfg.topology {
                let layout = geometric_layout(cfg.dims.sensors, cfg.dims.transmitters, *seed, trial)?;
                println!("# radius {radius}");
                println!("sensor,x,y,transmitter");
                for (i, p) in layout.positions.iter().enumerate() {
                    println!("{},{:.6},{:.6},{}", i + 1, p[0], p[1], i < layout.transmitters);
                }
            }
            let topo = trial_topology(&cfg, trial)?;
            println!("# adjacency ({} x {})", topo.transmitters(), topo.sensors());
            for row in topo.adjacency().row_iter() {
                let cells: Vec<String> = row.iter().map(|v| format!("{}", *v as u8)).collect();
                println!("{}", cells.join(" "));
            }
            Ok(true)
        }
        Command::Check { seed } => {
            let outcomes = run_checks(seed);
            let mut ok = true;
            for o in &outcomes {
                println!("[{}] {}: {}", if o.passed { "pass" } else { "FAIL" }, o.name, o.detail);
                ok &= o.passed;
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: one or more checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
