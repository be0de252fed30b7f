//! `idlewave` command-line driver.

mod plots;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use idlewave::des::{classify_bsp, simulate_bsp, BspSpec, Contention};
use idlewave::scenario::{preset, run_scenario, Overrides, PRESETS};
use idlewave::{DelayEvent, DistanceSet, EventList, Topology};

#[derive(Parser)]
#[command(name = "idlewave", version, about = "Phase-oscillator model of bulk-synchronous parallel programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario files.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Output directory; with several configs, one subdirectory each.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Render SVG plots from the CSV files of a finished run.
    Plot { dir: PathBuf },
    /// Print a built-in scenario as TOML.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
        /// Write to a file instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the discrete-event oracle on a ring.
    Des {
        #[arg(long, default_value_t = 18)]
        n: usize,
        #[arg(long, default_value_t = 0.8)]
        t_comp: f64,
        #[arg(long, default_value_t = 0.2)]
        t_comm: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,-1")]
        distances: Vec<i64>,
        /// Saturation point of the shared resource; unlimited when absent.
        #[arg(long)]
        n_sat: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        /// Process that receives a one-off phase kick.
        #[arg(long)]
        kick_process: Option<usize>,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        kick: f64,
        /// CSV file for the completion timestamps.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<idlewave::Error>() {
            Some(e) if e.is_numerical() => 3,
            _ => 2,
        };
        Failure { code, error }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { configs, out, seed, t_end } => run(&configs, &out, Overrides { seed, t_end }),
        Command::Plot { dir } => {
            let written = plots::emit_plots(&dir)?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Preset { name, out } => {
            let text = preset(&name).expect("validated by clap").to_toml();
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Des { n, t_comp, t_comm, distances, n_sat, iterations, kick_process, kick, out } => {
            let topology = Topology::build_from_distances(n, &DistanceSet::periodic(distances)).map_err(anyhow::Error::from)?;
            let events = match kick_process {
                Some(p) => EventList::new(vec![DelayEvent::kick(p, 0.0, kick)]),
                None => EventList::empty(),
            };
            let contention = n_sat.map_or(Contention::None, |n_sat| Contention::Saturating { n_sat });
            let spec = BspSpec::new(topology, t_comp, t_comm).with_contention(contention).with_events(events);
            let tl = simulate_bsp(&spec, iterations).map_err(anyhow::Error::from)?;
            if let Some(path) = out {
                let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                idlewave::output::write_bsp_csv(std::io::BufWriter::new(file), &tl).context("writing DES timestamps")?;
            }
            let last = tl.iterations() - 1;
            println!("behaviour: {:?}", classify_bsp(&tl));
            println!("final stagger: {} s", tl.stagger(last));
            Ok(())
        }
    }
}

fn run(configs: &[PathBuf], out: &Path, overrides: Overrides) -> Result<(), Failure> {
    if let [config] = configs {
        return run_one(config, out, overrides);
    }
    let results: Vec<(PathBuf, Result<(), Failure>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|config| {
                let stem = config.file_stem().map_or_else(|| "scenario".into(), |s| s.to_owned());
                let dir = out.join(stem);
                scope.spawn(move || (config.clone(), run_one(config, &dir, overrides)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scenario worker panicked")).collect()
    });
    let mut worst: Option<Failure> = None;
    let mut failed = 0;
    for (config, result) in results {
        if let Err(f) = result {
            failed += 1;
            eprintln!("error: {}: {:#}", config.display(), f.error);
            if worst.as_ref().is_none_or(|w| f.code > w.code) {
                worst = Some(f);
            }
        }
    }
    match worst {
        None => Ok(()),
        Some(f) => Err(Failure { code: f.code, error: anyhow::anyhow!("{failed} of {} scenarios failed", configs.len()) }),
    }
}

fn run_one(config: &Path, out: &Path, overrides: Overrides) -> Result<(), Failure> {
    let summary = run_scenario(config, out, overrides)
        .map_err(|e| Failure::from(anyhow::Error::from(e).context(config.display().to_string())))?;
    let resync = summary.resync_time.map_or("none".to_string(), |t| format!("{t} s"));
    println!("{}: wrote {} (resync: {resync})", summary.name, out.display());
    Ok(())
}
