use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgMatches, Args, FromArgMatches, Parser, Subcommand};

use ngsim::eventlog::EventLog;
use ngsim::harness::{
    build_topology, run_simulation, run_sweep, SimConfig, SweepAxis, SweepSpec, CONFIG_KEYS,
};
use ngsim::incentive::{bounds_table, censorship_wait, sig_figs, window_closing_alpha};
use ngsim::metrics::{MetricsParams, MetricsReport};

/// Directory searched for config files given by bare name.
const CONFIG_DIR_ENV: &str = "NGSIM_CONFIG_DIR";

#[derive(Parser)]
#[command(
    name = "ngsim",
    version,
    about = "Bitcoin and Bitcoin-NG network simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and print its metrics.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the event log here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write the metrics report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the report as a CSV header and row.
        #[arg(long)]
        csv: bool,
    },
    /// Sweep block frequency or size over several seeds and emit CSV.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Swept parameter: `frequency` (blocks per second) or `size` (bytes).
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values; fractions like `1/600` are accepted.
        #[arg(long, value_delimiter = ',', value_parser = parse_number)]
        values: Vec<f64>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        /// On frequency sweeps, resize blocks to keep the base tx/s.
        #[arg(long, alias = "constant_payload", default_value_t = true, action = clap::ArgAction::Set)]
        constant_payload: bool,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute metrics from an event log file.
    Metrics {
        /// Event log to analyze.
        log: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.9)]
        delta: f64,
        #[arg(long, alias = "warmup_fraction", default_value_t = 0.05)]
        warmup_fraction: f64,
        #[arg(long)]
        csv: bool,
    },
    /// Print the leader fee share bounds as CSV.
    Bounds {
        /// Comma-separated attacker shares.
        #[arg(
            long,
            value_delimiter = ',',
            value_parser = parse_number,
            default_value = "0,0.05,0.1,0.15,0.2,0.25,0.29,0.3,0.33,0.4,0.45"
        )]
        alphas: Vec<f64>,
        /// Leader share tested for feasibility.
        #[arg(long, default_value_t = 0.4)]
        share: f64,
        /// Also print the attacker share at which no split is feasible.
        #[arg(long)]
        closing: bool,
        /// Print the expected wait of a censored transaction given this
        /// honest power fraction.
        #[arg(long, alias = "honest_fraction")]
        honest_fraction: Option<f64>,
        /// Block interval used with `--honest-fraction`.
        #[arg(long, default_value_t = 600.0)]
        interval: f64,
    },
    /// Generate the overlay a run would use and print its edges.
    GenTopology {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// `--config` plus one override flag per config key.
struct ConfigArgs {
    config: Option<String>,
    overrides: Vec<(&'static str, String)>,
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let overrides = CONFIG_KEYS
            .iter()
            .filter_map(|&k| m.get_one::<String>(k).map(|v| (k, v.clone())))
            .collect();
        Ok(ConfigArgs {
            config: m.get_one::<String>("config").cloned(),
            overrides,
        })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: clap::Command) -> clap::Command {
        let cmd = cmd.arg(
            clap::Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help(format!(
                "Config file (`key = value` lines); bare names are looked up in ${CONFIG_DIR_ENV}"
            )),
        );
        CONFIG_KEYS.iter().fold(cmd, |cmd, &k| {
            cmd.arg(
                clap::Arg::new(k)
                    .long(k)
                    .value_name("VALUE")
                    .help_heading("Config overrides"),
            )
        })
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        Self::augment_args(cmd)
    }
}

fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
            let d: f64 = d.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
            if d == 0.0 {
                return Err(format!("`{s}`: division by zero"));
            }
            Ok(n / d)
        }
        None => s.parse().map_err(|e| format!("`{s}`: {e}")),
    }
}

fn resolve_config_path(name: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.exists() {
        return Ok(direct);
    }
    if let Ok(dir) = std::env::var(CONFIG_DIR_ENV) {
        let dir = Path::new(&dir);
        for candidate in [dir.join(name), dir.join(format!("{name}.conf"))] {
            if candidate.exists() {
                return Ok(candidate);
            }
        }
    }
    bail!("config `{name}` not found (also searched ${CONFIG_DIR_ENV})")
}

impl ConfigArgs {
    fn build(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(name) => {
                let path = resolve_config_path(name)?;
                SimConfig::load(&path).with_context(|| format!("loading {}", path.display()))?
            }
            None => SimConfig::default(),
        };
        // The protocol goes first so later keys apply to the chosen profile.
        for (k, v) in self.overrides.iter().filter(|(k, _)| *k == "protocol") {
            cfg.set(k, v)?;
        }
        for (k, v) in self.overrides.iter().filter(|(k, _)| *k != "protocol") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render_report(r: &MetricsReport, csv: bool) -> String {
    if csv {
        format!("{}\n{}\n", MetricsReport::csv_header(), r.to_csv_row())
    } else {
        r.to_kv()
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            log,
            out,
            csv,
        } => {
            let cfg = config.build()?;
            let outcome = run_simulation(&cfg)?;
            if let Some(path) = &log {
                outcome.log.write(path)?;
            }
            let report = outcome.metrics()?;
            emit(&render_report(&report, csv), out.as_deref())?;
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            constant_payload,
            out,
        } => {
            if values.is_empty() {
                bail!("--values needs at least one value");
            }
            if seeds.is_empty() {
                bail!("--seeds needs at least one seed");
            }
            let spec = SweepSpec {
                base: config.build()?,
                axis,
                values,
                constant_payload,
                seeds,
            };
            let result = run_sweep(&spec);
            for p in &result.points {
                for (seed, run) in spec.seeds.iter().zip(&p.runs) {
                    if let Err(e) = run {
                        eprintln!("{axis}={} seed={seed}: {e}", p.value);
                    }
                }
            }
            emit(&result.to_csv(), out.as_deref())?;
        }
        Command::Metrics {
            log,
            epsilon,
            delta,
            warmup_fraction,
            csv,
        } => {
            let log = EventLog::read(&log)?;
            let params = MetricsParams {
                epsilon,
                delta,
                warmup_fraction,
            };
            let report = MetricsReport::compute(&log, &params)?;
            print!("{}", render_report(&report, csv));
        }
        Command::Bounds {
            alphas,
            share,
            closing,
            honest_fraction,
            interval,
        } => {
            print!("{}", bounds_table(&alphas, share)?);
            if closing {
                match window_closing_alpha() {
                    Some(a) => println!("# window closes at alpha = {}", sig_figs(a, 6)),
                    None => println!("# window never closes"),
                }
            }
            if let Some(h) = honest_fraction {
                let wait = censorship_wait(h, interval)?;
                println!(
                    "# censored transaction waits {} s on average",
                    sig_figs(wait, 6)
                );
            }
        }
        Command::GenTopology { config, out } => {
            let cfg = config.build()?;
            emit(&build_topology(&cfg)?.to_text(), out.as_deref())?;
        }
    }
    Ok(())
}
