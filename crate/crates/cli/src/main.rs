use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spde_cli::commands::{
    cmd_blowup_demo, cmd_contractivity, cmd_convergence, cmd_paper_suite, cmd_simulate,
    SuiteOptions,
};
use spde_cli::presets::{all_presets, figure, DEFAULT_TRIALS, FIGURE_IDS};
use spde_cli::{parse_config, CliError, CliResult, ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "spde-lab",
    version,
    about = "Monte Carlo laboratory for 1D stochastic Allen-Cahn type equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Experiment file with `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output CSV path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble and write per-record statistics.
    Simulate(Overrides),
    /// Strong-error rates against a finer reference.
    Convergence(Overrides),
    /// Semi-implicit Euler blowup and the energy-growth check.
    BlowupDemo(Overrides),
    /// Distance between two solutions sharing one noise path.
    Contractivity(Overrides),
    /// Preset runs of one figure, one CSV per scheme and step.
    PaperSuite {
        /// Figure id (`fig1` ... `fig11`).
        #[arg(long, required_unless_present = "list")]
        figure: Option<String>,
        /// List figures and presets instead of running.
        #[arg(long)]
        list: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        /// Output directory.
        #[arg(long, default_value = "suite")]
        out: PathBuf,
        /// Override the figure's final time.
        #[arg(long)]
        t_final: Option<f64>,
    },
}

fn load(o: &Overrides) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(&o.config)
        .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", o.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(t) = o.trials {
        if t == 0 {
            return Err(ConfigError::Invalid("--trials must be positive".into()).into());
        }
        cfg.trials = t;
    }
    if o.out.is_some() {
        cfg.output.clone_from(&o.out);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(o) => {
            let cfg = load(&o)?;
            let out = cmd_simulate(&cfg)?;
            match &cfg.output {
                Some(p) => eprintln!(
                    "wrote {} records to {} ({} blown up)",
                    out.summary.records.len(),
                    p.display(),
                    out.summary.blown_up
                ),
                None => print!("{}", out.csv),
            }
        }
        Command::Convergence(o) => {
            let cfg = load(&o)?;
            let out = cmd_convergence(&cfg)?;
            if cfg.output.is_none() {
                print!("{}", out.csv);
            }
            eprintln!("{out}");
        }
        Command::BlowupDemo(o) => {
            let cfg = load(&o)?;
            println!("{}", cmd_blowup_demo(&cfg)?);
        }
        Command::Contractivity(o) => {
            let cfg = load(&o)?;
            let out = cmd_contractivity(&cfg)?;
            if cfg.output.is_none() {
                print!("{}", out.csv);
            }
            eprintln!("decay rate of log ||u - v||: {:.4}", out.decay_rate);
        }
        Command::PaperSuite {
            figure: id,
            list,
            seed,
            trials,
            out,
            t_final,
        } => {
            if list {
                for id in FIGURE_IDS {
                    let f = figure(id).expect("listed figure exists");
                    println!("{id}: {} (T = {})", f.title, f.t_final);
                }
                for p in all_presets() {
                    match p.caveat {
                        Some(c) => println!("{}  [note: {c}]", p.name()),
                        None => println!("{}", p.name()),
                    }
                }
                return Ok(());
            }
            let id = id.expect("clap enforces --figure");
            if trials == 0 {
                return Err(ConfigError::Invalid("--trials must be positive".into()).into());
            }
            let opts = SuiteOptions {
                trials,
                seed,
                out_dir: out,
                t_final,
            };
            let report = cmd_paper_suite(&id, &opts)?;
            for f in &report.files {
                println!("{}", f.display());
            }
            for (name, note) in &report.caveats {
                eprintln!("note ({name}): {note}");
            }
            for (f, n) in &report.blowups {
                eprintln!("{}: {n} trial(s) blew up", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_byte(&e))
        }
    }
}

fn exit_byte(e: &CliError) -> u8 {
    e.exit_code() as u8
}
