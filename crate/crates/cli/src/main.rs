use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fluxcouple_cli::{cmd_solve, cmd_sweep, cmd_tune, config, CliError, RunOptions};

/// Anderson-accelerated flux-split coupling for stiff 1D transport.
#[derive(Parser)]
#[command(name = "fluxcouple", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single solve.
    Solve(Common),
    /// Sweep beta x m (x d) and write a heatmap table.
    Sweep(Common),
    /// Tune solver parameters for the fewest iterations.
    Tune(Common),
    /// Print the effective configuration as JSON.
    Config(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set accel.beta=0.4`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Noise and tuning seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps and tuning (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write SVG figures.
    #[arg(long)]
    plot: bool,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let (common, which) = match cli.command {
        Command::Solve(c) => (c, "solve"),
        Command::Sweep(c) => (c, "sweep"),
        Command::Tune(c) => (c, "tune"),
        Command::Config(c) => (c, "config"),
    };
    let opts = RunOptions {
        out_dir: common.out_dir,
        seed: common.seed,
        jobs: common.jobs,
        plot: common.plot,
    };
    let mut cfg = config::load(common.config.as_deref(), &common.overrides)?;
    opts.apply(&mut cfg);
    cfg.validate()?;
    let outcome = match which {
        "solve" => cmd_solve(&cfg)?,
        "sweep" => cmd_sweep(&cfg, opts.jobs)?,
        "tune" => cmd_tune(&cfg, opts.jobs)?,
        _ => {
            println!(
                "{}",
                serde_json::to_string_pretty(&cfg).expect("config serializes")
            );
            return Ok(0);
        }
    };
    println!("{}", outcome.summary);
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
