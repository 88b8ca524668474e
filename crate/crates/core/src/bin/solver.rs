use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use magsplit::cli::{run_control, run_evolve, run_sweep, CliError, ControlMode, ControlReport, RunOptions, SweepParam};
use magsplit::grid::Stencil;

#[derive(Parser)]
#[command(name = "solver", version, about = "Magnetic Schrödinger / Hartree solver on a truncated cube")]
struct Args {
    /// Also write the linear Hamiltonian as `row col re im` triplets.
    #[arg(long, global = true, value_name = "PATH")]
    export_matrix: Option<PathBuf>,
    /// Override the Laplacian stencil from the config.
    #[arg(long, global = true, value_enum)]
    stencil: Option<StencilArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StencilArg {
    Paper,
    Compact,
}

#[derive(Subcommand)]
enum Command {
    /// Run one evolution and write timeseries.csv and snapshots.
    Evolve { config: PathBuf },
    /// Convergence sweep over one parameter; writes sweep.csv.
    Sweep {
        config: PathBuf,
        #[arg(long, value_parser = parse_param)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Evaluate, differentiate or search the control functional.
    Control {
        config: PathBuf,
        #[arg(long, value_parser = parse_mode, default_value = "eval")]
        mode: ControlMode,
    },
}

fn parse_param(s: &str) -> Result<SweepParam, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<ControlMode, String> {
    s.parse()
}

fn run(args: Args) -> Result<(), CliError> {
    let opts = RunOptions {
        stencil: args.stencil.map(|s| match s {
            StencilArg::Paper => Stencil::Paper,
            StencilArg::Compact => Stencil::Compact,
        }),
        export_matrix: args.export_matrix,
    };
    match args.command {
        Command::Evolve { config } => {
            let r = run_evolve(&config, &opts)?;
            println!(
                "t={} mass={} energy={} drift={:e}",
                r.last.t, r.last.mass, r.last.energy, r.mass_drift
            );
            for f in r.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Sweep { config, param, values } => {
            for row in run_sweep(&config, param, &values, &opts)? {
                let rate = row.rate.map(|r| format!("{r:.3}")).unwrap_or_default();
                println!("{}={} error={:e} rate={rate}", param.name(), row.value, row.error);
            }
        }
        Command::Control { config, mode } => match run_control(&config, mode, &opts)? {
            ControlReport::Eval { state, penalty } => {
                println!("I(u)={} state={state} penalty={penalty}", state + penalty)
            }
            ControlReport::Gradcheck(rows) => {
                for r in rows {
                    println!(
                        "direction {} adjoint={} fd={} rel_error={:e}",
                        r.direction, r.adjoint, r.finite_difference, r.rel_error
                    );
                }
            }
            ControlReport::Search(s) => {
                println!("baseline={} best={} evaluations={}", s.baseline, s.best, s.evaluations);
                for (k, a) in s.coefficients.iter().enumerate() {
                    println!("a_{}={a}", k + 1);
                }
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("solver: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
