use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use current_coupon_cli::config::{DecompositionArg, ExperimentConfig, Overrides};
use current_coupon_cli::report::format_value;
use current_coupon_cli::run::{
    admissibility_warning, run_baseline, run_compare, run_contract, run_verify, with_workers, xi_table,
};
use current_coupon_cli::CliError;

#[derive(Parser)]
#[command(name = "ccoupon", version, about = "Endogenous mortgage current-coupon experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo paths per grid point.
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true)]
    steps_per_year: Option<usize>,
    #[arg(long, global = true)]
    grid_lo: Option<f64>,
    #[arg(long, global = true)]
    grid_hi: Option<f64>,
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    #[arg(long, global = true, value_enum)]
    decomposition: Option<DecompositionArg>,
    /// Contraction stopping tolerance in basis points.
    #[arg(long, global = true)]
    tol_bps: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output path for the comparison CSV (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compare m0 + m1 with the contraction fixed point and write the CSV report.
    Compare,
    /// Pool-simulation cross-checks: par, estimator equivalence, survival, large-pool rate.
    Verify,
    /// Baseline coupons only.
    Baseline,
    /// Contraction fixed point only.
    Contract,
    /// Table of the amortization bound Xi(x) against 1/x.
    Xi {
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,3,5,10,20,30,60")]
        points: Vec<f64>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply(&Overrides {
        seed: common.seed,
        paths: common.paths,
        steps_per_year: common.steps_per_year,
        grid_lo: common.grid_lo,
        grid_hi: common.grid_hi,
        grid_n: common.grid_n,
        decomposition: common.decomposition,
        tol_bps: common.tol_bps,
        max_iter: common.max_iter,
        workers: common.workers,
        out: common.out.clone(),
    });
    config.validate()?;
    Ok(config)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = load(&cli.common)?;
    with_workers(config.mc.workers, || dispatch(&cli.command, &config))?
}

fn dispatch(command: &Command, config: &ExperimentConfig) -> Result<(), CliError> {
    if matches!(command, Command::Compare | Command::Verify | Command::Contract) {
        if let Some(w) = admissibility_warning(config)? {
            eprintln!("warning: {w}");
        }
    }
    match command {
        Command::Compare => {
            let outcome = run_compare(config)?;
            match &config.out {
                Some(path) => {
                    outcome.report.emit_csv(path)?;
                    eprintln!("wrote {} rows to {}", outcome.report.rows.len(), path.display());
                }
                None => print!("{}", outcome.report.to_csv_string(0)),
            }
            if !outcome.report.contraction_converged {
                eprintln!(
                    "warning: contraction did not converge in {} iterations",
                    outcome.report.contraction_iterations
                );
            }
        }
        Command::Verify => {
            let summary = run_verify(config)?;
            for c in &summary.checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = summary.checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::Verification(format!("{failed} check(s) failed")));
            }
        }
        Command::Baseline => {
            println!("x,m0_closed_form,m0_monte_carlo,m0_monte_carlo_se");
            for row in run_baseline(config)? {
                println!(
                    "{},{},{},{}",
                    format_value(row.x),
                    row.closed_form.map(format_value).unwrap_or_default(),
                    format_value(row.monte_carlo.value),
                    format_value(row.monte_carlo.std_error)
                );
            }
        }
        Command::Contract => {
            let report = run_contract(config)?;
            for (i, d) in report.sup_deltas.iter().enumerate() {
                eprintln!("iteration {}: sup change {:.3e}", i + 1, d);
            }
            eprintln!(
                "{} after {} iterations",
                if report.converged { "converged" } else { "not converged" },
                report.iterations_used
            );
            println!("x,m_contraction");
            let curve = report.final_curve();
            for (x, m) in curve.grid().iter().zip(curve.values()) {
                println!("{},{}", format_value(*x), format_value(*m));
            }
        }
        Command::Xi { points } => {
            println!("x,xi,inv_x");
            for (x, v, inv) in xi_table(points)? {
                println!("{},{},{}", format_value(x), format_value(v), format_value(inv));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
