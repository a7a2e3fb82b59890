use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};
use gomea_cli::{run_single, run_sweep_file, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(spec) = &cli.sweep {
        return match run_sweep_file(spec, &cli.out) {
            Ok(msg) => {
                println!("{msg}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        };
    }
    if let Err(e) = cli.to_config() {
        e.exit();
    }
    if cli.data.is_none() {
        Cli::command()
            .error(ErrorKind::MissingRequiredArgument, "either --data or --sweep is required")
            .exit();
    }
    match run_single(&cli) {
        Ok(summary) => {
            let r = &summary.report;
            println!("model:      {:?} + {:?} * {}", r.scale_a, r.scale_b, r.best_expression);
            println!("train mse:  {:e}", r.best_train_mse_fullset);
            if let (Some(mse), Some(r2)) = (r.test_mse, r.test_r2) {
                println!("test mse:   {mse:e} (R² {r2:.6})");
            }
            if let Some(m) = r.truth_match {
                println!("truth:      {}", if m { "recovered" } else { "not recovered" });
            }
            println!("evaluations {} over {} generations", r.evaluations_used, r.generations);
            if let Some(fos) = &summary.fos {
                println!("linkage tree: {fos}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
