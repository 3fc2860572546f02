use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dampchan::channel::{chi_from_kraus, damping_kraus};
use dampchan::metrics::{max_trace_distance, process_fidelity, tangle};
use dampchan::qmath::CMatrix;
use dampchan::tomography::{mle_process_with, mle_state, ProcessOptions, TomographyDataset};
use dampchan_cli::output::write_chi_dump;
use dampchan_cli::run::{psucc_table, split, ChiDump};
use dampchan_cli::{emit_outputs, run_fig2, run_fig3, CliError, RunConfig};

/// Simulate and characterise the linear-optical damping channel.
#[derive(Debug, Parser)]
#[command(name = "dampchan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte-Carlo trials for error bars.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Use expectation-value counts instead of Poisson samples.
    #[arg(long, global = true)]
    noiseless: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Success probability and tangle versus damping.
    Fig2,
    /// Process fidelity and trace distance from simulated tomography.
    Fig3,
    /// Reconstruct a process from a dataset file.
    Tomo {
        dataset: PathBuf,
        /// Compare with the ideal channel of the configured case at this β.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Analytic success-probability table.
    Psucc,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RECONSTRUCTION: u8 = 2;

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    cfg.noiseless |= cli.noiseless;
    cfg.validate()?;
    Ok(cfg)
}

fn tomo(cfg: &RunConfig, dataset: &Path, beta: Option<f64>) -> Result<u8, CliError> {
    let data = TomographyDataset::load(dataset)
        .map_err(|e| CliError::Config(format!("{}: {e}", dataset.display())))?;
    let ideal = match beta {
        Some(b) => {
            let p = cfg
                .case
                .params(b)
                .map_err(|e| CliError::Config(e.to_string()))?;
            Some((p, chi_from_kraus(&damping_kraus(p))))
        }
        None => None,
    };

    let reconstruction = mle_state(data.input_counts()).and_then(|rho_in| {
        let rho_out = mle_state(data.output_counts())?;
        let opts = ProcessOptions {
            lambda: Some(cfg.lambda_factor * data.mean_output_count()),
            ideal_input: cfg.ideal_input,
        };
        Ok((mle_process_with(&data, &rho_in, &opts)?, rho_in, rho_out))
    });
    let (r, rho_in, rho_out) = match reconstruction {
        Ok(v) => v,
        Err(e) => {
            eprintln!("reconstruction failed: {e}");
            return Ok(EXIT_RECONSTRUCTION);
        }
    };

    println!("flux estimate     {:.1}", data.flux());
    println!("input tangle      {:.6}", tangle(&rho_in));
    println!("output tangle     {:.6}", tangle(&rho_out));
    println!("objective         {:.6e}", r.objective_value);
    println!("tp residual       {:.3e}", r.tp_residual);
    println!("N estimate        {:.1}", r.n_estimate);
    println!("iterations        {} ({:?})", r.iterations, r.termination);
    let chi = r.chi.matrix();
    println!("chi (Pauli basis I, X, Y, Z):");
    for i in 0..4 {
        let row: Vec<String> = (0..4)
            .map(|j| format!("{:+.4}{:+.4}i", chi[(i, j)].re, chi[(i, j)].im))
            .collect();
        println!("  {}", row.join("  "));
    }

    let zero = CMatrix::zeros(4, 4);
    let (alpha, beta, ideal_m) = match &ideal {
        Some((p, c)) => {
            println!("process fidelity  {:.6}", process_fidelity(&r.chi, c)?);
            println!("trace distance    {:.6}", max_trace_distance(&r.chi, c).0);
            (p.alpha(), p.beta(), c.matrix())
        }
        None => (f64::NAN, f64::NAN, &zero),
    };
    let (reconstructed_re, reconstructed_im) = split(chi);
    let (ideal_re, ideal_im) = split(ideal_m);
    let dump = ChiDump {
        alpha,
        beta,
        reconstructed_re,
        reconstructed_im,
        ideal_re,
        ideal_im,
    };
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("chi_dump.csv");
    write_chi_dump(&dump, std::fs::File::create(&path)?)?;
    println!("wrote {}", path.display());
    if r.converged() {
        Ok(0)
    } else {
        eprintln!("reconstruction did not converge");
        Ok(EXIT_RECONSTRUCTION)
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Fig2 | Command::Fig3 => {
            let run = if matches!(cli.command, Command::Fig2) {
                run_fig2(&cfg)?
            } else {
                run_fig3(&cfg)?
            };
            for p in emit_outputs(&run, &cfg.output_dir)? {
                println!("wrote {}", p.display());
            }
            let failures = run.failures();
            if failures > 0 {
                eprintln!("{failures} reconstruction failure(s)");
                return Ok(EXIT_RECONSTRUCTION);
            }
            Ok(0)
        }
        Command::Tomo { dataset, beta } => tomo(&cfg, dataset, *beta),
        Command::Psucc => {
            println!("case,alpha,beta,psucc,p_kraus0,p_kraus1");
            for (p, ps, p0, p1) in psucc_table(&cfg)? {
                println!(
                    "{},{},{},{},{},{}",
                    cfg.case,
                    p.alpha(),
                    p.beta(),
                    ps,
                    p0,
                    p1
                );
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
