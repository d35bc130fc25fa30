use clap::{Parser, Subcommand};
use qred::{report, run, CliError, ScenarioConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qred", version, about = "Quantization and reduction experiments on toric models")]
struct Cli {
    /// Worker threads for experiment cells.
    #[arg(long, global = true, env = "QRED_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate, run every experiment, and write tables to the output directory.
    Run {
        config: PathBuf,
        /// Override the zero-set quadrature level for Gram and Toeplitz matrices.
        #[arg(long)]
        quad_level: Option<usize>,
        /// Override the k list (comma separated).
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<u32>>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print pass/fail convergence lines for a finished run.
    Report { manifest: PathBuf },
    /// Check that the scenario admits the requested sections at every k.
    Validate {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<u32>>,
    },
}

fn load(path: &Path, k: Option<Vec<u32>>) -> Result<ScenarioConfig, CliError> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(k) = k {
        cfg.k = k;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    match cli.cmd {
        Cmd::Run { config, quad_level, k, out } => {
            let mut cfg = load(&config, k)?;
            if let Some(l) = quad_level {
                cfg.quadrature.gram = l;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            let cfg = ScenarioConfig::parse(&cfg.to_json())?;
            let manifest = run::run(&cfg)?;
            for f in &manifest.files {
                println!("{}", cfg.output.join(&f.path).display());
            }
            println!("{}", cfg.output.join("manifest.json").display());
            Ok(true)
        }
        Cmd::Report { manifest } => {
            let (text, ok) = report::report(&manifest)?;
            print!("{text}");
            Ok(ok)
        }
        Cmd::Validate { config, k } => {
            let cfg = load(&config, k)?;
            print!("{}", cfg.validate()?);
            println!("valid");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("qred: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("qred: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
