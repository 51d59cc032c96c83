use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stiefel_ssl::graph::io::{feature_checksum, save_graph};
use stiefel_ssl::harness::{self, export, ExperimentConfig, Method};
use stiefel_ssl::Error;

#[derive(Parser)]
#[command(name = "stiefel-ssl", version, about = "Graph semi-supervised learning on the Stiefel manifold")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the dataset graph and save it as an edge list.
    BuildGraph(Common),
    /// Run the configured method over all trials.
    Solve(Common),
    /// Run the active-learning loop.
    Active(Common),
    /// Solve one instance and test it for global optimality.
    Certify(Common),
    /// Compare every method on the same label draws.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    method: Option<String>,
    /// Output directory; defaults to $RESULT_DIR, then ./results.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Record wall-clock times in exports.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(m) = &self.method {
            cfg.method = m.parse::<Method>()?;
        }
        cfg.timing |= self.timing;
        cfg.validate()?;
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("cannot size thread pool: {e}")))?;
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("RESULT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidInput(_)
        | Error::Parse { .. }
        | Error::Io(_)
        | Error::DuplicatePoints { .. }
        | Error::BudgetExceedsPool { .. }
        | Error::SameClassPair(..)
        | Error::AllLabeled => 2,
        Error::RankDeficient { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::LabelBudget { .. }
        | Error::IndefiniteOperator { .. }
        | Error::EigenNotConverged { .. }
        | Error::UnlabeledComponent { .. } => 3,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::BuildGraph(c) => {
            let cfg = c.load()?;
            let ds = harness::load_dataset(&cfg)?;
            let dir = c.out_dir();
            save_graph(&ds.graph, export::output_path(&dir, "graph.txt")?)?;
            println!("vertices {} edges {}", ds.graph.n_vertices(), ds.graph.n_edges());
            if let Some(f) = &ds.features {
                println!("features {}x{} sha256 {}", f.rows(), f.dim(), feature_checksum(f));
            }
            println!("wrote {}", dir.join("graph.txt").display());
        }
        Command::Solve(c) => {
            let cfg = c.load()?;
            let s = harness::run_experiment(&cfg)?;
            for p in export::export_experiment(&s, &c.out_dir())? {
                println!("wrote {}", p.display());
            }
            println!(
                "{}: accuracy {:.4} ({:.4}) over {} trials",
                s.method.name(),
                s.mean_accuracy,
                s.std_accuracy,
                s.trials
            );
        }
        Command::Active(c) => {
            let cfg = c.load()?;
            let ds = harness::load_dataset(&cfg)?;
            let s = harness::run_active_on(&ds, &cfg)?;
            let dir = c.out_dir();
            for p in export::export_active(&s, &dir)? {
                println!("wrote {}", p.display());
            }
            if let Ok(rows) = harness::score_heatmap(&ds, &cfg) {
                harness::write_heatmap_csv(&rows, export::create(&dir, "heatmap.csv")?)?;
                println!("wrote {}", dir.join("heatmap.csv").display());
            }
            for p in &s.curve {
                println!("queries {:>4}  accuracy {:.4} ({:.4})", p.queries, p.mean, p.std);
            }
        }
        Command::Certify(c) => {
            let cfg = c.load()?;
            let r = harness::certify(&cfg)?;
            let cert = &r.certificate;
            println!("status {:?}", cert.status);
            println!("s1 {:.6e}  d1 {:.6e}  dk {:.6e}", cert.s1, cert.d1, cert.dk);
            println!("lambda {:?}", cert.lambda);
            println!("foc {:.3e}  converged {}  iterations {}", cert.foc, r.converged, r.iterations);
            if cert.nonscalar_c || cert.extrapolated {
                println!("flags: nonscalar_c {}  extrapolated {}", cert.nonscalar_c, cert.extrapolated);
            }
            harness::write_json(&r, export::create(&c.out_dir(), "certificate.json")?)?;
        }
        Command::Bench(c) => {
            let cfg = c.load()?;
            let rows = harness::bench(&cfg)?;
            let dir = c.out_dir();
            harness::write_bench_csv(&rows, export::create(&dir, "bench.csv")?)?;
            harness::write_json(&rows, export::create(&dir, "bench.json")?)?;
            for r in &rows {
                println!("{:<11} {:.4} ({:.4})", r.method.name(), r.mean_accuracy, r.std_accuracy);
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
            ExitCode::from(exit_code(&e))
        }
    }
}
