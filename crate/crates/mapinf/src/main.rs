use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mapinf::harness::{self, runner, RunOptions};
use mapinf::mincut;

#[derive(Parser)]
#[command(name = "mapinf", about = "MAP inference for pairwise discrete graphical models", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a solver on a DGM1 model file.
    Solve {
        /// Model file in DGM1 format.
        model: PathBuf,
        /// bruteforce | icm | block-icm | diffusion | srmp | trws |
        /// subgrad | subgrad-decomp | alpha-exp | ab-swap | qpbo |
        /// mincut, optionally with an +icm suffix.
        #[arg(long, default_value = "srmp")]
        solver: String,
        /// Iteration budget.
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        /// Convergence tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Seed for randomized components.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Node order: idx or reverse.
        #[arg(long, default_value = "idx")]
        order: String,
        /// Weight preset: minsum | cmp | chains | edges.
        #[arg(long, default_value = "chains")]
        weights: String,
        /// Force epsilon-agreement tracking on/off.
        #[arg(long)]
        track_eps: Option<bool>,
        /// Replace BIG sentinel costs by this finite value first.
        #[arg(long)]
        finitize: Option<f64>,
        /// Write the per-iteration trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate the energy of a labeling (one line of label indices).
    Eval {
        model: PathBuf,
        labeling: PathBuf,
    },
    /// Generate an instance.
    Gen {
        /// grid-potts | grid-random | chain-random | tree-random |
        /// hamiltonian | example:4.3 | example:4.5 | example:8.1 |
        /// example:8.7 | example:11.34
        kind: String,
        /// Output file.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Grid height / chain length / node count.
        #[arg(long, default_value_t = 3)]
        height: usize,
        #[arg(long, default_value_t = 3)]
        width: usize,
        #[arg(long, default_value_t = 3)]
        labels: usize,
        /// Potts coupling upper bound, example parameters.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.25)]
        beta: f64,
        /// Number of edges for example:8.7.
        #[arg(long, default_value_t = 5)]
        edges: usize,
        /// Input graph for the Hamiltonian reduction, e.g. k4, cycle:5,
        /// star:4, path:6.
        #[arg(long, default_value = "k4")]
        graph: String,
    },
    /// Convert a model to its binary reduction or a DIMACS max-flow file.
    Convert {
        model: PathBuf,
        /// binary | dimacs
        #[arg(long)]
        to: String,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read_model(path: &PathBuf) -> Result<mapinf::GraphicalModel, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    harness::parse_model(&text).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Solve { model, solver, iters, tol, seed, order, weights, track_eps, finitize, trace } => {
            let mut m = read_model(&model)?;
            if let Some(value) = finitize {
                m = harness::finitize(&m, value);
            }
            let opts = RunOptions {
                iterations: iters,
                tolerance: tol,
                reverse_order: order == "reverse",
                weights,
                track_epsilon: track_eps,
                seed,
                brute_force_cap: 1e7,
            };
            let result = runner::run_solver(&m, &solver, &opts).map_err(|e| e.to_string())?;
            if let Some(d) = result.dual_bound {
                println!("dual {d}");
            }
            match (&result.labeling, result.energy) {
                (Some(y), Some(e)) => {
                    println!("energy {e}");
                    println!("labeling {}", harness::write_labeling(y));
                }
                _ => println!("no primal solution produced"),
            }
            if let Some(path) = trace {
                fs::write(&path, harness::write_trace(&result.trace))
                    .map_err(|e| format!("{}: {e}", path.display()))?;
            }
            Ok(())
        }
        Command::Eval { model, labeling } => {
            let m = read_model(&model)?;
            let text =
                fs::read_to_string(&labeling).map_err(|e| format!("{}: {e}", labeling.display()))?;
            let y = harness::parse_labeling(&text).map_err(|e| e.to_string())?;
            let e = m.energy(&y).map_err(|e| e.to_string())?;
            println!("energy {e}");
            Ok(())
        }
        Command::Gen { kind, output, seed, height, width, labels, alpha, beta, edges, graph } => {
            let mut rng = mapinf::harness::rng::SplitMix64::new(seed);
            let m = match kind.as_str() {
                "grid-potts" => mapinf::harness::generate::grid_potts(height, width, labels, alpha, &mut rng),
                "grid-random" => mapinf::harness::generate::grid_random(height, width, labels, &mut rng),
                "chain-random" => {
                    mapinf::harness::generate::random_chain_sized(&mut rng, height.max(1), labels).0
                }
                "tree-random" => {
                    mapinf::harness::generate::random_tree_sized(&mut rng, height.max(1), labels)
                }
                "hamiltonian" => {
                    let (n, e) = mapinf::harness::generate::named_graph(&graph)
                        .map_err(|e| e.to_string())?;
                    mapinf::harness::generate::hamiltonian(n, &e).map_err(|e| e.to_string())?
                }
                "example:4.3" => mapinf::harness::generate::example_4_3(alpha),
                "example:4.5" => mapinf::harness::generate::example_4_5(alpha, beta),
                "example:8.1" => mapinf::harness::generate::example_8_1(),
                "example:8.7" => mapinf::harness::generate::example_8_7(edges),
                "example:11.34" => mapinf::harness::generate::example_11_34(alpha),
                other => return Err(format!("unknown instance kind '{other}'")),
            };
            fs::write(&output, harness::write_model(&m))
                .map_err(|e| format!("{}: {e}", output.display()))?;
            Ok(())
        }
        Command::Convert { model, to, output } => {
            let m = read_model(&model)?;
            let text = match to.as_str() {
                "binary" => {
                    let (binary, _) =
                        mincut::multilabel_to_binary(&m).map_err(|e| e.to_string())?;
                    harness::write_model(&binary)
                }
                "dimacs" => {
                    let (binary, _) = if m.label_counts().iter().all(|&l| l == 2) {
                        (m.clone(), None)
                    } else {
                        let (b, map) =
                            mincut::multilabel_to_binary(&m).map_err(|e| e.to_string())?;
                        (b, Some(map))
                    };
                    let graph = mincut::binary_to_cut(&binary).map_err(|e| e.to_string())?;
                    graph.to_dimacs()
                }
                other => return Err(format!("unknown conversion target '{other}'")),
            };
            fs::write(&output, text).map_err(|e| format!("{}: {e}", output.display()))?;
            Ok(())
        }
    }
}
