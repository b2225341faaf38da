//! Command-line front end: certification runs, Lipschitz bounds, program
//! dumps, oracles, attacks and report aggregation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use symcert::driver::{
    self, certify_input, load_input, load_matrix, parse_norm, records_of, CertifyConfig, FglMode,
    Relaxation,
};
use symcert::error::Error;
use symcert::model::{load_network, EquilibriumTask, MarginTask, PerturbationSpec};
use symcert::oracle::{exact_fgl_two_layer, exact_local_linf, pgd_attack, PgdConfig};
use symcert::qp::{build_deq_fgl_qp, build_fgl_qp, build_local_robustness_qp, ReluEncoding};
use symcert::relax::{export_sdpa, presolve_eliminate_affine, shor_primal};
use symcert::report::{aggregate_dir, render_csv, render_table, to_jsonl};
use symcert::sdpsolve::{SolverAlgorithm, SolverConfig};
use symcert::spectral::{eigen_fgl_bound, ptdiag_bound, StepSchedule, DEFAULT_ITERS};

#[derive(Parser)]
#[command(name = "symcert", version, about = "SDP-based robustness verification for small networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Solver tolerance (applied to primal, dual and gap).
    #[arg(long, env = "SYMCERT_TOL", default_value_t = 1e-6)]
    tol: f64,
    /// Solver iteration cap.
    #[arg(long, env = "SYMCERT_MAX_ITER", default_value_t = 50_000)]
    max_iter: usize,
    /// Solver algorithm: interior | splitting.
    #[arg(long, env = "SYMCERT_ALGORITHM", default_value = "interior")]
    algorithm: String,
    /// Seed for attack randomness.
    #[arg(long, env = "SYMCERT_SEED", default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig, Error> {
        Ok(SolverConfig {
            algorithm: self.algorithm.parse::<SolverAlgorithm>()?,
            tol_primal: self.tol,
            tol_dual: self.tol,
            tol_gap: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            ..SolverConfig::default()
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Certify one input against all competitor classes (or anchors).
    Certify {
        #[arg(long, env = "SYMCERT_MODEL")]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Perturbation norm: 1 | 2 | inf | p/q.
        #[arg(long, default_value = "2")]
        norm: String,
        /// ReLU encoding: exact | branch | slope.
        #[arg(long, default_value = "exact")]
        encoding: String,
        /// Relaxation form: primal | dual.
        #[arg(long, default_value = "primal")]
        relaxation: String,
        /// Write the relaxed programs in sparse SDPA format next to PATH.
        #[arg(long)]
        emit_sdpa: Option<PathBuf>,
        /// Worker threads for per-class solves (0 = all cores).
        #[arg(long, env = "SYMCERT_JOBS", default_value_t = 0)]
        jobs: usize,
        /// Append outcome records (JSON lines) to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Data-independent Lipschitz bound of a scalar-output model.
    Fgl {
        #[arg(long, required_unless_present = "matrix")]
        model: Option<PathBuf>,
        #[arg(long, default_value = "2")]
        norm: String,
        /// sdp | oracle | eigen (eigen reads --matrix instead of a model).
        #[arg(long, default_value = "sdp")]
        mode: String,
        /// Symmetric matrix file for eigen mode.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Subgradient iterations for eigen mode (0 = default).
        #[arg(long, default_value_t = 0)]
        iters: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Print the exact quadratic program for a task.
    Encode {
        /// local | metric | fgl | deq-fgl.
        #[arg(long, default_value = "local")]
        task: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value = "2")]
        norm: String,
        #[arg(long, default_value = "exact")]
        encoding: String,
        /// Competitor class/anchor (predicted is inferred).
        #[arg(long)]
        competitor: Option<usize>,
        /// Apply affine-elimination presolve before printing.
        #[arg(long)]
        presolve: bool,
        /// Also print the relaxation in sparse SDPA format.
        #[arg(long)]
        sdpa: bool,
    },
    /// Eigenvalue bounds for a diagonal-constrained SDP matrix.
    Spectral {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = 0)]
        iters: usize,
    },
    /// Exact enumeration oracle (local l_inf or two-layer fgl).
    Oracle {
        /// local | fgl.
        #[arg(long, default_value = "local")]
        task: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value = "inf")]
        norm: String,
        /// Competitor class (classification models).
        #[arg(long)]
        competitor: Option<usize>,
    },
    /// Projected-gradient attack on the margin.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value = "2")]
        norm: String,
        #[arg(long)]
        competitor: Option<usize>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long)]
        step_size: Option<f64>,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long, env = "SYMCERT_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Aggregate a directory of outcome records into a table.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 1 = usage, 2 = parse/input, 3 = solver failure.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse(_)
        | Error::Io(_)
        | Error::EmptyDirectory(_)
        | Error::NonFiniteWeight(_)
        | Error::DimensionMismatch { .. } => 2,
        Error::NoConvergence { .. } | Error::LpNumericalTrouble(_) => 3,
        _ => 1,
    }
}

fn read(path: &PathBuf) -> Result<Vec<u8>, Error> {
    std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn scalar_or_margin_task(
    net: &symcert::model::Network,
    input: Option<&driver::InputFile>,
    competitor: Option<usize>,
) -> Result<MarginTask, Error> {
    if net.output_dim == 1 && net.metric_head.is_none() {
        return MarginTask::scalar(net);
    }
    let x = input.map(|i| i.x.as_slice()).ok_or(Error::InvalidProblem(
        "multi-class models need --input to infer the predicted class",
    ))?;
    if let Some(head) = &net.metric_head {
        let rep = symcert::model::forward(net, x)?;
        let predicted = symcert::model::closest_anchor(head, &rep);
        let competitor = competitor.unwrap_or(if predicted == 0 { 1 } else { 0 });
        MarginTask::metric(net, predicted, competitor)
    } else {
        let logits = symcert::model::forward(net, x)?;
        let predicted =
            (0..logits.len()).max_by(|&a, &b| logits[a].total_cmp(&logits[b])).unwrap_or(0);
        let competitor = competitor.unwrap_or(if predicted == 0 { 1 } else { 0 });
        MarginTask::classification(net, predicted, competitor)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Certify {
            model,
            input,
            eps,
            norm,
            encoding,
            relaxation,
            emit_sdpa,
            jobs,
            out,
            solver,
        } => {
            let net = load_network(&read(&model)?)?;
            let point = load_input(&read(&input)?)?;
            let mut cfg = CertifyConfig::new(eps, parse_norm(&norm)?);
            cfg.encoding = encoding.parse::<ReluEncoding>()?;
            cfg.relaxation = relaxation.parse::<Relaxation>()?;
            cfg.solver = solver.config()?;
            cfg.attack.seed = solver.seed;
            cfg.jobs = jobs;
            cfg.emit_sdpa = emit_sdpa;
            let model_name = stem(&model);
            let input_name = stem(&input);
            let (summary, outcomes) = certify_input(&net, &model_name, &input_name, &point, &cfg)?;
            let records = records_of(summary, outcomes);
            let text = to_jsonl(&records);
            print!("{text}");
            if let Some(out) = out {
                use std::io::Write;
                let mut file = std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&out)
                    .map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
                file.write_all(text.as_bytes()).map_err(|e| Error::Io(e.to_string()))?;
            }
            Ok(())
        }
        Command::Fgl { model, norm, mode, matrix, iters, solver } => {
            let mode = mode.parse::<FglMode>()?;
            let outcome = match mode {
                FglMode::Eigen => {
                    let path = matrix.ok_or(Error::InvalidProblem(
                        "eigen mode needs --matrix with a symmetric matrix file",
                    ))?;
                    driver::run_fgl_eigen(&load_matrix(&read(&path)?)?, iters)?
                }
                _ => {
                    let path = model.ok_or(Error::InvalidProblem("missing --model"))?;
                    let net = load_network(&read(&path)?)?;
                    driver::run_fgl(&net, parse_norm(&norm)?, mode, &solver.config()?)?
                }
            };
            println!("{}", serde_json::to_string(&outcome).expect("serializable"));
            Ok(())
        }
        Command::Encode {
            task,
            model,
            input,
            eps,
            norm,
            encoding,
            competitor,
            presolve,
            sdpa,
        } => {
            let net = load_network(&read(&model)?)?;
            let norm = parse_norm(&norm)?;
            let encoding = encoding.parse::<ReluEncoding>()?;
            let point = match &input {
                Some(p) => Some(load_input(&read(p)?)?),
                None => None,
            };
            let built = match task.as_str() {
                "local" | "metric" => {
                    let margin = scalar_or_margin_task(&net, point.as_ref(), competitor)?;
                    let center = point
                        .as_ref()
                        .map(|p| p.x.clone())
                        .ok_or(Error::InvalidProblem("local tasks need --input"))?;
                    let spec = PerturbationSpec::local(norm, eps, center)?;
                    build_local_robustness_qp(&margin, &spec, encoding)?
                }
                "fgl" => {
                    let margin = MarginTask::scalar(&net)?;
                    build_fgl_qp(&margin, norm)?
                }
                "deq-fgl" => {
                    let eq = EquilibriumTask::from_network(&net)?;
                    build_deq_fgl_qp(&eq, norm)?
                }
                other => return Err(Error::Parse(format!("unknown task `{other}`"))),
            };
            let program = if presolve {
                presolve_eliminate_affine(&built.program)?.program
            } else {
                built.program
            };
            print!("{}", program.dump());
            if sdpa {
                print!("{}", export_sdpa(&shor_primal(&program)));
            }
            Ok(())
        }
        Command::Spectral { matrix, iters } => {
            let m = load_matrix(&read(&matrix)?)?;
            let iters = if iters == 0 { DEFAULT_ITERS } else { iters };
            let schedule = StepSchedule::for_matrix_iters(&m, iters);
            let (eigen_value, shift) = eigen_fgl_bound(&m, iters, schedule)?;
            let comparison = ptdiag_bound(&m, iters, schedule)?;
            println!(
                "{}",
                serde_json::json!({
                    "eigen_bound": eigen_value,
                    "comparison_bound": comparison,
                    "shift": shift,
                })
            );
            Ok(())
        }
        Command::Oracle { task, model, input, eps, norm, competitor } => {
            let net = load_network(&read(&model)?)?;
            let point = match &input {
                Some(p) => Some(load_input(&read(p)?)?),
                None => None,
            };
            match task.as_str() {
                "local" => {
                    let norm = parse_norm(&norm)?;
                    if norm != symcert::model::NormKind::Inf {
                        return Err(Error::UnsupportedNorm("exact local oracle (l_inf only)"));
                    }
                    let margin = scalar_or_margin_task(&net, point.as_ref(), competitor)?;
                    let center = point
                        .as_ref()
                        .map(|p| p.x.clone())
                        .ok_or(Error::InvalidProblem("local oracle needs --input"))?;
                    let exact = exact_local_linf(&margin, &center, eps)?;
                    println!(
                        "{}",
                        serde_json::json!({
                            "task": "local-robustness",
                            "optimum": exact.optimum,
                            "arg": exact.arg,
                            "patterns_enumerated": exact.patterns_enumerated,
                        })
                    );
                }
                "fgl" => {
                    let margin = MarginTask::scalar(&net)?;
                    if margin.chain.layers.len() != 1 {
                        return Err(Error::InvalidProblem("fgl oracle needs a two-layer model"));
                    }
                    let exact = exact_fgl_two_layer(
                        &margin.objective.weights,
                        &margin.chain.layers[0].weights,
                        parse_norm(&norm)?,
                    )?;
                    println!(
                        "{}",
                        serde_json::json!({
                            "task": "fgl",
                            "optimum": exact.optimum,
                            "arg": exact.arg,
                            "patterns_enumerated": exact.patterns_enumerated,
                        })
                    );
                }
                other => return Err(Error::Parse(format!("unknown task `{other}`"))),
            }
            Ok(())
        }
        Command::Attack { model, input, eps, norm, competitor, steps, step_size, restarts, seed } => {
            let net = load_network(&read(&model)?)?;
            let point = load_input(&read(&input)?)?;
            let margin = scalar_or_margin_task(&net, Some(&point), competitor)?;
            let spec = PerturbationSpec::local(parse_norm(&norm)?, eps, point.x.clone())?;
            let cfg = PgdConfig { steps, step_size, restarts, seed };
            let result = pgd_attack(&margin, &spec, &cfg)?;
            println!(
                "{}",
                serde_json::json!({
                    "best_margin": result.best_margin,
                    "best_input": result.best_input,
                    "iterations_used": result.iterations_used,
                    "restarts_used": result.restarts_used,
                })
            );
            Ok(())
        }
        Command::Report { dir } => {
            let rows = aggregate_dir(&dir)?;
            print!("{}", render_csv(&rows));
            println!();
            print!("{}", render_table(&rows));
            Ok(())
        }
    }
}

fn stem(path: &PathBuf) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
}
