//! End-to-end orchestration: load a model and an input, build one margin
//! program per competitor, relax, solve, attack, and collect verdicts.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{
    closest_anchor, forward, EquilibriumTask, MarginTask, Network, NormKind, PerturbationSpec,
};
use crate::oracle::{exact_fgl_two_layer, pgd_attack, PgdConfig};
use crate::qp::{
    build_deq_fgl_qp, build_fgl_qp, build_local_robustness_qp, ReluEncoding, TaskQp,
};
use crate::relax::{export_sdpa, presolve_eliminate_affine, shor_dual, shor_primal, SdpProblem};
use crate::report::{class_verdict, ClassOutcome, InputSummary, OutcomeRecord, Verdict};
use crate::sdpsolve::{solve_sdp, SdpSolution, SolveStatus, SolverConfig};
use crate::spectral::{eigen_fgl_bound, StepSchedule, DEFAULT_ITERS};

/// Which form of the relaxation to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Relaxation {
    #[default]
    Primal,
    Dual,
}

impl std::str::FromStr for Relaxation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "primal" => Ok(Relaxation::Primal),
            "dual" => Ok(Relaxation::Dual),
            other => Err(Error::Parse(format!("unknown relaxation `{other}`"))),
        }
    }
}

/// Everything a certification run needs beyond the model and input.
#[derive(Debug, Clone)]
pub struct CertifyConfig {
    pub eps: f64,
    pub norm: NormKind,
    pub encoding: ReluEncoding,
    pub relaxation: Relaxation,
    pub solver: SolverConfig,
    pub attack: PgdConfig,
    pub jobs: usize,
    /// Apply affine elimination before relaxing (default on).
    pub presolve: bool,
    /// Base path for SDPA exports (one file per competitor).
    pub emit_sdpa: Option<std::path::PathBuf>,
}

impl CertifyConfig {
    pub fn new(eps: f64, norm: NormKind) -> Self {
        CertifyConfig {
            eps,
            norm,
            encoding: ReluEncoding::Exact,
            relaxation: Relaxation::Primal,
            solver: SolverConfig::default(),
            attack: PgdConfig::default(),
            jobs: 0,
            presolve: true,
            emit_sdpa: None,
        }
    }
}

/// Input point with an optional reference label (class or anchor index).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputFile {
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

pub fn load_input(bytes: &[u8]) -> Result<InputFile> {
    serde_json::from_slice(bytes).map_err(|e| Error::Parse(format!("input file: {e}")))
}

/// Relax (after optional presolve) and solve; returns the reported value in
/// the program's own direction plus solver details.
pub fn relax_and_solve(
    task_qp: &TaskQp,
    relaxation: Relaxation,
    presolve: bool,
    solver: &SolverConfig,
) -> Result<(f64, SdpProblem, SdpSolution)> {
    let program = if presolve {
        presolve_eliminate_affine(&task_qp.program)?.program
    } else {
        task_qp.program.clone()
    };
    let sdp = match relaxation {
        Relaxation::Primal => shor_primal(&program),
        Relaxation::Dual => shor_dual(&program),
    };
    let solution = solve_sdp(&sdp, solver)?;
    let value = sdp.reported_value(solution.primal_obj);
    Ok((value, sdp, solution))
}

/// Certify one input: build one margin program per competitor class (or
/// anchor, for metric models), solve the relaxations on a bounded worker
/// pool, pair each with an attack, and aggregate the verdicts.
pub fn certify_input(
    net: &Network,
    model_name: &str,
    input_name: &str,
    input: &InputFile,
    cfg: &CertifyConfig,
) -> Result<(InputSummary, Vec<ClassOutcome>)> {
    if input.x.len() != net.input_dim {
        return Err(Error::DimensionMismatch {
            context: "certify input",
            expected: net.input_dim,
            found: input.x.len(),
        });
    }
    let (task_name, predicted, competitors, tasks) = match &net.metric_head {
        Some(head) => {
            let rep = forward(net, &input.x)?;
            let predicted = closest_anchor(head, &rep);
            let competitors: Vec<usize> =
                (0..head.anchors.len()).filter(|&k| k != predicted).collect();
            let tasks: Result<Vec<MarginTask>> =
                competitors.iter().map(|&k| MarginTask::metric(net, predicted, k)).collect();
            ("metric", predicted, competitors, tasks?)
        }
        None => {
            let logits = forward(net, &input.x)?;
            if logits.len() < 2 {
                return Err(Error::InvalidClassIndex { index: 0, classes: logits.len() });
            }
            let predicted = argmax(&logits);
            let competitors: Vec<usize> =
                (0..logits.len()).filter(|&k| k != predicted).collect();
            let tasks: Result<Vec<MarginTask>> = competitors
                .iter()
                .map(|&k| MarginTask::classification(net, predicted, k))
                .collect();
            ("local-robustness", predicted, competitors, tasks?)
        }
    };
    let spec = PerturbationSpec::local(cfg.norm, cfg.eps, input.x.clone())?;

    let run_one = |(&competitor, task): (&usize, &MarginTask)| -> Result<ClassOutcome> {
        let started = Instant::now();
        let built = build_local_robustness_qp(task, &spec, cfg.encoding)?;
        if let Some(base) = &cfg.emit_sdpa {
            let program = if cfg.presolve {
                presolve_eliminate_affine(&built.program)?.program
            } else {
                built.program.clone()
            };
            let sdp = match cfg.relaxation {
                Relaxation::Primal => shor_primal(&program),
                Relaxation::Dual => shor_dual(&program),
            };
            let path = base.with_extension(format!("class{competitor}.dat-s"));
            std::fs::write(&path, export_sdpa(&sdp))
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
        let (sdp_value, _, solution) =
            relax_and_solve(&built, cfg.relaxation, cfg.presolve, &cfg.solver)?;
        let rank1_gap = match cfg.relaxation {
            Relaxation::Primal => Some(solution.rank1_gap()?),
            Relaxation::Dual => None,
        };
        let attack = pgd_attack(task, &spec, &cfg.attack)?;
        let solver_ok = solution.status == SolveStatus::Optimal;
        let verdict = class_verdict(sdp_value, Some(attack.best_margin), solver_ok);
        Ok(ClassOutcome {
            task: task_name.to_string(),
            model: model_name.to_string(),
            input: input_name.to_string(),
            norm: cfg.norm.to_string(),
            eps: cfg.eps,
            predicted,
            competitor,
            sdp_value,
            lower_bound: Some(attack.best_margin),
            verdict,
            rank1_gap,
            wall_time_s: started.elapsed().as_secs_f64(),
            solver_status: solution.status.to_string(),
        })
    };

    let pairs: Vec<(&usize, &MarginTask)> = competitors.iter().zip(tasks.iter()).collect();
    let outcomes: Result<Vec<ClassOutcome>> = if cfg.jobs == 1 {
        pairs.into_iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Io(e.to_string()))?;
        pool.install(|| pairs.into_par_iter().map(run_one).collect())
    };
    let outcomes = outcomes?;

    let correct = input.label.map_or(true, |label| label == predicted);
    let any_falsified = outcomes.iter().any(|o| o.verdict == Verdict::Falsified);
    let all_certified =
        !outcomes.is_empty() && outcomes.iter().all(|o| o.verdict == Verdict::Certified);
    let verdict = if any_falsified {
        Verdict::Falsified
    } else if all_certified {
        Verdict::Certified
    } else {
        Verdict::Unknown
    };
    let summary = InputSummary {
        task: task_name.to_string(),
        model: model_name.to_string(),
        input: input_name.to_string(),
        norm: cfg.norm.to_string(),
        eps: cfg.eps,
        predicted,
        classes: outcomes.len() + 1,
        correct,
        pgd_robust: correct && !any_falsified,
        certified: correct && all_certified,
        verdict,
    };
    Ok((summary, outcomes))
}

pub fn records_of(summary: InputSummary, outcomes: Vec<ClassOutcome>) -> Vec<OutcomeRecord> {
    let mut records: Vec<OutcomeRecord> =
        outcomes.into_iter().map(OutcomeRecord::Class).collect();
    records.push(OutcomeRecord::Summary(summary));
    records
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Which bound `run_fgl` computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FglMode {
    Sdp,
    Eigen,
    Oracle,
}

impl std::str::FromStr for FglMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdp" => Ok(FglMode::Sdp),
            "eigen" => Ok(FglMode::Eigen),
            "oracle" => Ok(FglMode::Oracle),
            other => Err(Error::Parse(format!("unknown fgl mode `{other}`"))),
        }
    }
}

/// A computed global-Lipschitz bound plus bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct FglOutcome {
    pub task: String,
    pub mode: String,
    pub norm: String,
    pub value: f64,
    pub solver_status: Option<String>,
    pub patterns_enumerated: Option<usize>,
}

/// Data-independent Lipschitz bound of a scalar-output model. `sdp` works
/// for any depth and for equilibrium models; `oracle` needs a two-layer
/// feed-forward model; `eigen` operates on a user-supplied symmetric matrix.
pub fn run_fgl(
    net: &Network,
    norm: NormKind,
    mode: FglMode,
    solver: &SolverConfig,
) -> Result<FglOutcome> {
    let is_deq = net
        .blocks
        .iter()
        .any(|b| matches!(b, crate::model::Block::Equilibrium { .. }));
    match mode {
        FglMode::Sdp => {
            let (task_name, built) = if is_deq {
                let task = EquilibriumTask::from_network(net)?;
                ("deq-fgl", build_deq_fgl_qp(&task, norm)?)
            } else {
                let task = MarginTask::scalar(net)?;
                ("fgl", build_fgl_qp(&task, norm)?)
            };
            let (value, _, solution) =
                relax_and_solve(&built, Relaxation::Primal, true, solver)?;
            Ok(FglOutcome {
                task: task_name.to_string(),
                mode: "sdp".into(),
                norm: norm.to_string(),
                value,
                solver_status: Some(solution.status.to_string()),
                patterns_enumerated: None,
            })
        }
        FglMode::Oracle => {
            if is_deq {
                return Err(Error::InvalidProblem("oracle mode needs a feed-forward model"));
            }
            let task = MarginTask::scalar(net)?;
            if task.chain.layers.len() != 1 {
                return Err(Error::InvalidProblem("oracle mode needs a two-layer model"));
            }
            let exact = exact_fgl_two_layer(
                &task.objective.weights,
                &task.chain.layers[0].weights,
                norm,
            )?;
            Ok(FglOutcome {
                task: "fgl".into(),
                mode: "oracle".into(),
                norm: norm.to_string(),
                value: exact.optimum,
                solver_status: None,
                patterns_enumerated: Some(exact.patterns_enumerated),
            })
        }
        FglMode::Eigen => Err(Error::InvalidProblem(
            "eigen mode takes a symmetric matrix file; use `run_fgl_eigen`",
        )),
    }
}

/// The eigenvalue route on a user-supplied symmetric matrix.
pub fn run_fgl_eigen(matrix: &Mat, iters: usize) -> Result<FglOutcome> {
    let iters = if iters == 0 { DEFAULT_ITERS } else { iters };
    let (value, _) = eigen_fgl_bound(matrix, iters, StepSchedule::for_matrix(matrix))?;
    Ok(FglOutcome {
        task: "fgl".into(),
        mode: "eigen".into(),
        norm: "2".into(),
        value,
        solver_status: None,
        patterns_enumerated: None,
    })
}

/// Parse a norm flag: `1`, `2`, `inf`, or `p/q`.
pub fn parse_norm(text: &str) -> Result<NormKind> {
    match text {
        "1" => Ok(NormKind::One),
        "2" => Ok(NormKind::Two),
        "inf" | "Inf" | "INF" => Ok(NormKind::Inf),
        other => {
            let (num, den) = match other.split_once('/') {
                Some((n, d)) => (
                    n.parse::<u32>().map_err(|_| Error::Parse(format!("bad norm `{other}`")))?,
                    d.parse::<u32>().map_err(|_| Error::Parse(format!("bad norm `{other}`")))?,
                ),
                None => (
                    other.parse::<u32>().map_err(|_| Error::Parse(format!("bad norm `{other}`")))?,
                    1,
                ),
            };
            let norm = NormKind::rational(num, den)?;
            Ok(match norm {
                NormKind::Rational { num: 1, den: 1 } => NormKind::One,
                NormKind::Rational { num: 2, den: 1 } => NormKind::Two,
                other => other,
            })
        }
    }
}

/// Load a symmetric matrix stored as nested JSON arrays.
pub fn load_matrix(bytes: &[u8]) -> Result<Mat> {
    let rows: Vec<Vec<f64>> =
        serde_json::from_slice(bytes).map_err(|e| Error::Parse(format!("matrix file: {e}")))?;
    let m = Mat::from_rows(&rows)?;
    if m.rows() != m.cols() {
        return Err(Error::DimensionMismatch {
            context: "matrix file",
            expected: m.rows(),
            found: m.cols(),
        });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_network;

    fn three_class_net() -> Network {
        load_network(
            br#"{
                "input_dim": 2,
                "blocks": [
                    {"affine": {"W": [[0.9, -0.2], [0.1, 0.8], [-0.5, 0.4], [0.3, 0.3]],
                                 "b": [0.1, -0.1, 0.2, 0.0]}},
                    {"activation": {"kind": "relu"}},
                    {"affine": {"W": [[1.0, 0.2, -0.3, 0.1], [-0.2, 0.9, 0.4, -0.5], [0.3, -0.6, 0.8, 0.2]],
                                 "b": [0.05, -0.05, 0.0]}}
                ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn point_ball_certifies_correct_prediction() {
        let net = three_class_net();
        let input = InputFile { x: vec![0.6, 0.4], label: None };
        let mut cfg = CertifyConfig::new(0.0, NormKind::Two);
        cfg.solver = SolverConfig::tight();
        cfg.jobs = 1;
        let (summary, outcomes) = certify_input(&net, "m", "x0", &input, &cfg).unwrap();
        assert_eq!(outcomes.len(), 2);
        assert_eq!(summary.verdict, Verdict::Certified);
        for o in &outcomes {
            assert!(o.sdp_value < 0.0);
            assert!(o.lower_bound.unwrap() <= o.sdp_value + 1e-6);
        }
    }

    #[test]
    fn huge_radius_is_falsified_by_attack() {
        let net = three_class_net();
        let input = InputFile { x: vec![0.6, 0.4], label: None };
        let mut cfg = CertifyConfig::new(10.0, NormKind::Two);
        cfg.jobs = 1;
        let (summary, _) = certify_input(&net, "m", "x0", &input, &cfg).unwrap();
        assert_eq!(summary.verdict, Verdict::Falsified);
        assert!(!summary.pgd_robust);
    }

    #[test]
    fn norm_flag_parser() {
        assert_eq!(parse_norm("1").unwrap(), NormKind::One);
        assert_eq!(parse_norm("2").unwrap(), NormKind::Two);
        assert_eq!(parse_norm("inf").unwrap(), NormKind::Inf);
        assert_eq!(parse_norm("3").unwrap(), NormKind::Rational { num: 3, den: 1 });
        assert_eq!(parse_norm("7/2").unwrap(), NormKind::Rational { num: 7, den: 2 });
        assert_eq!(parse_norm("4/2").unwrap(), NormKind::Two);
        assert!(parse_norm("1/2").is_err());
        assert!(parse_norm("x").is_err());
    }

    #[test]
    fn fgl_zero_weight_model_is_zero_in_all_modes() {
        let net = load_network(
            br#"{
                "input_dim": 2,
                "blocks": [
                    {"affine": {"W": [[0.0, 0.0], [0.0, 0.0]], "b": [0.0, 0.0]}},
                    {"activation": {"kind": "relu"}},
                    {"affine": {"W": [[1.0, 1.0]], "b": [0.0]}}
                ]
            }"#,
        )
        .unwrap();
        let sdp = run_fgl(&net, NormKind::Two, FglMode::Sdp, &SolverConfig::default()).unwrap();
        assert!(sdp.value.abs() <= 1e-5, "sdp {}", sdp.value);
        let oracle =
            run_fgl(&net, NormKind::Two, FglMode::Oracle, &SolverConfig::default()).unwrap();
        assert_eq!(oracle.value, 0.0);
    }
}
