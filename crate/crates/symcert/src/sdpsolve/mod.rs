//! Embedded SDP solvers. The default algorithm is a dense Nesterov-Todd
//! interior-point method, which at this scale reaches certification-grade
//! accuracy even on facially degenerate instances; an operator-splitting
//! method (alternating projections between the constraint affine subspace
//! and the product cone PSD x nonnegative-slacks, with over-relaxation and
//! adaptive penalty rescaling) is available as an alternative.

mod eigen;
mod facial;
mod interior;

pub use eigen::{project_psd, sym_eigen};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::qp::Sense;
use crate::relax::SdpProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverAlgorithm {
    /// Primal-dual interior point with NT scaling (accurate, default).
    #[default]
    InteriorPoint,
    /// ADMM-style operator splitting (cheap iterations, loose tail).
    Splitting,
}

impl std::str::FromStr for SolverAlgorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(SolverAlgorithm::InteriorPoint),
            "splitting" => Ok(SolverAlgorithm::Splitting),
            other => Err(Error::Parse(format!("unknown solver algorithm `{other}`"))),
        }
    }
}

/// Solver knobs. All defaults are recorded here so a run is reproducible
/// from its config alone. The penalty fields apply to the splitting
/// algorithm only.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: SolverAlgorithm,
    pub tol_primal: f64,
    pub tol_dual: f64,
    /// Relative duality-gap tolerance.
    pub tol_gap: f64,
    pub max_iter: usize,
    /// Initial splitting penalty; adapted during the run.
    pub rho: f64,
    pub over_relaxation: f64,
    /// Penalty adaptation period (iterations).
    pub rho_interval: usize,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Reserved for randomized rescalings; both methods are entirely
    /// deterministic and ignore it.
    pub seed: u64,
    /// Print per-iteration diagnostics to stderr.
    pub trace: bool,
    /// Restrict the problem to the face forced by its PSD rows before
    /// solving (no-op on problems with interior).
    pub facial_reduction: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: SolverAlgorithm::InteriorPoint,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            tol_gap: 1e-6,
            max_iter: 50_000,
            rho: 1.0,
            over_relaxation: 1.5,
            rho_interval: 100,
            rho_min: 1e-4,
            rho_max: 1e4,
            seed: 0,
            trace: false,
            facial_reduction: true,
        }
    }
}

impl SolverConfig {
    /// Tight settings for small instances where high-accuracy values matter.
    pub fn tight() -> Self {
        SolverConfig {
            tol_primal: 1e-9,
            tol_dual: 1e-9,
            tol_gap: 1e-9,
            max_iter: 200_000,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    NumericalTrouble,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveStatus::Optimal => write!(f, "optimal"),
            SolveStatus::MaxIter => write!(f, "max_iter"),
            SolveStatus::NumericalTrouble => write!(f, "numerical_trouble"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

/// Solver output in minimization convention; use
/// [`SdpProblem::reported_value`] on `primal_obj` for the originating
/// problem's value.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: Mat,
    pub duals: Vec<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub residuals: Residuals,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl SdpSolution {
    /// Ratio of the second to the largest eigenvalue of the solved matrix;
    /// near zero when the relaxation came back essentially rank one.
    pub fn rank1_gap(&self) -> Result<f64> {
        let (values, _) = sym_eigen(&self.x)?;
        let n = values.len();
        if n < 2 {
            return Ok(0.0);
        }
        let top = values[n - 1].max(1e-300);
        Ok((values[n - 2].max(0.0)) / top)
    }

    /// Candidate original-space point from the first column of the lifted
    /// matrix.
    pub fn extract_rank1(&self) -> Vec<f64> {
        let corner = self.x.get(0, 0);
        let scale = if corner.abs() > 1e-12 { corner } else { 1.0 };
        (1..self.x.rows()).map(|i| self.x.get(i, 0) / scale).collect()
    }
}

/// Solve min <C, X> s.t. <A_i, X> {<=,=} r_i, X PSD.
pub fn solve_sdp(problem: &SdpProblem, cfg: &SolverConfig) -> Result<SdpSolution> {
    debug_assert!(
        !problem.constraints.is_empty(),
        "problem must carry at least the corner normalization"
    );
    let reduction = if cfg.facial_reduction {
        facial::reduce(problem)?
    } else {
        facial::Reduction { problem: problem.clone(), basis: None }
    };
    let mut solution = match cfg.algorithm {
        SolverAlgorithm::InteriorPoint => interior::solve_interior(&reduction.problem, cfg),
        SolverAlgorithm::Splitting => solve_splitting(&reduction.problem, cfg),
    }?;
    if let Some(basis) = &reduction.basis {
        solution.x = facial::lift_solution(&solution.x, basis);
    }
    Ok(solution)
}

fn solve_splitting(problem: &SdpProblem, cfg: &SolverConfig) -> Result<SdpSolution> {
    let d = problem.dim;
    let m = problem.constraints.len();

    // Gram matrix of the constraint operator (with slack columns): always
    // positive definite thanks to the +I slack block.
    let mut gram = Mat::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut v = problem.constraints[i].mat.frob_inner_sparse(&problem.constraints[j].mat);
            if i == j {
                v += 1.0;
            }
            gram.set(i, j, v);
            gram.set(j, i, v);
        }
    }
    let factor = Cholesky::factor(&gram)?;

    let rhs: Vec<f64> = problem.constraints.iter().map(|c| c.rhs).collect();
    let rhs_norm = crate::linalg::norm2(&rhs);
    let obj_norm = problem.objective.frobenius_norm();
    let alpha = cfg.over_relaxation;

    let mut rho = cfg.rho.clamp(cfg.rho_min, cfg.rho_max);
    let mut cone_mat = Mat::zeros(d, d);
    let mut cone_slack = vec![0.0; m];
    let mut dual_mat = Mat::zeros(d, d);
    let mut dual_slack = vec![0.0; m];
    let mut multipliers = vec![0.0; m];

    let mut status = SolveStatus::MaxIter;
    let mut iterations = cfg.max_iter;
    let mut residuals = Residuals { primal: f64::INFINITY, dual: f64::INFINITY, gap: f64::INFINITY };
    let mut primal_obj = f64::NAN;
    let mut dual_obj = f64::NAN;

    const CHECK_EVERY: usize = 25;

    for iter in 1..=cfg.max_iter {
        // Affine step: project (cone iterate - dual - C/rho) onto the
        // constraint subspace.
        let mut target = cone_mat.clone();
        for i in 0..d {
            for j in 0..d {
                target.add_to(i, j, -dual_mat.get(i, j));
            }
        }
        problem.objective.add_scaled_into(&mut target, -1.0 / rho);
        let slack_target: Vec<f64> =
            (0..m).map(|i| cone_slack[i] - dual_slack[i]).collect();
        let mut resid = vec![0.0; m];
        for i in 0..m {
            resid[i] = problem.constraints[i].mat.frob_inner(&target) + slack_target[i] - rhs[i];
        }
        let correction = factor.solve(&resid);
        let mut affine_mat = target;
        for (i, con) in problem.constraints.iter().enumerate() {
            con.mat.add_scaled_into(&mut affine_mat, -correction[i]);
        }
        let affine_slack: Vec<f64> =
            (0..m).map(|i| slack_target[i] - correction[i]).collect();

        // Over-relaxation, cone projection, dual update.
        let mut relaxed = Mat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                relaxed.set(i, j, alpha * affine_mat.get(i, j) + (1.0 - alpha) * cone_mat.get(i, j));
            }
        }
        let relaxed_slack: Vec<f64> =
            (0..m).map(|i| alpha * affine_slack[i] + (1.0 - alpha) * cone_slack[i]).collect();

        let mut pre_projection = relaxed.clone();
        for i in 0..d {
            for j in 0..d {
                pre_projection.add_to(i, j, dual_mat.get(i, j));
            }
        }
        cone_mat = project_psd(&pre_projection)?;
        for i in 0..d {
            for j in 0..d {
                dual_mat.set(i, j, pre_projection.get(i, j) - cone_mat.get(i, j));
            }
        }
        for i in 0..m {
            let v = relaxed_slack[i] + dual_slack[i];
            cone_slack[i] = match problem.constraints[i].sense {
                Sense::Leq0 => v.max(0.0),
                Sense::Eq0 => 0.0,
            };
            dual_slack[i] = v - cone_slack[i];
        }
        for i in 0..m {
            multipliers[i] = rho * correction[i];
        }

        let last = iter == cfg.max_iter;
        if iter % CHECK_EVERY == 0 || last {
            if !cone_mat.is_finite() || multipliers.iter().any(|v| !v.is_finite()) {
                status = SolveStatus::NumericalTrouble;
                iterations = iter;
                break;
            }
            let mut pviol = 0.0;
            for (i, con) in problem.constraints.iter().enumerate() {
                let v = con.mat.frob_inner(&cone_mat) + cone_slack[i] - rhs[i];
                pviol += v * v;
            }
            let primal = pviol.sqrt() / (1.0 + rhs_norm);

            let mut dual_cert = Mat::zeros(d, d);
            problem.objective.add_scaled_into(&mut dual_cert, 1.0);
            for (i, con) in problem.constraints.iter().enumerate() {
                con.mat.add_scaled_into(&mut dual_cert, multipliers[i]);
            }
            let (values, _) = sym_eigen(&dual_cert)?;
            let mut dviol: f64 = values.iter().map(|&l| l.min(0.0).powi(2)).sum();
            for (i, con) in problem.constraints.iter().enumerate() {
                if con.sense == Sense::Leq0 {
                    dviol += multipliers[i].min(0.0).powi(2);
                }
            }
            let dual = dviol.sqrt() / (1.0 + obj_norm);

            primal_obj = problem.objective.frob_inner(&cone_mat);
            dual_obj = -crate::linalg::dot(&rhs, &multipliers);
            let gap = (primal_obj - dual_obj).abs() / (1.0 + primal_obj.abs() + dual_obj.abs());

            residuals = Residuals { primal, dual, gap };
            if primal <= cfg.tol_primal && dual <= cfg.tol_dual && gap <= cfg.tol_gap {
                status = SolveStatus::Optimal;
                iterations = iter;
                break;
            }

            if iter % cfg.rho_interval == 0 && !last {
                let new_rho = if primal > 10.0 * dual {
                    (rho * 2.0).min(cfg.rho_max)
                } else if dual > 10.0 * primal {
                    (rho / 2.0).max(cfg.rho_min)
                } else {
                    rho
                };
                if new_rho != rho {
                    let scale = rho / new_rho;
                    dual_mat.scale(scale);
                    for v in &mut dual_slack {
                        *v *= scale;
                    }
                    rho = new_rho;
                }
            }
        }
    }

    let mut duals = multipliers;
    for (i, con) in problem.constraints.iter().enumerate() {
        if con.sense == Sense::Leq0 {
            duals[i] = duals[i].max(0.0);
        }
    }
    Ok(SdpSolution {
        x: cone_mat,
        duals,
        primal_obj,
        dual_obj,
        residuals,
        status,
        iterations,
    })
}
