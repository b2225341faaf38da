//! Whole-task program builders: local robustness, metric robustness, global
//! Lipschitz (FGL) and equilibrium FGL.

use super::encoders::{
    affine_equalities, ball_constraints, rational_ball_aux_count, rational_ball_constraints,
    relu_branch_constraints, relu_exact_constraints, relu_theta_constraints, slope_constraints,
};
use super::witness::{WitnessPlan, WitnessRule};
use super::{Direction, FormBuilder, QuadraticProgram, SymbolTable};
use crate::error::{Error, Result};
use crate::linalg::spectral_norm_power;
use crate::model::{
    ActivationKind, EquilibriumTask, MarginTask, NormKind, PerturbationSpec,
};

/// Which quadratic interpretation of ReLU the builders emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReluEncoding {
    /// Three-inequality exact graph (default for local tasks).
    #[default]
    Exact,
    /// Branch-bit encoding with a fresh 0/1 symbol per neuron.
    Branch,
    /// Stateless secant-slope encoding (always used for FGL tasks).
    Slope,
}

impl std::str::FromStr for ReluEncoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ReluEncoding::Exact),
            "branch" => Ok(ReluEncoding::Branch),
            "slope" => Ok(ReluEncoding::Slope),
            other => Err(Error::Parse(format!("unknown encoding `{other}`"))),
        }
    }
}

/// A built program plus, for local tasks, the witness plan that turns a
/// concrete input into a full feasible assignment.
#[derive(Debug, Clone)]
pub struct TaskQp {
    pub program: QuadraticProgram,
    pub witness: Option<WitnessPlan>,
}

fn group_suffix(layer_count: usize, layer: usize) -> String {
    if layer_count == 1 {
        String::new()
    } else {
        format!("{}", layer + 1)
    }
}

/// Local (data-dependent) robustness program: maximize the margin over the
/// perturbation ball around the spec center.
pub fn build_local_robustness_qp(
    task: &MarginTask,
    spec: &PerturbationSpec,
    encoding: ReluEncoding,
) -> Result<TaskQp> {
    let chain = &task.chain;
    let input_dim = chain.input_dim;
    spec.validate(Some(input_dim))?;
    if spec.center.is_none() {
        return Err(Error::InvalidProblem("local robustness needs a perturbation center"));
    }
    if task.objective.weights.len() != chain.representation_dim() {
        return Err(Error::DimensionMismatch {
            context: "margin objective",
            expected: chain.representation_dim(),
            found: task.objective.weights.len(),
        });
    }

    let mut tab = SymbolTable::new();
    let x_range = tab.add_group("x", input_dim);
    let layer_count = chain.layers.len();
    let mut layer_groups = Vec::with_capacity(layer_count);
    for (li, layer) in chain.layers.iter().enumerate() {
        let width = layer.weights.rows();
        let suffix = group_suffix(layer_count, li);
        let pre = tab.add_group(&format!("y{suffix}"), width);
        let post = tab.add_group(&format!("z{suffix}"), width);
        let branch = match (layer.activation, encoding) {
            (ActivationKind::Relu, ReluEncoding::Branch) => {
                Some(tab.add_group(&format!("s{suffix}"), width))
            }
            _ => None,
        };
        let clip_aux = match (layer.activation, encoding) {
            (ActivationKind::ReluTheta { .. }, ReluEncoding::Exact | ReluEncoding::Branch) => {
                Some(tab.add_group(&format!("th_aux{suffix}"), width))
            }
            _ => None,
        };
        layer_groups.push((pre, post, branch, clip_aux));
    }
    let ball_aux = match spec.norm {
        NormKind::One => Some(tab.add_group("lp_aux", input_dim)),
        NormKind::Rational { num, den } => {
            Some(tab.add_group("lp_aux", rational_ball_aux_count(input_dim, num, den)))
        }
        _ => None,
    };

    let mut constraints = Vec::new();
    let mut rules: Vec<(usize, WitnessRule)> = Vec::new();
    let mut prev = x_range.clone();
    for (li, layer) in chain.layers.iter().enumerate() {
        let (pre, post, branch, clip_aux) = &layer_groups[li];
        constraints.extend(affine_equalities(&tab, prev.clone(), pre.clone(), &layer.weights, &layer.bias)?);
        for (row, target) in pre.clone().enumerate() {
            let mut terms: Vec<(usize, f64)> = Vec::new();
            for (col, source) in prev.clone().enumerate() {
                let w = layer.weights.get(row, col);
                if w != 0.0 {
                    terms.push((source, w));
                }
            }
            rules.push((target, WitnessRule::Linear { terms, constant: layer.bias[row] }));
        }
        for offset in 0..layer.weights.rows() {
            let pre_idx = pre.start + offset;
            let post_idx = post.start + offset;
            match layer.activation {
                ActivationKind::Relu => match encoding {
                    ReluEncoding::Exact => {
                        constraints.extend(relu_exact_constraints(&tab, pre_idx, post_idx)?);
                    }
                    ReluEncoding::Branch => {
                        let s_idx = branch.as_ref().expect("branch group allocated").start + offset;
                        constraints
                            .extend(relu_branch_constraints(&tab, pre_idx, post_idx, s_idx)?);
                        rules.push((
                            s_idx,
                            WitnessRule::Indicator { terms: vec![(pre_idx, 1.0)], constant: 0.0 },
                        ));
                    }
                    ReluEncoding::Slope => {
                        constraints.push(slope_constraints(&tab, pre_idx, post_idx, 0.0, 1.0)?);
                    }
                },
                ActivationKind::ReluTheta { theta } => match encoding {
                    ReluEncoding::Slope => {
                        constraints.push(slope_constraints(&tab, pre_idx, post_idx, 0.0, 1.0)?);
                    }
                    _ => {
                        let aux_idx =
                            clip_aux.as_ref().expect("clip aux allocated").start + offset;
                        constraints.extend(relu_theta_constraints(
                            &tab, pre_idx, post_idx, aux_idx, theta,
                        )?);
                        rules.push((
                            aux_idx,
                            WitnessRule::Activation {
                                terms: vec![(pre_idx, -1.0)],
                                constant: theta,
                                kind: ActivationKind::Relu,
                            },
                        ));
                    }
                },
                ActivationKind::SlopeRestricted { lower, upper } => {
                    constraints.push(slope_constraints(&tab, pre_idx, post_idx, lower, upper)?);
                }
            }
            // Witness for the post-activation value.
            let rule = match layer.activation {
                ActivationKind::ReluTheta { theta }
                    if !matches!(encoding, ReluEncoding::Slope) =>
                {
                    let aux_idx = clip_aux.as_ref().expect("clip aux allocated").start + offset;
                    WitnessRule::Activation {
                        terms: vec![(aux_idx, -1.0)],
                        constant: theta,
                        kind: ActivationKind::Relu,
                    }
                }
                kind => WitnessRule::Activation { terms: vec![(pre_idx, 1.0)], constant: 0.0, kind },
            };
            rules.push((post_idx, rule));
        }
        prev = post.clone();
    }
    let (ball_cons, ball_rules) = match spec.norm {
        NormKind::Rational { .. } => rational_ball_constraints(
            &tab,
            x_range.clone(),
            spec,
            ball_aux.clone().expect("rational ball aux allocated"),
        )?,
        _ => ball_constraints(&tab, x_range.clone(), spec, ball_aux.clone())?,
    };
    constraints.extend(ball_cons);
    rules.extend(ball_rules);

    let mut objective = FormBuilder::new();
    for (offset, idx) in prev.enumerate() {
        let w = task.objective.weights[offset];
        if w != 0.0 {
            objective.linear(idx, w);
        }
    }
    objective.constant(task.objective.offset);

    Ok(TaskQp {
        program: QuadraticProgram {
            direction: Direction::Maximize,
            objective: objective.build(),
            constraints,
            symbols: tab,
        },
        witness: Some(WitnessPlan { input: x_range, rules }),
    })
}

/// Metric robustness program: identical to the local robustness program with
/// the anchor-difference objective. A positive optimum means `other` can
/// overtake `closest`.
pub fn build_metric_qp(
    net: &crate::model::Network,
    closest: usize,
    other: usize,
    spec: &PerturbationSpec,
    encoding: ReluEncoding,
) -> Result<TaskQp> {
    let task = MarginTask::metric(net, closest, other)?;
    build_local_robustness_qp(&task, spec, encoding)
}

/// Data-independent (FGL) program: how a unit-norm input difference can
/// propagate to the output, with activations replaced by their secant-slope
/// relaxations.
pub fn build_fgl_qp(task: &MarginTask, norm: NormKind) -> Result<TaskQp> {
    let chain = &task.chain;
    let input_dim = chain.input_dim;
    if task.objective.weights.len() != chain.representation_dim() {
        return Err(Error::DimensionMismatch {
            context: "margin objective",
            expected: chain.representation_dim(),
            found: task.objective.weights.len(),
        });
    }
    let spec = PerturbationSpec { norm, eps: 1.0, center: None };
    spec.validate(None)?;

    let mut tab = SymbolTable::new();
    let dx_range = tab.add_group("dx", input_dim);
    let layer_count = chain.layers.len();
    let mut layer_groups = Vec::with_capacity(layer_count);
    for (li, layer) in chain.layers.iter().enumerate() {
        let width = layer.weights.rows();
        let suffix = group_suffix(layer_count, li);
        let pre = tab.add_group(&format!("dy{suffix}"), width);
        let post = tab.add_group(&format!("dz{suffix}"), width);
        layer_groups.push((pre, post));
    }
    let ball_aux = match norm {
        NormKind::One => Some(tab.add_group("lp_aux", input_dim)),
        NormKind::Rational { num, den } => {
            Some(tab.add_group("lp_aux", rational_ball_aux_count(input_dim, num, den)))
        }
        _ => None,
    };

    let mut constraints = Vec::new();
    let mut prev = dx_range;
    for (li, layer) in chain.layers.iter().enumerate() {
        let (pre, post) = &layer_groups[li];
        // Difference propagation has no bias term.
        let zero_bias = vec![0.0; layer.weights.rows()];
        constraints.extend(affine_equalities(&tab, prev.clone(), pre.clone(), &layer.weights, &zero_bias)?);
        let (lower, upper) = layer.activation.slope_bounds();
        for offset in 0..layer.weights.rows() {
            constraints.push(slope_constraints(&tab, pre.start + offset, post.start + offset, lower, upper)?);
        }
        prev = post.clone();
    }
    let (ball_cons, _) = match norm {
        NormKind::Rational { .. } => rational_ball_constraints(
            &tab,
            0..input_dim,
            &spec,
            ball_aux.expect("rational ball aux allocated"),
        )?,
        _ => ball_constraints(&tab, 0..input_dim, &spec, ball_aux)?,
    };
    constraints.extend(ball_cons);

    let mut objective = FormBuilder::new();
    for (offset, idx) in prev.enumerate() {
        let w = task.objective.weights[offset];
        if w != 0.0 {
            objective.linear(idx, w);
        }
    }

    Ok(TaskQp {
        program: QuadraticProgram {
            direction: Direction::Maximize,
            objective: objective.build(),
            constraints,
            symbols: tab,
        },
        witness: None,
    })
}

/// FGL program for an equilibrium layer: the pre-activation difference is fed
/// by both the input difference and the fixed-point difference itself.
pub fn build_deq_fgl_qp(task: &EquilibriumTask, norm: NormKind) -> Result<TaskQp> {
    let feedback = &task.weights;
    let input_map = &task.input_map;
    let width = feedback.rows();
    let input_dim = input_map.cols();
    if task.objective.weights.len() != width {
        return Err(Error::DimensionMismatch {
            context: "margin objective",
            expected: width,
            found: task.objective.weights.len(),
        });
    }
    let norm_w = spectral_norm_power(feedback, 200, 1e-10);
    if norm_w >= 1.0 {
        return Err(Error::SpectralConditionViolated { norm: norm_w });
    }
    let spec = PerturbationSpec { norm, eps: 1.0, center: None };
    spec.validate(None)?;

    let mut tab = SymbolTable::new();
    let dx_range = tab.add_group("dx", input_dim);
    let pre = tab.add_group("dy", width);
    let post = tab.add_group("dz", width);
    let ball_aux = match norm {
        NormKind::One => Some(tab.add_group("lp_aux", input_dim)),
        NormKind::Rational { num, den } => {
            Some(tab.add_group("lp_aux", rational_ball_aux_count(input_dim, num, den)))
        }
        _ => None,
    };

    let mut constraints = Vec::new();
    // dy_i - (U dx)_i - (W dz)_i = 0
    for (row, target) in pre.clone().enumerate() {
        let mut b = FormBuilder::new();
        b.linear(target, 1.0);
        for (col, src) in dx_range.clone().enumerate() {
            let w = input_map.get(row, col);
            if w != 0.0 {
                b.linear(src, -w);
            }
        }
        for (col, src) in post.clone().enumerate() {
            let w = feedback.get(row, col);
            if w != 0.0 {
                b.linear(src, -w);
            }
        }
        constraints.push(b.eq0());
    }
    let (lower, upper) = task.kind.slope_bounds();
    for offset in 0..width {
        constraints.push(slope_constraints(&tab, pre.start + offset, post.start + offset, lower, upper)?);
    }
    let (ball_cons, _) = match norm {
        NormKind::Rational { .. } => rational_ball_constraints(
            &tab,
            dx_range.clone(),
            &spec,
            ball_aux.expect("rational ball aux allocated"),
        )?,
        _ => ball_constraints(&tab, dx_range.clone(), &spec, ball_aux)?,
    };
    constraints.extend(ball_cons);

    let mut objective = FormBuilder::new();
    for (offset, idx) in post.enumerate() {
        let w = task.objective.weights[offset];
        if w != 0.0 {
            objective.linear(idx, w);
        }
    }

    Ok(TaskQp {
        program: QuadraticProgram {
            direction: Direction::Maximize,
            objective: objective.build(),
            constraints,
            symbols: tab,
        },
        witness: None,
    })
}
