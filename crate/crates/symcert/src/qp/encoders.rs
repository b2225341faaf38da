//! Constraint emitters for the individual computation and attack components:
//! activations, affine layers and perturbation balls.

use std::ops::Range;

use super::witness::WitnessRule;
use super::{FormBuilder, QuadConstraint, SymbolTable};
use crate::error::{Error, Result};
use crate::model::{NormKind, PerturbationSpec};

/// Exact ReLU graph in three inequalities: pre <= post, post >= 0,
/// (post - pre) post <= 0.
pub fn relu_exact_constraints(
    tab: &SymbolTable,
    pre: usize,
    post: usize,
) -> Result<[QuadConstraint; 3]> {
    tab.check_index(pre)?;
    tab.check_index(post)?;
    let mut below = FormBuilder::new();
    below.linear(pre, 1.0).linear(post, -1.0);
    let mut nonneg = FormBuilder::new();
    nonneg.linear(post, -1.0);
    let mut complement = FormBuilder::new();
    complement.monomial(post, post, 1.0).monomial(pre, post, -1.0);
    Ok([below.leq0(), nonneg.leq0(), complement.leq0()])
}

/// Branch-bit ReLU: s(s-1) = 0, (s - 1/2) pre >= 0, post = s * pre.
pub fn relu_branch_constraints(
    tab: &SymbolTable,
    pre: usize,
    post: usize,
    branch: usize,
) -> Result<[QuadConstraint; 3]> {
    for idx in [pre, post, branch] {
        tab.check_index(idx)?;
    }
    let mut boolean = FormBuilder::new();
    boolean.monomial(branch, branch, 1.0).linear(branch, -1.0);
    let mut side = FormBuilder::new();
    // (s - 1/2) pre >= 0  <=>  -s*pre + pre/2 <= 0
    side.monomial(branch, pre, -1.0).linear(pre, 0.5);
    let mut select = FormBuilder::new();
    select.linear(post, 1.0).monomial(branch, pre, -1.0);
    Ok([boolean.eq0(), side.leq0(), select.eq0()])
}

/// Slope-restricted secant constraint:
/// (d_post - lower d_pre)(d_post - upper d_pre) <= 0.
pub fn slope_constraints(
    tab: &SymbolTable,
    d_pre: usize,
    d_post: usize,
    lower: f64,
    upper: f64,
) -> Result<QuadConstraint> {
    tab.check_index(d_pre)?;
    tab.check_index(d_post)?;
    if !(lower <= upper) || !lower.is_finite() || !upper.is_finite() {
        return Err(Error::InvalidSlopeBounds { lower, upper });
    }
    let mut b = FormBuilder::new();
    b.monomial(d_post, d_post, 1.0)
        .monomial(d_pre, d_post, -(lower + upper))
        .monomial(d_pre, d_pre, lower * upper);
    Ok(b.leq0())
}

/// Clipped ReLU via the squashing identity post = ReLU(theta - ReLU(theta -
/// pre)): six inequalities over (pre, aux, post) where aux plays the inner
/// ReLU.
pub fn relu_theta_constraints(
    tab: &SymbolTable,
    pre: usize,
    post: usize,
    aux: usize,
    theta: f64,
) -> Result<[QuadConstraint; 6]> {
    for idx in [pre, post, aux] {
        tab.check_index(idx)?;
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidTheta(theta));
    }
    // aux >= theta - pre
    let mut a1 = FormBuilder::new();
    a1.constant(theta).linear(pre, -1.0).linear(aux, -1.0);
    // aux >= 0
    let mut a2 = FormBuilder::new();
    a2.linear(aux, -1.0);
    // (aux - (theta - pre)) aux <= 0
    let mut a3 = FormBuilder::new();
    a3.monomial(aux, aux, 1.0).monomial(pre, aux, 1.0).linear(aux, -theta);
    // post >= theta - aux
    let mut z1 = FormBuilder::new();
    z1.constant(theta).linear(aux, -1.0).linear(post, -1.0);
    // post >= 0
    let mut z2 = FormBuilder::new();
    z2.linear(post, -1.0);
    // (post - (theta - aux)) post <= 0
    let mut z3 = FormBuilder::new();
    z3.monomial(post, post, 1.0).monomial(aux, post, 1.0).linear(post, -theta);
    Ok([a1.leq0(), a2.leq0(), a3.leq0(), z1.leq0(), z2.leq0(), z3.leq0()])
}

/// Linear layer equalities: out_i - w_i . in - b_i = 0, one per row.
pub fn affine_equalities(
    tab: &SymbolTable,
    inputs: Range<usize>,
    outputs: Range<usize>,
    weights: &crate::linalg::Mat,
    bias: &[f64],
) -> Result<Vec<QuadConstraint>> {
    if weights.cols() != inputs.len() {
        return Err(Error::DimensionMismatch {
            context: "affine equalities input",
            expected: weights.cols(),
            found: inputs.len(),
        });
    }
    if weights.rows() != outputs.len() || bias.len() != outputs.len() {
        return Err(Error::DimensionMismatch {
            context: "affine equalities output",
            expected: weights.rows(),
            found: outputs.len(),
        });
    }
    if let Some(last) = outputs.end.checked_sub(1) {
        tab.check_index(last)?;
    }
    let mut out = Vec::with_capacity(outputs.len());
    for (row, target) in outputs.clone().enumerate() {
        let mut b = FormBuilder::new();
        b.linear(target, 1.0).constant(-bias[row]);
        for (col, source) in inputs.clone().enumerate() {
            let w = weights.get(row, col);
            if w != 0.0 {
                b.linear(source, -w);
            }
        }
        out.push(b.eq0());
    }
    Ok(out)
}

/// l1/l2/l_inf ball around the spec center (origin when absent). The l1 case
/// needs one auxiliary per coordinate in `aux`.
pub fn ball_constraints(
    tab: &SymbolTable,
    coords: Range<usize>,
    spec: &PerturbationSpec,
    aux: Option<Range<usize>>,
) -> Result<(Vec<QuadConstraint>, Vec<(usize, WitnessRule)>)> {
    tab.check_index(coords.end.saturating_sub(1))?;
    let eps = spec.eps;
    let mut cons = Vec::new();
    let mut rules = Vec::new();
    match spec.norm {
        NormKind::Two => {
            let mut b = FormBuilder::new();
            for (offset, idx) in coords.clone().enumerate() {
                let a = spec.center_coord(offset);
                b.monomial(idx, idx, 1.0).linear(idx, -2.0 * a).constant(a * a);
            }
            b.constant(-eps * eps);
            cons.push(b.leq0());
        }
        NormKind::Inf => {
            for (offset, idx) in coords.clone().enumerate() {
                let a = spec.center_coord(offset);
                let mut b = FormBuilder::new();
                b.monomial(idx, idx, 1.0).linear(idx, -2.0 * a).constant(a * a - eps * eps);
                cons.push(b.leq0());
            }
        }
        NormKind::One => {
            let aux = aux.ok_or(Error::InvalidProblem("l1 ball needs auxiliaries"))?;
            if aux.len() != coords.len() {
                return Err(Error::DimensionMismatch {
                    context: "l1 ball auxiliaries",
                    expected: coords.len(),
                    found: aux.len(),
                });
            }
            tab.check_index(aux.end.saturating_sub(1))?;
            let mut total = FormBuilder::new();
            for (offset, (idx, t)) in coords.clone().zip(aux.clone()).enumerate() {
                let a = spec.center_coord(offset);
                let mut nonneg = FormBuilder::new();
                nonneg.linear(t, -1.0);
                cons.push(nonneg.leq0());
                let mut above = FormBuilder::new();
                above.linear(idx, 1.0).constant(-a).linear(t, -1.0);
                cons.push(above.leq0());
                let mut below = FormBuilder::new();
                below.linear(idx, -1.0).constant(a).linear(t, -1.0);
                cons.push(below.leq0());
                // Implied quadratic caps (x-a)^2 <= eps t and t^2 <= eps t:
                // redundant for the program itself, but without them the
                // lifted relaxation leaves second moments unbounded.
                let mut coord_cap = FormBuilder::new();
                coord_cap
                    .monomial(idx, idx, 1.0)
                    .linear(idx, -2.0 * a)
                    .constant(a * a)
                    .linear(t, -eps);
                cons.push(coord_cap.leq0());
                let mut aux_cap = FormBuilder::new();
                aux_cap.monomial(t, t, 1.0).linear(t, -eps);
                cons.push(aux_cap.leq0());
                total.linear(t, 1.0);
                rules.push((t, WitnessRule::AbsValue { terms: vec![(idx, 1.0)], constant: -a }));
            }
            total.constant(-eps);
            cons.push(total.leq0());
        }
        NormKind::Rational { .. } => return Err(Error::UnsupportedNorm("encode_ball")),
    }
    Ok((cons, rules))
}

/// A monomial of degree at most two over program variables.
#[derive(Debug, Clone, Copy)]
enum MonRef {
    Lin(usize),
    Quad(usize, usize),
}

fn add_mon(b: &mut FormBuilder, m: MonRef, coef: f64) {
    match m {
        MonRef::Lin(i) => {
            b.linear(i, coef);
        }
        MonRef::Quad(i, j) => {
            b.monomial(i, j, coef);
        }
    }
}

/// Square-and-multiply power chain: returns a monomial equal to base^exp,
/// materializing intermediate powers as fresh variables with exact quadratic
/// equalities. `base_bound` is a known upper bound on the (nonnegative) base
/// value; each materialized power u of degree d also gets the implied cap
/// u^2 <= base_bound^d u, which keeps the lifted second moments bounded.
fn power_chain(
    exp: u32,
    base: usize,
    base_bound: f64,
    alloc: &mut dyn FnMut() -> usize,
    cons: &mut Vec<QuadConstraint>,
    rules: &mut Vec<(usize, WitnessRule)>,
) -> MonRef {
    match exp {
        0 => unreachable!("power chain with exponent 0"),
        1 => MonRef::Lin(base),
        2 => MonRef::Quad(base, base),
        _ if exp % 2 == 0 => {
            let half = materialize_power(exp / 2, base, base_bound, alloc, cons, rules);
            MonRef::Quad(half, half)
        }
        _ => {
            let prev = materialize_power(exp - 1, base, base_bound, alloc, cons, rules);
            MonRef::Quad(base, prev)
        }
    }
}

fn materialize_power(
    exp: u32,
    base: usize,
    base_bound: f64,
    alloc: &mut dyn FnMut() -> usize,
    cons: &mut Vec<QuadConstraint>,
    rules: &mut Vec<(usize, WitnessRule)>,
) -> usize {
    if exp == 1 {
        return base;
    }
    let mon = power_chain(exp, base, base_bound, alloc, cons, rules);
    let fresh = alloc();
    let mut b = FormBuilder::new();
    b.linear(fresh, 1.0);
    add_mon(&mut b, mon, -1.0);
    cons.push(b.eq0());
    let MonRef::Quad(i, j) = mon else { unreachable!("exp >= 2 yields a quadratic monomial") };
    rules.push((fresh, WitnessRule::Product { left: i, right: j }));
    let mut cap = FormBuilder::new();
    cap.monomial(fresh, fresh, 1.0).linear(fresh, -base_bound.powi(exp as i32));
    cons.push(cap.leq0());
    fresh
}

fn chain_aux_count(exp: u32) -> usize {
    let mut count = 0;
    let mut alloc = || {
        count += 1;
        count
    };
    let mut cons = Vec::new();
    let mut rules = Vec::new();
    power_chain(exp, 0, 1.0, &mut alloc, &mut cons, &mut rules);
    count
}

/// Auxiliaries needed by `rational_ball_constraints` for an m-dimensional
/// ball with exponent num/den.
pub fn rational_ball_aux_count(dim: usize, num: u32, den: u32) -> usize {
    dim * (2 + chain_aux_count(num) + chain_aux_count(den))
}

/// l_p ball for rational p = num/den >= 1: per coordinate an absolute-value
/// variable t_i >= |x_i - a_i| and a budget variable y_i, linked by
/// t_i^num <= eps^(num-den) y_i^den with powers reduced to quadratics by
/// repeated squaring; the budgets satisfy sum y_i <= eps.
pub fn rational_ball_constraints(
    tab: &SymbolTable,
    coords: Range<usize>,
    spec: &PerturbationSpec,
    aux: Range<usize>,
) -> Result<(Vec<QuadConstraint>, Vec<(usize, WitnessRule)>)> {
    let NormKind::Rational { num, den } = spec.norm else {
        return Err(Error::UnsupportedNorm("encode_ball_rational_p"));
    };
    if den == 0 || num < den {
        return Err(Error::InvalidExponent { num, den });
    }
    let g = gcd(num, den);
    let (num, den) = (num / g, den / g);
    if aux.len() != rational_ball_aux_count(coords.len(), num, den) {
        return Err(Error::DimensionMismatch {
            context: "rational ball auxiliaries",
            expected: rational_ball_aux_count(coords.len(), num, den),
            found: aux.len(),
        });
    }
    tab.check_index(coords.end.saturating_sub(1))?;
    tab.check_index(aux.end.saturating_sub(1))?;

    let eps = spec.eps;
    let p = num as f64 / den as f64;
    let scale_factor = eps.powi(num as i32 - den as i32);
    let witness_scale = if num == den {
        1.0
    } else if eps > 0.0 {
        eps.powf(1.0 - p)
    } else {
        0.0
    };

    let mut cons = Vec::new();
    let mut rules = Vec::new();
    let mut cursor = aux.start;
    let mut alloc = || {
        let idx = cursor;
        cursor += 1;
        idx
    };
    let mut total = FormBuilder::new();
    for (offset, idx) in coords.clone().enumerate() {
        let a = spec.center_coord(offset);
        let abs_var = alloc();
        let budget_var = alloc();
        rules.push((abs_var, WitnessRule::AbsValue { terms: vec![(idx, 1.0)], constant: -a }));
        rules.push((
            budget_var,
            WitnessRule::PowerScaled { source: abs_var, exponent: p, scale: witness_scale },
        ));
        // t >= x - a and t >= a - x
        let mut above = FormBuilder::new();
        above.linear(idx, 1.0).constant(-a).linear(abs_var, -1.0);
        cons.push(above.leq0());
        let mut below = FormBuilder::new();
        below.linear(idx, -1.0).constant(a).linear(abs_var, -1.0);
        cons.push(below.leq0());
        // y >= 0
        let mut nonneg = FormBuilder::new();
        nonneg.linear(budget_var, -1.0);
        cons.push(nonneg.leq0());
        // Implied caps: t <= eps and y <= eps hold on the ball, so
        // (x-a)^2 <= eps t, t^2 <= eps t, y^2 <= eps y are valid; without
        // them the lifted second moments are unbounded.
        let mut coord_cap = FormBuilder::new();
        coord_cap
            .monomial(idx, idx, 1.0)
            .linear(idx, -2.0 * a)
            .constant(a * a)
            .linear(abs_var, -eps);
        cons.push(coord_cap.leq0());
        for &capped in &[abs_var, budget_var] {
            let mut cap = FormBuilder::new();
            cap.monomial(capped, capped, 1.0).linear(capped, -eps);
            cons.push(cap.leq0());
        }
        // t^num <= eps^(num-den) y^den
        let lhs = power_chain(num, abs_var, eps, &mut alloc, &mut cons, &mut rules);
        let rhs = power_chain(den, budget_var, eps, &mut alloc, &mut cons, &mut rules);
        let mut power = FormBuilder::new();
        add_mon(&mut power, lhs, 1.0);
        add_mon(&mut power, rhs, -scale_factor);
        cons.push(power.leq0());
        total.linear(budget_var, 1.0);
    }
    total.constant(-eps);
    cons.push(total.leq0());
    debug_assert_eq!(cursor, aux.end);
    Ok((cons, rules))
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_var_table() -> SymbolTable {
        let mut t = SymbolTable::new();
        t.add_group("y", 1);
        t.add_group("z", 1);
        t
    }

    fn satisfied(cons: &[QuadConstraint], x: &[f64], tol: f64) -> bool {
        cons.iter().all(|c| c.violation(x) <= tol)
    }

    #[test]
    fn relu_exact_on_and_off_graph() {
        let tab = two_var_table();
        let cons = relu_exact_constraints(&tab, 0, 1).unwrap();
        assert!(satisfied(&cons, &[1.2, 1.2], 0.0));
        assert!(satisfied(&cons, &[-0.6, 0.0], 0.0));
        // (y, z) = (1, 0) violates z >= y.
        assert!(cons[0].violation(&[1.0, 0.0]) >= 1.0);
    }

    #[test]
    fn relu_branch_cases() {
        let mut tab = two_var_table();
        tab.add_group("s", 1);
        let cons = relu_branch_constraints(&tab, 0, 1, 2).unwrap();
        assert!(satisfied(&cons, &[2.0, 2.0, 1.0], 0.0));
        assert!(satisfied(&cons, &[-1.0, 0.0, 0.0], 0.0));
        // (y, z, s) = (2, 0, 0): (s - 1/2) y = -1 < 0.
        assert!(cons[1].violation(&[2.0, 0.0, 0.0]) >= 1.0 - 1e-15);
    }

    #[test]
    fn slope_constraint_signs() {
        let tab = two_var_table();
        let con = slope_constraints(&tab, 0, 1, 0.0, 1.0).unwrap();
        assert_eq!(con.violation(&[2.0, 1.0]), 0.0);
        assert!(con.violation(&[2.0, 3.0]) >= 3.0 - 1e-15);
        assert!(slope_constraints(&tab, 0, 1, 1.0, 0.0).is_err());
    }

    #[test]
    fn relu_secants_satisfy_slope_constraint() {
        let tab = two_var_table();
        let con = slope_constraints(&tab, 0, 1, 0.0, 1.0).unwrap();
        let mut state = 7u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 6.0 - 3.0
        };
        for _ in 0..10_000 {
            let y1 = next();
            let mut y2 = next();
            if y1 == y2 {
                y2 += 0.5;
            }
            let dz = y2.max(0.0) - y1.max(0.0);
            let dy = y2 - y1;
            assert!(con.violation(&[dy, dz]) <= 1e-12);
        }
    }

    #[test]
    fn relu_theta_gadget_matches_function() {
        let mut tab = SymbolTable::new();
        tab.add_group("x", 1);
        tab.add_group("z", 1);
        tab.add_group("aux", 1);
        let cons = relu_theta_constraints(&tab, 0, 1, 2, 1.0).unwrap();
        // theta=1, x=2: aux = ReLU(1-2) = 0, z = ReLU(1-0) = 1 = ReLU_1(2).
        assert!(satisfied(&cons, &[2.0, 1.0, 0.0], 0.0));
        // theta=1, x=-1: aux = 2, z = 0.
        assert!(satisfied(&cons, &[-1.0, 0.0, 2.0], 0.0));
        assert!(relu_theta_constraints(&tab, 0, 1, 2, 0.0).is_err());
    }

    #[test]
    fn relu_theta_exactness_no_feasible_aux() {
        // theta=1, x=0.5, z=0.9 is off the graph: no aux value satisfies all
        // six constraints.
        let mut tab = SymbolTable::new();
        tab.add_group("x", 1);
        tab.add_group("z", 1);
        tab.add_group("aux", 1);
        let cons = relu_theta_constraints(&tab, 0, 1, 2, 1.0).unwrap();
        let mut min_worst = f64::INFINITY;
        let mut aux = -2.0;
        while aux <= 3.0 {
            let worst =
                cons.iter().map(|c| c.violation(&[0.5, 0.9, aux])).fold(0.0f64, f64::max);
            min_worst = min_worst.min(worst);
            aux += 1e-4;
        }
        assert!(min_worst > 1e-8, "found nearly feasible aux: {min_worst}");
    }

    #[test]
    fn affine_equality_residuals() {
        let mut tab = SymbolTable::new();
        let x = tab.add_group("x", 2);
        let y = tab.add_group("y", 1);
        let w = crate::linalg::Mat::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let cons = affine_equalities(&tab, x, y, &w, &[1.0]).unwrap();
        assert_eq!(cons.len(), 1);
        assert_eq!(cons[0].violation(&[1.0, 2.0, 4.0]), 0.0);
        assert!(cons[0].violation(&[1.0, 2.0, 5.0]) >= 1.0 - 1e-15);
    }

    #[test]
    fn ball_two_boundary_point() {
        let mut tab = SymbolTable::new();
        let x = tab.add_group("x", 2);
        let spec = PerturbationSpec::local(NormKind::Two, 1.0, vec![0.0, 0.0]).unwrap();
        let (cons, _) = ball_constraints(&tab, x, &spec, None).unwrap();
        assert_eq!(cons.len(), 1);
        assert_eq!(cons[0].form.eval(&[1.0, 0.0]), 0.0);
    }

    #[test]
    fn ball_inf_emits_per_coordinate() {
        let mut tab = SymbolTable::new();
        let x = tab.add_group("x", 3);
        let spec = PerturbationSpec::local(NormKind::Inf, 0.5, vec![0.0, 0.0, 0.0]).unwrap();
        let (cons, _) = ball_constraints(&tab, x, &spec, None).unwrap();
        assert_eq!(cons.len(), 3);
    }

    #[test]
    fn ball_one_feasible_with_abs_witness() {
        let mut tab = SymbolTable::new();
        let x = tab.add_group("x", 2);
        let aux = tab.add_group("lp_aux", 2);
        let spec = PerturbationSpec::local(NormKind::One, 1.0, vec![0.0, 0.0]).unwrap();
        let (cons, rules) = ball_constraints(&tab, x, &spec, Some(aux)).unwrap();
        assert_eq!(rules.len(), 2);
        let point = [0.5, -0.5, 0.5, 0.5];
        assert!(satisfied(&cons, &point, 0.0));
    }

    #[test]
    fn rational_cube_chain_matches_reduction() {
        // p = 3, eps = 1: x = 2 forces the square aux to 4 and y >= 8.
        let mut tab = SymbolTable::new();
        let x = tab.add_group("x", 1);
        let count = rational_ball_aux_count(1, 3, 1);
        assert_eq!(count, 3); // t, y, one squaring aux
        let aux = tab.add_group("lp_aux", count);
        let spec = PerturbationSpec { norm: NormKind::Rational { num: 3, den: 1 }, eps: 1.0, center: None };
        let (cons, _) = rational_ball_constraints(&tab, x, &spec, aux).unwrap();
        // Assignment: x=2, t=2, y, square=4. The power inequality is the only
        // Leq0 row with an off-diagonal quadratic term (the moment caps are
        // diagonal): t*square - y <= 0, so y = 8 sits on the boundary and
        // y = 7.9 fails. (The sum row fails at 8 > eps, but that is the ball
        // doing its job.)
        let power_row = cons
            .iter()
            .find(|c| {
                matches!(c.sense, crate::qp::Sense::Leq0)
                    && c.form.quad.len() == 1
                    && c.form.quad[0].0 != c.form.quad[0].1
            })
            .unwrap();
        assert_eq!(power_row.violation(&[2.0, 2.0, 8.0, 4.0]), 0.0);
        assert!(power_row.violation(&[2.0, 2.0, 7.9, 4.0]) > 0.0);
    }

    #[test]
    fn rational_ball_accepts_interior_point() {
        let mut tab = SymbolTable::new();
        let x = tab.add_group("x", 2);
        let count = rational_ball_aux_count(2, 3, 1);
        let aux = tab.add_group("lp_aux", count);
        let spec = PerturbationSpec { norm: NormKind::Rational { num: 3, den: 1 }, eps: 1.0, center: None };
        let (cons, rules) = rational_ball_constraints(&tab, x, &spec, aux).unwrap();
        // Point with ||x||_3 = 0.9: use witness rules to fill auxiliaries.
        let x0 = 0.9 / 2f64.powf(1.0 / 3.0);
        let input = [x0, -x0];
        let plan = super::super::WitnessPlan { input: 0..2, rules };
        let vals = plan.assignment(&input, tab.dim()).unwrap();
        for c in &cons {
            assert!(c.violation(&vals) <= 1e-12, "violation {}", c.violation(&vals));
        }
    }
}
