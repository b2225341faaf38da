//! Dense two-phase simplex with Bland's rule (anti-cycling) for the small
//! linear programs that pattern enumeration generates.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-9;
const FEAS_EPS: f64 = 1e-7;
const MAX_PIVOTS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpRel {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { objective: f64, point: Vec<f64> },
    Infeasible,
    Unbounded,
}

/// Minimize costs . x subject to the given rows over x >= 0.
pub fn solve_lp(costs: &[f64], rows: &[(Vec<f64>, LpRel, f64)]) -> Result<LpOutcome> {
    let n = costs.len();
    let m = rows.len();

    // Normalize to nonnegative right-hand sides.
    let mut norm_rows: Vec<(Vec<f64>, LpRel, f64)> = Vec::with_capacity(m);
    for (coeffs, rel, rhs) in rows {
        assert_eq!(coeffs.len(), n);
        if *rhs < 0.0 {
            let flipped = match rel {
                LpRel::Le => LpRel::Ge,
                LpRel::Ge => LpRel::Le,
                LpRel::Eq => LpRel::Eq,
            };
            norm_rows.push((coeffs.iter().map(|c| -c).collect(), flipped, -rhs));
        } else {
            norm_rows.push((coeffs.clone(), *rel, *rhs));
        }
    }

    let num_slack = norm_rows.iter().filter(|(_, rel, _)| *rel != LpRel::Eq).count();
    let num_artificial =
        norm_rows.iter().filter(|(_, rel, _)| *rel != LpRel::Le).count();
    let total = n + num_slack + num_artificial;

    let mut tableau: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs: Vec<f64> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut slack_cursor = n;
    let mut artificial_cursor = n + num_slack;
    let artificial_start = n + num_slack;

    for (coeffs, rel, b) in &norm_rows {
        let mut row = vec![0.0; total];
        row[..n].copy_from_slice(coeffs);
        match rel {
            LpRel::Le => {
                row[slack_cursor] = 1.0;
                basis.push(slack_cursor);
                slack_cursor += 1;
            }
            LpRel::Ge => {
                row[slack_cursor] = -1.0;
                slack_cursor += 1;
                row[artificial_cursor] = 1.0;
                basis.push(artificial_cursor);
                artificial_cursor += 1;
            }
            LpRel::Eq => {
                row[artificial_cursor] = 1.0;
                basis.push(artificial_cursor);
                artificial_cursor += 1;
            }
        }
        tableau.push(row);
        rhs.push(*b);
    }

    let mut state = Tableau { tableau, rhs, basis, total };

    if num_artificial > 0 {
        let mut phase1 = vec![0.0; total];
        for c in phase1.iter_mut().skip(artificial_start) {
            *c = 1.0;
        }
        match state.optimize(&phase1, total)? {
            PivotEnd::Optimal => {}
            PivotEnd::Unbounded => {
                return Err(Error::LpNumericalTrouble("phase-1 objective unbounded"))
            }
        }
        let phase1_value = state.objective(&phase1);
        if phase1_value > FEAS_EPS {
            return Ok(LpOutcome::Infeasible);
        }
        state.drive_out_artificials(artificial_start)?;
    }

    let mut phase2 = vec![0.0; state.total];
    phase2[..n].copy_from_slice(costs);
    match state.optimize(&phase2, artificial_start)? {
        PivotEnd::Optimal => {}
        PivotEnd::Unbounded => return Ok(LpOutcome::Unbounded),
    }
    let mut point = vec![0.0; n];
    for (row, &var) in state.basis.iter().enumerate() {
        if var < n {
            point[var] = state.rhs[row];
        }
    }
    Ok(LpOutcome::Optimal { objective: state.objective(&phase2), point })
}

enum PivotEnd {
    Optimal,
    Unbounded,
}

struct Tableau {
    tableau: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    total: usize,
}

impl Tableau {
    fn objective(&self, costs: &[f64]) -> f64 {
        self.basis
            .iter()
            .enumerate()
            .map(|(row, &var)| costs[var] * self.rhs[row])
            .sum()
    }

    /// Bland pivoting to optimality of `costs` over columns < `col_limit`.
    fn optimize(&mut self, costs: &[f64], col_limit: usize) -> Result<PivotEnd> {
        for _ in 0..MAX_PIVOTS {
            // Reduced costs r_j = c_j - c_B . T[:, j]; recomputed per pivot,
            // which is cheap at this scale and immune to drift.
            let mut entering = None;
            for j in 0..col_limit {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut reduced = costs[j];
                for (row, &var) in self.basis.iter().enumerate() {
                    if costs[var] != 0.0 {
                        reduced -= costs[var] * self.tableau[row][j];
                    }
                }
                if reduced < -PIVOT_EPS {
                    entering = Some(j);
                    break; // Bland: smallest improving index.
                }
            }
            let Some(enter) = entering else { return Ok(PivotEnd::Optimal) };

            let mut leave: Option<(usize, f64)> = None;
            for row in 0..self.tableau.len() {
                let coeff = self.tableau[row][enter];
                if coeff > PIVOT_EPS {
                    let ratio = self.rhs[row] / coeff;
                    let better = match leave {
                        None => true,
                        Some((best_row, best_ratio)) => {
                            ratio < best_ratio - PIVOT_EPS
                                || (ratio < best_ratio + PIVOT_EPS
                                    && self.basis[row] < self.basis[best_row])
                        }
                    };
                    if better {
                        leave = Some((row, ratio));
                    }
                }
            }
            let Some((pivot_row, _)) = leave else { return Ok(PivotEnd::Unbounded) };
            self.pivot(pivot_row, enter);
        }
        Err(Error::LpNumericalTrouble("pivot limit reached"))
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let pivot = self.tableau[row][col];
        for v in &mut self.tableau[row] {
            *v /= pivot;
        }
        self.rhs[row] /= pivot;
        for r in 0..self.tableau.len() {
            if r == row {
                continue;
            }
            let factor = self.tableau[r][col];
            if factor == 0.0 {
                continue;
            }
            for c in 0..self.total {
                let delta = factor * self.tableau[row][c];
                self.tableau[r][c] -= delta;
            }
            self.rhs[r] -= factor * self.rhs[row];
        }
        self.basis[row] = col;
    }

    /// After phase 1, pivot basic artificials onto structural columns and
    /// drop redundant rows so artificials can never re-enter.
    fn drive_out_artificials(&mut self, artificial_start: usize) -> Result<()> {
        let mut row = 0;
        while row < self.tableau.len() {
            if self.basis[row] >= artificial_start {
                let col = (0..artificial_start)
                    .find(|&j| self.tableau[row][j].abs() > PIVOT_EPS);
                match col {
                    Some(col) => self.pivot(row, col),
                    None => {
                        // Redundant constraint.
                        self.tableau.remove(row);
                        self.rhs.remove(row);
                        self.basis.remove(row);
                        continue;
                    }
                }
            }
            row += 1;
        }
        for r in &mut self.tableau {
            r.truncate(artificial_start);
        }
        self.total = artificial_start;
        Ok(())
    }
}
