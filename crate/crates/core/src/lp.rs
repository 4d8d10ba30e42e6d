//! Dense bounded-variable simplex for the small linear programs behind the
//! scheduler: branch-and-bound node relaxations and fixed-status continuous
//! allocations.
//!
//! Minimizes `c'x` subject to sparse rows `a_i'x {<=,=,>=} b_i` and finite
//! or infinite variable bounds. Two-phase method with one slack per row and
//! artificials only for rows whose slack cannot absorb the initial
//! residual; Dantzig pricing with a Bland fallback for anti-cycling. All
//! tie-breaks are index-ordered, so solves are deterministic.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Eq,
    Ge,
}

/// One sparse constraint row.
#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// Problem in minimization form.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, kind: RowKind, rhs: f64, coeffs: Vec<(usize, f64)>) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.num_vars));
        self.rows.push(Row { coeffs, kind, rhs });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration cap exhausted without convergence; callers must treat the
    /// solve as failed, not as a bound.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

const TOL: f64 = 1e-9;
/// Minimum pivot magnitude accepted in the ratio test.
const PIVOT_TOL: f64 = 1e-8;

pub fn solve(lp: &LinearProgram) -> LpSolution {
    solve_with_bounds(lp, &lp.lower, &lp.upper)
}

/// Solve with overridden variable bounds (same rows and objective). This is
/// the entry point branch-and-bound uses when fixing binaries.
pub fn solve_with_bounds(lp: &LinearProgram, lower: &[f64], upper: &[f64]) -> LpSolution {
    debug_assert_eq!(lower.len(), lp.num_vars);
    debug_assert_eq!(upper.len(), lp.num_vars);
    let infeasible = LpSolution {
        status: LpStatus::Infeasible,
        x: vec![0.0; lp.num_vars],
        objective: f64::INFINITY,
    };
    if lower.iter().zip(upper).any(|(&l, &u)| l > u + TOL) {
        return infeasible;
    }
    Simplex::build(lp, lower, upper).run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize), // row index
    AtLower,
    AtUpper,
}

struct Simplex {
    m: usize,
    ncols: usize,
    n_struct: usize,
    /// Row-major `m x ncols` tableau holding the row-reduced system; basic
    /// columns stay unit columns across pivots.
    tab: Vec<f64>,
    /// Current values of the basic variables, one per row.
    xb: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Phase-2 objective over all columns (zero beyond the structurals).
    cost: Vec<f64>,
    n_artificial: usize,
    scratch: Vec<f64>,
}

enum RatioOutcome {
    Unbounded,
    BoundFlip(f64),
    Pivot { row: usize, t: f64 },
}

impl Simplex {
    fn build(lp: &LinearProgram, lo: &[f64], up: &[f64]) -> Self {
        let m = lp.rows.len();
        let n = lp.num_vars;

        let mut lower = lo.to_vec();
        let mut upper = up.to_vec();
        let mut cost = lp.objective.clone();
        for row in &lp.rows {
            let (slo, shi) = match row.kind {
                RowKind::Le => (0.0, f64::INFINITY),
                RowKind::Ge => (f64::NEG_INFINITY, 0.0),
                RowKind::Eq => (0.0, 0.0),
            };
            lower.push(slo);
            upper.push(shi);
            cost.push(0.0);
        }

        // Every nonbasic sits at a finite bound; a fully free column would
        // break that invariant and none of our formulations produce one.
        let mut state: Vec<VarState> = (0..n + m)
            .map(|j| {
                if lower[j].is_finite() {
                    VarState::AtLower
                } else {
                    debug_assert!(upper[j].is_finite(), "free column {j}");
                    VarState::AtUpper
                }
            })
            .collect();
        let pinned = |j: usize, st: &VarState| -> f64 {
            match st {
                VarState::AtLower => lower[j],
                VarState::AtUpper => upper[j],
                VarState::Basic(_) => unreachable!(),
            }
        };

        // Residual each row's slack must carry once structurals sit at
        // their bounds.
        let mut residual = Vec::with_capacity(m);
        for row in &lp.rows {
            let mut r = row.rhs;
            for &(j, a) in &row.coeffs {
                r -= a * pinned(j, &state[j]);
            }
            residual.push(r);
        }

        // Choose the starting basis: the row's slack when it can absorb the
        // residual, otherwise an artificial carrying the deficit.
        let mut basis = vec![usize::MAX; m];
        let mut xb = vec![0.0; m];
        let mut artificials: Vec<(usize, f64)> = Vec::new(); // (row, deficit)
        for i in 0..m {
            let s = n + i;
            let clamped = residual[i].clamp(lower[s], upper[s]);
            if (clamped - residual[i]).abs() <= TOL {
                basis[i] = s;
                state[s] = VarState::Basic(i);
                xb[i] = residual[i];
            } else {
                state[s] = if residual[i] > upper[s] {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
                let deficit = residual[i] - pinned(s, &state[s]);
                artificials.push((i, deficit));
            }
        }

        let n_artificial = artificials.len();
        let ncols = n + m + n_artificial;
        let mut tab = vec![0.0; m * ncols];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                tab[i * ncols + j] += a;
            }
            tab[i * ncols + n + i] = 1.0;
        }
        for (k, &(i, deficit)) in artificials.iter().enumerate() {
            let col = n + m + k;
            // Normalize the row so the artificial enters with +1 and a
            // non-negative value.
            if deficit < 0.0 {
                for j in 0..n + m {
                    tab[i * ncols + j] = -tab[i * ncols + j];
                }
            }
            tab[i * ncols + col] = 1.0;
            basis[i] = col;
            xb[i] = deficit.abs();
            lower.push(0.0);
            upper.push(f64::INFINITY);
            cost.push(0.0);
            state.push(VarState::Basic(i));
        }

        Simplex {
            m,
            ncols,
            n_struct: n,
            tab,
            xb,
            basis,
            state,
            lower,
            upper,
            cost,
            n_artificial,
            scratch: vec![0.0; ncols],
        }
    }

    fn pinned_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            VarState::Basic(i) => self.xb[i],
        }
    }

    fn run(mut self) -> LpSolution {
        if self.n_artificial > 0 {
            let mut phase1 = vec![0.0; self.ncols];
            for j in self.ncols - self.n_artificial..self.ncols {
                phase1[j] = 1.0;
            }
            match self.optimize(&phase1) {
                LpStatus::Stalled => return self.finish(LpStatus::Stalled),
                // Phase 1 is bounded below by zero, so unbounded cannot
                // occur; treat defensively as a failed solve.
                LpStatus::Unbounded => return self.finish(LpStatus::Stalled),
                _ => {}
            }
            let p1: f64 = (0..self.m)
                .filter(|&i| self.basis[i] >= self.ncols - self.n_artificial)
                .map(|i| self.xb[i])
                .sum();
            if p1 > 1e-7 {
                return self.finish(LpStatus::Infeasible);
            }
            // Artificials are done: pin every one to zero. Basic ones sit
            // at (numerically) zero and degenerate pivots will evict them
            // if phase 2 needs their rows.
            for j in self.ncols - self.n_artificial..self.ncols {
                self.lower[j] = 0.0;
                self.upper[j] = 0.0;
                if let VarState::Basic(i) = self.state[j] {
                    self.xb[i] = 0.0;
                }
            }
        }

        let cost = self.cost.clone();
        let status = self.optimize(&cost);
        self.finish(status)
    }

    fn optimize(&mut self, cost: &[f64]) -> LpStatus {
        let max_iters = 200 * (self.m + self.ncols) + 10_000;
        let bland_after = max_iters / 2;
        for iter in 0..max_iters {
            let bland = iter >= bland_after;
            let Some((j_in, dir)) = self.price(cost, bland) else {
                return LpStatus::Optimal;
            };
            match self.ratio_test(j_in, dir, bland) {
                RatioOutcome::Unbounded => return LpStatus::Unbounded,
                RatioOutcome::BoundFlip(t) => self.apply_bound_flip(j_in, dir, t),
                RatioOutcome::Pivot { row, t } => self.apply_pivot(j_in, dir, row, t),
            }
        }
        LpStatus::Stalled
    }

    /// Entering-variable selection: (column, direction), direction +1 moves
    /// up from the lower bound, -1 down from the upper.
    fn price(&self, cost: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols {
            let st = self.state[j];
            if matches!(st, VarState::Basic(_)) {
                continue;
            }
            if self.lower[j] == self.upper[j] {
                continue; // fixed
            }
            let mut d = cost[j];
            for i in 0..self.m {
                let cb = cost[self.basis[i]];
                if cb != 0.0 {
                    d -= cb * self.tab[i * self.ncols + j];
                }
            }
            let (improving, dir) = match st {
                VarState::AtLower => (d < -TOL, 1.0),
                VarState::AtUpper => (d > TOL, -1.0),
                VarState::Basic(_) => unreachable!(),
            };
            if !improving {
                continue;
            }
            if bland {
                return Some((j, dir));
            }
            let score = d.abs();
            if best.map_or(true, |(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn ratio_test(&self, j_in: usize, dir: f64, bland: bool) -> RatioOutcome {
        // The entering variable moves by t >= 0 in direction dir; basic i
        // changes by -dir * alpha_i * t.
        let span = self.upper[j_in] - self.lower[j_in];
        let mut t_row = f64::INFINITY;
        let mut leave: Option<usize> = None;
        let mut leave_alpha = 0.0_f64;

        for i in 0..self.m {
            let alpha = self.tab[i * self.ncols + j_in];
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let delta = -dir * alpha;
            let b = self.basis[i];
            let limit = if delta > 0.0 {
                if self.upper[b].is_finite() {
                    ((self.upper[b] - self.xb[i]) / delta).max(0.0)
                } else {
                    continue;
                }
            } else if self.lower[b].is_finite() {
                ((self.lower[b] - self.xb[i]) / delta).max(0.0)
            } else {
                continue;
            };

            let take = if limit < t_row - TOL {
                true
            } else if limit <= t_row + TOL {
                if bland {
                    leave.map_or(true, |r| self.basis[i] < self.basis[r])
                } else {
                    alpha.abs() > leave_alpha.abs()
                }
            } else {
                false
            };
            if take {
                t_row = t_row.min(limit);
                leave = Some(i);
                leave_alpha = alpha;
            }
        }

        if span.is_finite() && span < t_row - TOL {
            return RatioOutcome::BoundFlip(span);
        }
        match leave {
            Some(row) => RatioOutcome::Pivot { row, t: t_row },
            None => {
                if span.is_finite() {
                    RatioOutcome::BoundFlip(span)
                } else {
                    RatioOutcome::Unbounded
                }
            }
        }
    }

    fn apply_bound_flip(&mut self, j: usize, dir: f64, t: f64) {
        for i in 0..self.m {
            let alpha = self.tab[i * self.ncols + j];
            if alpha != 0.0 {
                self.xb[i] -= dir * alpha * t;
            }
        }
        self.state[j] = if dir > 0.0 {
            VarState::AtUpper
        } else {
            VarState::AtLower
        };
    }

    fn apply_pivot(&mut self, j_in: usize, dir: f64, row: usize, t: f64) {
        let entering_value = self.pinned_value(j_in) + dir * t;
        for i in 0..self.m {
            let alpha = self.tab[i * self.ncols + j_in];
            if alpha != 0.0 {
                self.xb[i] -= dir * alpha * t;
            }
        }

        // The leaving variable parks at the bound it reached.
        let j_out = self.basis[row];
        let xb_out = self.xb[row];
        self.state[j_out] = if self.lower[j_out].is_finite()
            && (!self.upper[j_out].is_finite()
                || (xb_out - self.lower[j_out]).abs() <= (self.upper[j_out] - xb_out).abs())
        {
            VarState::AtLower
        } else {
            VarState::AtUpper
        };

        // Gauss-Jordan elimination on the entering column.
        let pivot = self.tab[row * self.ncols + j_in];
        let inv = 1.0 / pivot;
        for j in 0..self.ncols {
            self.tab[row * self.ncols + j] *= inv;
        }
        self.tab[row * self.ncols + j_in] = 1.0;
        self.scratch
            .copy_from_slice(&self.tab[row * self.ncols..(row + 1) * self.ncols]);
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let f = self.tab[i * self.ncols + j_in];
            if f != 0.0 {
                let target = &mut self.tab[i * self.ncols..(i + 1) * self.ncols];
                for (tj, &pj) in target.iter_mut().zip(&self.scratch) {
                    if pj != 0.0 {
                        *tj -= f * pj;
                    }
                }
                target[j_in] = 0.0;
            }
        }

        self.basis[row] = j_in;
        self.state[j_in] = VarState::Basic(row);
        self.xb[row] = entering_value;
    }

    fn finish(self, status: LpStatus) -> LpSolution {
        if status != LpStatus::Optimal {
            return LpSolution {
                status,
                x: vec![0.0; self.n_struct],
                objective: f64::INFINITY,
            };
        }
        let mut x = vec![0.0; self.n_struct];
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = self.pinned_value(j);
        }
        let objective = x
            .iter()
            .zip(&self.cost[..self.n_struct])
            .map(|(xi, ci)| xi * ci)
            .sum();
        LpSolution {
            status,
            x,
            objective,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_near(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-7, "{a} != {b}");
    }

    #[test]
    fn unconstrained_box_minimum() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, -1.0];
        lp.lower = vec![-2.0, -2.0];
        lp.upper = vec![3.0, 3.0];
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_near(sol.x[0], -2.0);
        assert_near(sol.x[1], 3.0);
        assert_near(sol.objective, -5.0);
    }

    #[test]
    fn simple_le_constraint() {
        // min -x - y  s.t.  x + y <= 1.5, x,y in [0,1]
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.upper = vec![1.0, 1.0];
        lp.push_row(RowKind::Le, 1.5, vec![(0, 1.0), (1, 1.0)]);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_near(sol.objective, -1.5);
        assert_near(sol.x[0] + sol.x[1], 1.5);
    }

    #[test]
    fn equality_requires_phase_one() {
        // min x + 2y  s.t.  x + y = 2, x,y in [0, 3]
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 2.0];
        lp.upper = vec![3.0, 3.0];
        lp.push_row(RowKind::Eq, 2.0, vec![(0, 1.0), (1, 1.0)]);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_near(sol.x[0], 2.0);
        assert_near(sol.x[1], 0.0);
        assert_near(sol.objective, 2.0);
    }

    #[test]
    fn infeasible_detected() {
        // x + y = 5 with x,y in [0,1]
        let mut lp = LinearProgram::new(2);
        lp.upper = vec![1.0, 1.0];
        lp.push_row(RowKind::Eq, 5.0, vec![(0, 1.0), (1, 1.0)]);
        assert_eq!(solve(&lp).status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // min -x, x >= 0 unbounded above
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![-1.0];
        assert_eq!(solve(&lp).status, LpStatus::Unbounded);
    }

    #[test]
    fn ge_rows_and_negative_bounds() {
        // min x + y  s.t.  x + 2y >= 4, x - y >= -1, x in [-5, 5], y in [-5, 5]
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.lower = vec![-5.0, -5.0];
        lp.upper = vec![5.0, 5.0];
        lp.push_row(RowKind::Ge, 4.0, vec![(0, 1.0), (1, 2.0)]);
        lp.push_row(RowKind::Ge, -1.0, vec![(0, 1.0), (1, -1.0)]);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        // optimum at x + 2y = 4 and x - y = -1 => y = 5/3, x = 2/3
        assert_near(sol.x[0], 2.0 / 3.0);
        assert_near(sol.x[1], 5.0 / 3.0);
        assert_near(sol.objective, 7.0 / 3.0);
    }

    #[test]
    fn degenerate_rows_handled() {
        // Two identical constraints plus a redundant equality.
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, 0.0];
        lp.upper = vec![10.0, 10.0];
        lp.push_row(RowKind::Le, 4.0, vec![(0, 1.0), (1, 1.0)]);
        lp.push_row(RowKind::Le, 4.0, vec![(0, 1.0), (1, 1.0)]);
        lp.push_row(RowKind::Eq, 1.0, vec![(1, 1.0)]);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_near(sol.x[0], 3.0);
        assert_near(sol.x[1], 1.0);
    }

    #[test]
    fn fixed_variables_respected() {
        let mut lp = LinearProgram::new(3);
        lp.objective = vec![-1.0, -1.0, -1.0];
        lp.lower = vec![0.0, 0.5, 0.0];
        lp.upper = vec![1.0, 0.5, 1.0];
        lp.push_row(RowKind::Le, 1.0, vec![(0, 1.0), (1, 1.0), (2, 1.0)]);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_near(sol.x[1], 0.5);
        assert_near(sol.x[0] + sol.x[2], 0.5);
    }

    #[test]
    fn solve_with_overridden_bounds() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -2.0];
        lp.upper = vec![1.0, 1.0];
        lp.push_row(RowKind::Le, 1.2, vec![(0, 1.0), (1, 1.0)]);
        let base = solve(&lp);
        assert_near(base.objective, -2.2);
        // Fix y = 0 as a branch would.
        let sol = solve_with_bounds(&lp, &[0.0, 0.0], &[1.0, 0.0]);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_near(sol.objective, -1.0);
        assert_near(sol.x[1], 0.0);
    }

    #[test]
    fn crossing_bounds_infeasible() {
        let lp = LinearProgram::new(1);
        let sol = solve_with_bounds(&lp, &[1.0], &[0.0]);
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn soc_chain_structure() {
        // A miniature SOC recursion: soc1 = soc0 + 0.5 c0, soc2 = soc1 + 0.5 c1,
        // soc in [0,1], c in [0,1], maximize c0 + c1 with soc0 = 0.3.
        let mut lp = LinearProgram::new(4); // c0, c1, soc1, soc2
        lp.objective = vec![-1.0, -1.0, 0.0, 0.0];
        lp.upper = vec![1.0, 1.0, 1.0, 1.0];
        lp.push_row(RowKind::Eq, 0.3, vec![(2, 1.0), (0, -0.5)]);
        lp.push_row(RowKind::Eq, 0.0, vec![(3, 1.0), (2, -1.0), (1, -0.5)]);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        // soc2 = 0.3 + 0.5(c0 + c1) <= 1 => c0 + c1 <= 1.4
        assert_near(sol.objective, -1.4);
        assert_near(sol.x[3], 1.0);
    }

    #[test]
    fn many_random_feasible_boxes() {
        // Deterministic pseudo-random LPs with known-feasible interior
        // points; checks status and feasibility of the returned solution.
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _case in 0..50 {
            let n = 3 + (next() * 4.0) as usize;
            let m = 2 + (next() * 4.0) as usize;
            let mut lp = LinearProgram::new(n);
            for j in 0..n {
                lp.objective[j] = next() * 2.0 - 1.0;
                lp.lower[j] = 0.0;
                lp.upper[j] = 1.0 + next();
            }
            let interior: Vec<f64> = (0..n).map(|j| lp.upper[j] * 0.5).collect();
            for _ in 0..m {
                let coeffs: Vec<(usize, f64)> = (0..n)
                    .filter_map(|j| {
                        let a = next() * 2.0 - 1.0;
                        (a.abs() > 0.2).then_some((j, a))
                    })
                    .collect();
                if coeffs.is_empty() {
                    continue;
                }
                let lhs: f64 = coeffs.iter().map(|&(j, a)| a * interior[j]).sum();
                // Slack so the interior point stays feasible.
                lp.push_row(RowKind::Le, lhs + 0.1 + next(), coeffs);
            }
            let sol = solve(&lp);
            assert_eq!(sol.status, LpStatus::Optimal);
            for (j, &xj) in sol.x.iter().enumerate() {
                assert!(xj >= lp.lower[j] - 1e-7 && xj <= lp.upper[j] + 1e-7);
            }
            for row in &lp.rows {
                let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * sol.x[j]).sum();
                assert!(lhs <= row.rhs + 1e-6, "row violated: {lhs} > {}", row.rhs);
            }
        }
    }
}
