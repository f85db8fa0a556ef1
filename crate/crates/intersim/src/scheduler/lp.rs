//! Dense two-phase simplex for small linear programs.
//!
//! Minimizes `c . x` subject to linear constraints and `x >= 0`, using
//! Bland's rule so the pivot sequence is deterministic and never cycles.
//! Problem sizes here are a few hundred rows and columns at most, so a
//! dense tableau is simpler and fast enough.

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// One linear constraint `sum coeffs . x  sense  rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Linear program: minimize `objective . x` over `x >= 0` subject to `rows`.
#[derive(Debug, Clone)]
pub struct LinProg {
    pub n: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<Constraint>,
}

/// Solver outcome.
#[derive(Debug, Clone)]
pub enum LpResult {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
    /// Pivot budget exhausted before termination.
    Limit,
}

const EPS: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-6;
/// Descent steeper than this with no blocking row is a real ray; anything
/// shallower is rounding error in a degenerate tableau.
const RAY_TOL: f64 = 1e-6;

struct Tableau {
    rows: usize,
    cols: usize, // structural + slack + artificial + rhs
    a: Vec<f64>, // row-major, rhs in last column
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.cols + c]
    }

    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.a[r * self.cols + c]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let cols = self.cols;
        let inv = 1.0 / self.at(pr, pc);
        for c in 0..cols {
            *self.at_mut(pr, c) *= inv;
        }
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f.abs() < EPS {
                continue;
            }
            for c in 0..cols {
                let v = self.at(pr, c);
                *self.at_mut(r, c) -= f * v;
            }
        }
        self.basis[pr] = pc;
    }

    /// Minimize `cost` (length n_real, artificials cost 1 in phase 1) with
    /// Bland's rule. Returns the reduced-cost row and objective value, or
    /// Reduced costs of the current basis: z = cost - cost_B . B^-1 A.
    /// Valid because every basis column is a unit vector after pivoting.
    fn z_row(&self, cost: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.cols];
        z[..cost.len()].copy_from_slice(cost);
        for r in 0..self.rows {
            let cb = if self.basis[r] < cost.len() {
                cost[self.basis[r]]
            } else {
                0.0
            };
            if cb == 0.0 {
                continue;
            }
            for c in 0..self.cols {
                z[c] -= cb * self.at(r, c);
            }
        }
        z
    }

    /// None on pivot budget exhaustion; Some(None) marks unboundedness.
    fn run(&mut self, cost: &[f64], limit: &mut usize) -> Option<Option<f64>> {
        let cols = self.cols;
        let mut z = self.z_row(cost);
        // incremental z updates drift, so refresh periodically and never
        // trust an unbounded verdict from a stale row
        let mut since_refresh = 0;
        // noise-scale descent columns with no pivot row get parked instead
        // of being mistaken for rays
        let mut banned = vec![false; cols - 1];
        loop {
            // Bland: entering = lowest-index column with negative reduced cost
            let mut enter = None;
            for c in 0..cols - 1 {
                if z[c] < -EPS && !banned[c] {
                    enter = Some(c);
                    break;
                }
            }
            let pc = match enter {
                Some(c) => c,
                None => return Some(Some(self.obj_of(cost))),
            };
            // ratio test; Bland tie-break on lowest leaving basis index
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let arc = self.at(r, pc);
                if arc > EPS {
                    let ratio = self.at(r, cols - 1) / arc;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - EPS
                                || (ratio < bratio + EPS && self.basis[r] < self.basis[br])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let pr = match leave {
                Some((r, _)) => r,
                None => {
                    if since_refresh > 0 {
                        z = self.z_row(cost);
                        since_refresh = 0;
                        continue;
                    }
                    if z[pc] >= -RAY_TOL {
                        banned[pc] = true;
                        continue;
                    }
                    return Some(None);
                }
            };
            if *limit == 0 {
                return None;
            }
            *limit -= 1;
            // update reduced costs alongside the pivot
            let zf = z[pc] / self.at(pr, pc);
            for c in 0..cols {
                z[c] -= zf * self.at(pr, c);
            }
            self.pivot(pr, pc);
            since_refresh += 1;
            if since_refresh >= 64 {
                z = self.z_row(cost);
                since_refresh = 0;
            }
        }
    }

    /// Objective of the current basic solution under `cost`.
    fn obj_of(&self, cost: &[f64]) -> f64 {
        let mut v = 0.0;
        for r in 0..self.rows {
            if self.basis[r] < cost.len() {
                v += cost[self.basis[r]] * self.at(r, self.cols - 1);
            }
        }
        v
    }
}

/// Solve the program with a pivot budget. `LpResult::Limit` means the budget
/// ran out first.
pub fn solve(lp: &LinProg, max_pivots: usize) -> LpResult {
    assert_eq!(lp.objective.len(), lp.n);
    let m = lp.rows.len();
    // densify and normalize rhs >= 0
    let mut dense: Vec<(Vec<f64>, Sense, f64)> = Vec::with_capacity(m);
    for row in &lp.rows {
        let mut a = vec![0.0; lp.n];
        for &(j, v) in &row.coeffs {
            assert!(j < lp.n, "coefficient column out of range");
            a[j] += v;
        }
        let (mut a, mut b, mut sense) = (a, row.rhs, row.sense);
        if b < 0.0 {
            for v in a.iter_mut() {
                *v = -*v;
            }
            b = -b;
            sense = match sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
        dense.push((a, sense, b));
    }
    let n_slack = dense
        .iter()
        .filter(|(_, s, _)| *s != Sense::Eq)
        .count();
    let n_art = dense
        .iter()
        .filter(|(_, s, _)| *s != Sense::Le)
        .count();
    let n_real = lp.n + n_slack;
    let cols = n_real + n_art + 1;
    let mut t = Tableau {
        rows: m,
        cols,
        a: vec![0.0; m * cols],
        basis: vec![0; m],
    };
    let mut si = lp.n;
    let mut ai = n_real;
    for (r, (a, sense, b)) in dense.iter().enumerate() {
        for (j, v) in a.iter().enumerate() {
            *t.at_mut(r, j) = *v;
        }
        *t.at_mut(r, cols - 1) = *b;
        match sense {
            Sense::Le => {
                *t.at_mut(r, si) = 1.0;
                t.basis[r] = si;
                si += 1;
            }
            Sense::Ge => {
                *t.at_mut(r, si) = -1.0;
                si += 1;
                *t.at_mut(r, ai) = 1.0;
                t.basis[r] = ai;
                ai += 1;
            }
            Sense::Eq => {
                *t.at_mut(r, ai) = 1.0;
                t.basis[r] = ai;
                ai += 1;
            }
        }
    }

    let mut budget = max_pivots;
    if n_art > 0 {
        let mut p1 = vec![0.0; cols - 1];
        for c in n_real..cols - 1 {
            p1[c] = 1.0;
        }
        match t.run(&p1, &mut budget) {
            None => return LpResult::Limit,
            Some(None) => unreachable!("phase 1 objective is bounded below by zero"),
            Some(Some(v)) => {
                if v > FEAS_TOL {
                    return LpResult::Infeasible;
                }
            }
        }
        // drive leftover artificials out of the basis
        for r in 0..m {
            if t.basis[r] >= n_real {
                let mut done = false;
                for c in 0..n_real {
                    if t.at(r, c).abs() > 1e-7 {
                        t.pivot(r, c);
                        done = true;
                        break;
                    }
                }
                if !done {
                    // redundant row; zero it so it never pivots again
                    for c in 0..cols {
                        *t.at_mut(r, c) = 0.0;
                    }
                }
            }
        }
        // lock artificial columns at zero
        for r in 0..m {
            for c in n_real..cols - 1 {
                *t.at_mut(r, c) = 0.0;
            }
        }
    }

    let mut p2 = vec![0.0; cols - 1];
    p2[..lp.n].copy_from_slice(&lp.objective);
    match t.run(&p2, &mut budget) {
        None => LpResult::Limit,
        Some(None) => LpResult::Unbounded,
        Some(Some(value)) => {
            let mut x = vec![0.0; lp.n];
            for r in 0..m {
                if t.basis[r] < lp.n {
                    x[t.basis[r]] = t.at(r, cols - 1).max(0.0);
                }
            }
            LpResult::Optimal { x, value }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn con(coeffs: &[(usize, f64)], sense: Sense, rhs: f64) -> Constraint {
        Constraint {
            coeffs: coeffs.to_vec(),
            sense,
            rhs,
        }
    }

    #[test]
    fn simple_bounded_optimum() {
        let lp = LinProg {
            n: 2,
            objective: vec![-1.0, -1.0],
            rows: vec![con(&[(0, 1.0), (1, 1.0)], Sense::Le, 1.0)],
        };
        match solve(&lp, 1000) {
            LpResult::Optimal { value, .. } => assert!((value + 1.0).abs() < 1e-9),
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn detects_infeasible() {
        let lp = LinProg {
            n: 1,
            objective: vec![1.0],
            rows: vec![
                con(&[(0, 1.0)], Sense::Ge, 2.0),
                con(&[(0, 1.0)], Sense::Le, 1.0),
            ],
        };
        assert!(matches!(solve(&lp, 1000), LpResult::Infeasible));
    }

    #[test]
    fn detects_unbounded() {
        let lp = LinProg {
            n: 1,
            objective: vec![-1.0],
            rows: vec![con(&[(0, 1.0)], Sense::Ge, 1.0)],
        };
        assert!(matches!(solve(&lp, 1000), LpResult::Unbounded));
    }

    #[test]
    fn equality_rows_hold() {
        let lp = LinProg {
            n: 2,
            objective: vec![1.0, 0.0],
            rows: vec![con(&[(0, 1.0), (1, 1.0)], Sense::Eq, 2.0)],
        };
        match solve(&lp, 1000) {
            LpResult::Optimal { x, value } => {
                assert!(value.abs() < 1e-9);
                assert!((x[0] + x[1] - 2.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example; Bland's rule must terminate at -0.05
        let lp = LinProg {
            n: 4,
            objective: vec![-0.75, 150.0, -0.02, 6.0],
            rows: vec![
                con(&[(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Sense::Le, 0.0),
                con(&[(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Sense::Le, 0.0),
                con(&[(2, 1.0)], Sense::Le, 1.0),
            ],
        };
        match solve(&lp, 10_000) {
            LpResult::Optimal { value, .. } => assert!((value + 0.05).abs() < 1e-9),
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    /// Enumerate candidate vertices (all n-subsets of tight constraints) and
    /// take the best feasible one. Independent of the simplex code path.
    fn vertex_oracle(lp: &LinProg, bound: f64) -> Option<f64> {
        let n = lp.n;
        // every constraint as a . x <= b, including x >= 0 and x <= bound
        let mut ineqs: Vec<(Vec<f64>, f64)> = Vec::new();
        for row in &lp.rows {
            let mut a = vec![0.0; n];
            for &(j, v) in &row.coeffs {
                a[j] += v;
            }
            match row.sense {
                Sense::Le => ineqs.push((a, row.rhs)),
                Sense::Ge => ineqs.push((a.iter().map(|v| -v).collect(), -row.rhs)),
                Sense::Eq => {
                    ineqs.push((a.clone(), row.rhs));
                    ineqs.push((a.iter().map(|v| -v).collect(), -row.rhs));
                }
            }
        }
        for j in 0..n {
            let mut a = vec![0.0; n];
            a[j] = -1.0;
            ineqs.push((a, 0.0));
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            ineqs.push((a, bound));
        }
        let m = ineqs.len();
        let mut best: Option<f64> = None;
        let mut pick = vec![0usize; n];
        fn rec(
            start: usize,
            k: usize,
            pick: &mut Vec<usize>,
            m: usize,
            n: usize,
            ineqs: &[(Vec<f64>, f64)],
            obj: &[f64],
            best: &mut Option<f64>,
        ) {
            if k == n {
                // solve the n x n tight system by elimination
                let mut a: Vec<Vec<f64>> = pick.iter().map(|&i| ineqs[i].0.clone()).collect();
                let mut b: Vec<f64> = pick.iter().map(|&i| ineqs[i].1).collect();
                for col in 0..n {
                    let piv = (col..n).max_by(|&r1, &r2| {
                        a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap()
                    });
                    let piv = piv.unwrap();
                    if a[piv][col].abs() < 1e-9 {
                        return;
                    }
                    a.swap(col, piv);
                    b.swap(col, piv);
                    for r in 0..n {
                        if r != col {
                            let f = a[r][col] / a[col][col];
                            if f != 0.0 {
                                for c in col..n {
                                    a[r][c] -= f * a[col][c];
                                }
                                b[r] -= f * b[col];
                            }
                        }
                    }
                }
                let x: Vec<f64> = (0..n).map(|i| b[i] / a[i][i]).collect();
                for (row, rhs) in ineqs {
                    let v: f64 = row.iter().zip(&x).map(|(a, x)| a * x).sum();
                    if v > rhs + 1e-7 {
                        return;
                    }
                }
                let v: f64 = obj.iter().zip(&x).map(|(c, x)| c * x).sum();
                if best.is_none() || v < best.unwrap() {
                    *best = Some(v);
                }
                return;
            }
            for i in start..m {
                pick[k] = i;
                rec(i + 1, k + 1, pick, m, n, ineqs, obj, best);
            }
        }
        rec(0, 0, &mut pick, m, n, &ineqs, &lp.objective, &mut best);
        best
    }

    #[test]
    fn matches_vertex_enumeration_on_random_programs() {
        let mut rng = ChaCha8Rng::seed_from_u64(07);
        let bound = 10.0;
        for case in 0..300 {
            let n = rng.gen_range(2..=4);
            let m = rng.gen_range(1..=5);
            let mut rows = Vec::new();
            for _ in 0..m {
                let coeffs: Vec<(usize, f64)> = (0..n)
                    .map(|j| (j, (rng.gen::<f64>() - 0.5) * 6.0))
                    .collect();
                let sense = match rng.gen_range(0..3) {
                    0 => Sense::Le,
                    1 => Sense::Ge,
                    _ => Sense::Eq,
                };
                rows.push(con(&coeffs, sense, rng.gen_range(-2.0..6.0)));
            }
            // box rows keep the oracle's vertex set finite
            for j in 0..n {
                rows.push(con(&[(j, 1.0)], Sense::Le, bound));
            }
            let lp = LinProg {
                n,
                objective: (0..n).map(|_| (rng.gen::<f64>() - 0.5) * 4.0).collect(),
                rows,
            };
            let expect = vertex_oracle(&lp, bound);
            match (solve(&lp, 100_000), expect) {
                (LpResult::Optimal { value, .. }, Some(v)) => {
                    assert!(
                        (value - v).abs() < 1e-5,
                        "case {case}: simplex {value} oracle {v}"
                    );
                }
                (LpResult::Infeasible, None) => {}
                (got, want) => panic!("case {case}: simplex {got:?} oracle {want:?}"),
            }
        }
    }
}
