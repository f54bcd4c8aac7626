//! Dense linear assignment (Hungarian / Kuhn-Munkres with potentials), O(n^3).

use crate::scalar::Scalar;

/// Optimal assignment of rows to columns with the dual potentials that certify it.
#[derive(Debug, Clone)]
pub struct Assignment<T> {
    /// `perm[row] = col`.
    pub perm: Vec<usize>,
    /// Row potentials.
    pub u: Vec<T>,
    /// Column potentials.
    pub v: Vec<T>,
}

impl<T: Scalar> Assignment<T> {
    /// Total cost of the assignment under `cost` (row-major `n x n`).
    pub fn total(&self, cost: &[T]) -> T {
        let n = self.perm.len();
        self.perm
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[i * n + j])
            .sum()
    }
}

/// Solves `min_perm sum_i cost[i][perm[i]]` for a row-major square matrix.
pub fn solve<T: Scalar>(cost: &[T], n: usize) -> Assignment<T> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return Assignment {
            perm: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
        };
    }
    let inf = T::infinity();
    // 1-based bookkeeping; column 0 is the virtual start.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    Assignment {
        perm,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
    }
}

/// Optimal assignment that is lexicographically smallest among all optima.
///
/// Every optimum is a perfect matching on the zero-reduced-cost edges of an
/// optimal dual, so the solver's matching is rotated along alternating paths
/// of that subgraph, fixing rows one at a time to their smallest feasible column.
pub fn solve_lexicographic<T: Scalar>(cost: &[T], n: usize) -> Assignment<T> {
    let mut sol = solve(cost, n);
    if n < 2 {
        return sol;
    }
    let scale = cost.iter().fold(T::one(), |m, c| m.max(c.abs()));
    let tol = T::of(1e-9) * scale;
    let tight = |i: usize, j: usize| cost[i * n + j] - sol.u[i] - sol.v[j] <= tol;
    let tight: Vec<bool> = (0..n * n).map(|k| tight(k / n, k % n)).collect();

    let mut row_of = vec![0usize; n];
    for (i, &j) in sol.perm.iter().enumerate() {
        row_of[j] = i;
    }
    let mut perm = sol.perm.clone();
    for i in 0..n {
        for j in 0..perm[i] {
            if !tight[i * n + j] || row_of[j] < i {
                continue;
            }
            if let Some(path) = alternating_path(&tight, n, &perm, &row_of, i, j) {
                // path: rows taking new columns, in order
                for (r, c) in path {
                    perm[r] = c;
                    row_of[c] = r;
                }
                perm[i] = j;
                row_of[j] = i;
                break;
            }
        }
    }
    sol.perm = perm;
    sol
}

/// Finds reassignments for rows `> fixed` so that row `fixed` can take column
/// `want` and its old column gets reused, using tight edges only.
fn alternating_path(
    tight: &[bool],
    n: usize,
    perm: &[usize],
    row_of: &[usize],
    fixed: usize,
    want: usize,
) -> Option<Vec<(usize, usize)>> {
    let target = perm[fixed];
    let start = row_of[want];
    // BFS over rows; parent[row] = (previous row, column taken by `row`'s predecessor link)
    let mut seen_col = vec![false; n];
    seen_col[want] = true;
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(start);
    let mut visited_row = vec![false; n];
    visited_row[start] = true;
    while let Some(r) = queue.pop_front() {
        for c in 0..n {
            if seen_col[c] || !tight[r * n + c] {
                continue;
            }
            seen_col[c] = true;
            if c == target {
                let mut path = vec![(r, c)];
                let mut cur = r;
                while let Some((pr, pc)) = prev[cur] {
                    path.push((pr, pc));
                    cur = pr;
                }
                return Some(path);
            }
            let next = row_of[c];
            if next <= fixed || visited_row[next] {
                continue;
            }
            visited_row[next] = true;
            prev[next] = Some((r, c));
            queue.push_back(next);
        }
    }
    None
}
