//! Balanced utility-maximizing assignment of participants to statements:
//! each statement receives `floor(n/k)` or `ceil(n/k)` participants and the
//! total rating of participants for their assigned statement is maximal.

use super::LlmError;
use crate::instance::BalancedMatching;

/// O(n^3) Hungarian algorithm (Jonker/Kuhn-Munkres family) on a square
/// cost matrix; returns the column matched to each row of a minimum-cost
/// perfect matching.
pub fn hungarian_min_cost(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    debug_assert!(cost.iter().all(|row| row.len() == n));
    // potentials and matching, 1-indexed internally
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut match_col = vec![0usize; n + 1]; // column -> row
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        match_col[0] = row;
        let mut j0 = 0usize;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = match_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[match_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if match_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            match_col[j0] = match_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if match_col[j] != 0 {
            assignment[match_col[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Maximize total assigned rating subject to per-statement loads of
/// `floor(n/k)` or `ceil(n/k)`.
///
/// Encoding: each statement becomes `floor` mandatory unit slots plus one
/// optional slot; `k - (n mod k)` dummy rows absorb the optional slots that
/// must stay empty (they are barred from mandatory slots), which forces
/// every real load into the balanced band.
pub fn balanced_assignment(
    ratings: &[Vec<f64>],
    n: usize,
    k: usize,
) -> Result<BalancedMatching, LlmError> {
    if ratings.len() != n || n == 0 {
        return Err(LlmError::Validation(format!(
            "ratings matrix has {} rows, expected n={n}",
            ratings.len()
        )));
    }
    if k == 0 || k > n {
        return Err(LlmError::Validation(format!(
            "statement count k={k} must satisfy 1 <= k <= n={n}"
        )));
    }
    for (i, row) in ratings.iter().enumerate() {
        if row.len() != k {
            return Err(LlmError::Validation(format!(
                "ratings row {i} has {} entries, expected k={k}",
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(LlmError::Validation(format!(
                "non-finite rating {v} in row {i}"
            )));
        }
    }

    let floor = n / k;
    let extra = n % k;
    let dummies = if extra == 0 { 0 } else { k - extra };
    let size = n + dummies; // == k * floor + k when extra > 0, else n
    debug_assert_eq!(size, if extra == 0 { n } else { k * (floor + 1) });

    let max_rating = ratings
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    let forbidden = (max_rating + 1.0) * (size as f64 + 1.0);

    // columns: for each statement, `floor` mandatory slots then (when
    // loads are uneven) one optional slot
    let per_stmt = if extra == 0 { floor } else { floor + 1 };
    let col_stmt = |col: usize| col / per_stmt;
    let col_is_optional = |col: usize| extra > 0 && col % per_stmt == per_stmt - 1;

    let mut cost = vec![vec![0.0f64; size]; size];
    for (row, cost_row) in cost.iter_mut().enumerate() {
        for (col, cell) in cost_row.iter_mut().enumerate() {
            *cell = if row < n {
                // minimize negated rating to maximize the total
                -ratings[row][col_stmt(col)]
            } else if col_is_optional(col) {
                0.0
            } else {
                forbidden
            };
        }
    }

    let assignment = hungarian_min_cost(&cost);
    let slots: Vec<usize> = (0..n).map(|i| col_stmt(assignment[i])).collect();
    Ok(BalancedMatching::new(slots))
}

/// Total rating collected by a matching.
pub fn assignment_total(ratings: &[Vec<f64>], matching: &BalancedMatching) -> f64 {
    matching
        .slots
        .iter()
        .enumerate()
        .map(|(i, &s)| ratings[i][s])
        .sum()
}
