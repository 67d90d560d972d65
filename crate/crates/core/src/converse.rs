//! Cut-set upper bound as a time-sharing linear program over six half-duplex
//! network states, solved exactly by vertex enumeration.
//!
//! Variables are `λ₁..λ₆` (state time fractions) and epigraph variables
//! `t₁, t₂`; the program maximizes `t₁ + t₂` subject to
//!
//! ```text
//! t₁ ≤ (K−1)(λ₁+λ₃) + λ₅      t₁ ≤ λ₁ + λ₄ + λ₅
//! t₂ ≤ λ₂ + λ₃ + λ₆           t₂ ≤ λ₂ + (K−1)(λ₄+λ₆)
//! Σλ = 1,  λ ≥ 0
//! ```

use serde::Serialize;

use crate::linalg::{solve, CMatrix, C64};

const VARS: usize = 8;
const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpSolution {
    pub value: f64,
    pub lambda: [f64; 6],
    pub t: [f64; 2],
    /// Names of the inequality constraints tight at the optimum.
    pub binding: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma1Bound {
    /// Upper bound on the sum-DoF.
    pub sum_bound: f64,
    /// Bound on each of the `K` per-user cuts that are summed.
    pub per_cut: Vec<f64>,
}

/// Inequalities `a·z ≤ 0` in `z = (λ₁..λ₆, t₁, t₂)`, with names.
fn inequalities(k: usize) -> Vec<(String, [f64; VARS])> {
    let km1 = (k - 1) as f64;
    let mut out = vec![
        ("t1 <= (K-1)(l1+l3)+l5".to_string(), [-km1, 0.0, -km1, 0.0, -1.0, 0.0, 1.0, 0.0]),
        ("t1 <= l1+l4+l5".to_string(), [-1.0, 0.0, 0.0, -1.0, -1.0, 0.0, 1.0, 0.0]),
        ("t2 <= l2+l3+l6".to_string(), [0.0, -1.0, -1.0, 0.0, 0.0, -1.0, 0.0, 1.0]),
        ("t2 <= l2+(K-1)(l4+l6)".to_string(), [0.0, -1.0, 0.0, -km1, 0.0, -km1, 0.0, 1.0]),
    ];
    for i in 0..6 {
        let mut a = [0.0; VARS];
        a[i] = -1.0;
        out.push((format!("l{} >= 0", i + 1), a));
    }
    out
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..r).rev().find(|&i| idx[i] != i + n - r) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// The LP objective evaluated directly at a time-sharing vector.
pub fn lp_objective(k: usize, l: &[f64; 6]) -> f64 {
    let km1 = (k - 1) as f64;
    let t1 = (km1 * (l[0] + l[2]) + l[4]).min(l[0] + l[3] + l[4]);
    let t2 = (l[1] + l[2] + l[5]).min(l[1] + km1 * (l[3] + l[5]));
    t1 + t2
}

/// # Panics
/// If `k < 2`.
pub fn lp_bound(k: usize) -> LpSolution {
    assert!(k >= 2, "the cut-set program needs K >= 2, got {k}");
    let ineq = inequalities(k);
    let eq = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
    let mut best: Option<([f64; VARS], f64)> = None;

    for active in combinations(ineq.len(), VARS - 1) {
        let mut rows: Vec<Vec<C64>> = active
            .iter()
            .map(|&i| ineq[i].1.iter().map(|&v| C64::new(v, 0.0)).collect())
            .collect();
        rows.push(eq.iter().map(|&v| C64::new(v, 0.0)).collect());
        let a = CMatrix::from_rows(&rows).expect("8x8 system");
        let mut rhs = vec![C64::new(0.0, 0.0); VARS];
        rhs[VARS - 1] = C64::new(1.0, 0.0);
        let Ok(z) = solve(&a, &CMatrix::column(&rhs)) else {
            continue;
        };
        let z: [f64; VARS] = std::array::from_fn(|i| z[(i, 0)].re);
        let feasible = ineq
            .iter()
            .all(|(_, a)| a.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>() <= FEAS_TOL);
        if !feasible {
            continue;
        }
        let value = z[6] + z[7];
        if best.is_none_or(|(_, v)| value > v + 1e-12) {
            best = Some((z, value));
        }
    }

    let (z, value) = best.expect("the uniform time split is feasible, so a vertex exists");
    let binding = ineq
        .iter()
        .filter(|(_, a)| a.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>().abs() <= FEAS_TOL)
        .map(|(n, _)| n.clone())
        .collect();
    LpSolution {
        value,
        lambda: std::array::from_fn(|i| z[i].max(0.0)),
        t: [z[6], z[7]],
        binding,
    }
}

/// Sum of the `K` per-user cuts, each bounding a user's total DoF by 1,
/// where every symbol is counted at both its source and its destination.
///
/// # Panics
/// If `k < 2`.
pub fn lemma1_sum_bound(k: usize) -> Lemma1Bound {
    assert!(k >= 2, "the cut-set bound needs K >= 2, got {k}");
    let per_cut = vec![1.0; k];
    Lemma1Bound {
        sum_bound: k as f64 / 2.0,
        per_cut,
    }
}
