//! Phase-1 simplex feasibility test for systems {x ∈ ℝⁿ : A x ≤ d} with free
//! variables. Free variables are split x = x⁺ − x⁻; rows with negative
//! right-hand sides receive artificial variables; the phase-1 objective
//! (sum of artificials) is minimized with Bland's anti-cycling rule. The
//! system is feasible iff the optimum is ≤ tol.

use crate::error::{Error, Result};

/// Default pivot/objective tolerance.
pub const FEAS_TOL: f64 = 1e-9;

/// Returns whether {x : A x ≤ d} is non-empty. Unbounded feasible sets are
/// feasible; an empty constraint list is trivially feasible.
pub fn phase1_feasible(a: &[Vec<f64>], d: &[f64], tol: f64) -> Result<bool> {
    if a.len() != d.len() {
        return Err(Error::Dimension(format!("{} constraint rows vs {} bounds", a.len(), d.len())));
    }
    let m = a.len();
    if m == 0 {
        return Ok(true);
    }
    let n = a[0].len();
    if a.iter().any(|row| row.len() != n) {
        return Err(Error::Dimension("ragged constraint matrix".into()));
    }

    // columns: x⁺ (n) | x⁻ (n) | slacks (m) | artificials (n_art)
    let n_art = d.iter().filter(|&&di| di < 0.0).count();
    let ncols = 2 * n + m + n_art;
    let mut t = vec![vec![0.0; ncols]; m];
    let mut rhs = vec![0.0; m];
    let mut basis = vec![0usize; m];
    let mut art_idx = 0;
    for i in 0..m {
        let neg = d[i] < 0.0;
        let sign = if neg { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
            t[i][n + j] = -sign * a[i][j];
        }
        t[i][2 * n + i] = sign; // slack
        rhs[i] = sign * d[i];
        if neg {
            let col = 2 * n + m + art_idx;
            t[i][col] = 1.0;
            basis[i] = col;
            art_idx += 1;
        } else {
            basis[i] = 2 * n + i;
        }
    }
    if n_art == 0 {
        return Ok(true); // origin satisfies every row
    }

    let is_art = |col: usize| col >= 2 * n + m;
    let objective = |basis: &[usize], rhs: &[f64]| -> f64 {
        basis.iter().zip(rhs).filter(|(b, _)| is_art(**b)).map(|(_, r)| *r).sum()
    };

    for _ in 0..20_000 {
        if objective(&basis, &rhs) <= tol {
            return Ok(true);
        }
        // reduced costs for the phase-1 objective; Bland: smallest improving index
        let mut entering = None;
        for j in 0..ncols {
            if basis.contains(&j) {
                continue;
            }
            let zj: f64 = (0..m).filter(|&i| is_art(basis[i])).map(|i| t[i][j]).sum();
            let cj = if is_art(j) { 1.0 } else { 0.0 };
            if zj - cj > tol {
                entering = Some(j);
                break;
            }
        }
        let Some(e) = entering else {
            return Ok(objective(&basis, &rhs) <= tol);
        };
        // ratio test; Bland ties: smallest basic-variable index
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][e] > tol {
                let ratio = rhs[i] / t[i][e];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-15 || ((ratio - lr).abs() <= 1e-15 && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((l, _)) = leave else {
            // entering column unbounded: phase-1 objective can't improve this way,
            // but with all-artificial costs this cannot happen for bounded objectives
            return Err(Error::Numeric("phase-1 simplex: unbounded improving direction".into()));
        };
        // pivot on (l, e)
        let pv = t[l][e];
        for v in t[l].iter_mut() {
            *v /= pv;
        }
        rhs[l] /= pv;
        for i in 0..m {
            if i != l && t[i][e].abs() > 0.0 {
                let f = t[i][e];
                for j in 0..ncols {
                    t[i][j] -= f * t[l][j];
                }
                rhs[i] -= f * rhs[l];
                if rhs[i] < 0.0 && rhs[i] > -1e-12 {
                    rhs[i] = 0.0;
                }
            }
        }
        basis[l] = e;
    }
    Err(Error::Numeric("phase-1 simplex: iteration cap reached".into()))
}
