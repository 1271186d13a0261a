//! Small numeric helpers shared across the crate: log-space reductions,
//! Gaussian densities, adaptive quadrature and a tiny dense Cholesky.
//!
//! Weight arithmetic everywhere in this crate happens on the log scale, so
//! `log_sum_exp` is the workhorse: likelihood increments, normalization and
//! multiple-matching sums all go through it.

pub const LN_2PI: f64 = 1.8378770664093453;

/// log(Σ exp(v_i)) with the usual max subtraction. Returns -inf for an empty
/// slice or when every entry is -inf (a fully degenerate weight set).
pub fn log_sum_exp(vals: &[f64]) -> f64 {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        // Either empty, all -inf, or something is +inf/NaN; propagate as is.
        return m;
    }
    let s: f64 = vals.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// Normalize log weights in place to probabilities summing to one.
/// Returns the log of the normalizing constant (i.e. `log_sum_exp` of the
/// input). When everything is -inf the weights are left untouched and the
/// caller gets -inf back to deal with the degeneracy.
pub fn normalize_log_weights(log_w: &[f64], out: &mut Vec<f64>) -> f64 {
    let lse = log_sum_exp(log_w);
    out.clear();
    if !lse.is_finite() {
        out.extend(log_w.iter().map(|_| 0.0));
        return lse;
    }
    out.extend(log_w.iter().map(|lw| (lw - lse).exp()));
    lse
}

/// Log density of N(mean, var) at x. `var` must be positive; callers validate.
#[inline]
pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Mean and (population) variance of a slice in one pass.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Sample variance (n-1 denominator).
pub fn sample_var(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Adaptive Simpson quadrature of `f` on [a, b] to absolute tolerance `tol`.
///
/// Plain recursive bisection with the Richardson error estimate; plenty for
/// the smooth one-dimensional integrands this crate needs (density
/// normalization checks, log-error moments).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 50)
}

/// Solve the square system A x = b by Gaussian elimination with partial
/// pivoting. Returns None when a pivot vanishes (singular system). Meant for
/// the tiny systems this crate produces (sigma-point weights, d <= 8).
pub fn solve_linear_system(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = m[i][n];
        for k in i + 1..n {
            s -= m[i][k] * x[k];
        }
        x[i] = s / m[i][i];
    }
    Some(x)
}

/// Lower-triangular Cholesky factor of a small symmetric positive definite
/// matrix stored row-major. Returns None when the matrix is not (numerically)
/// positive definite. Dimensions here are tiny (proposal covariances, d <= 5),
/// so no pivoting or blocking is warranted.
pub fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// y = L z for lower-triangular L (used to correlate standard normal draws).
pub fn lower_tri_mul(l: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        for k in 0..=i {
            y[i] += l[i][k] * z[k];
        }
    }
    y
}

/// Solve L x = b for lower-triangular L (forward substitution).
pub fn forward_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}
