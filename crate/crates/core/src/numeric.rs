//! Small fitting and optimization utilities shared by the solver and the
//! characterization fits.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("fit diverged")]
    FitDiverged,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// Derivative-free bounded scalar minimization by golden-section search.
///
/// Converges to `rel_tol` relative interval width (floored at 1e-300 absolute
/// for intervals touching zero).
pub fn golden_section_min<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    rel_tol: f64,
) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..400 {
        if (b - a).abs() <= rel_tol * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Expand a bracket around `x0` until the midpoint is no worse than both
/// edges, then golden-section inside it. Used where a fit is specified to
/// start from an initial guess.
pub fn bracketed_min<F: FnMut(f64) -> f64>(
    mut f: F,
    x0: f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> f64 {
    let x0 = x0.clamp(lo, hi);
    let span0 = (hi - lo).max(1e-300);
    let mut half = (0.05 * span0).max(1e-6 * x0.abs()).max(1e-12);
    for _ in 0..64 {
        let a = (x0 - half).max(lo);
        let b = (x0 + half).min(hi);
        if (f(x0) <= f(a) && f(x0) <= f(b)) || (a == lo && b == hi) {
            return golden_section_min(f, a, b, rel_tol);
        }
        half *= 2.0;
    }
    golden_section_min(f, lo, hi, rel_tol)
}

/// Solve the square linear system `m x = rhs` in place by Gaussian
/// elimination with partial pivoting. Returns `None` when singular.
pub fn solve_linear(m: &mut [Vec<f64>], rhs: &mut [f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Result of a damped least-squares fit.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub params: Vec<f64>,
    /// Covariance estimate `(JᵀWJ)⁻¹` at the solution.
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub iterations: usize,
}

/// Damped (Levenberg–Marquardt) least squares for a handful of parameters.
///
/// `model(x, params)` evaluates the fit function at one abscissa; `weights`
/// are per-point inverse variances (use 1.0 for unweighted fits). Converges
/// on a relative step below `1e-10`.
pub fn levenberg_marquardt<M>(
    xs: &[f64],
    ys: &[f64],
    weights: &[f64],
    start: &[f64],
    mut model: M,
) -> Result<LeastSquaresFit, FitError>
where
    M: FnMut(f64, &[f64]) -> f64,
{
    let npar = start.len();
    if xs.len() != ys.len() || xs.len() != weights.len() {
        return Err(FitError::InsufficientData("length mismatch".into()));
    }
    if xs.len() < npar {
        return Err(FitError::InsufficientData(format!(
            "{} points for {npar} parameters",
            xs.len()
        )));
    }
    let chi2_of = |p: &[f64], model: &mut M| -> f64 {
        xs.iter()
            .zip(ys)
            .zip(weights)
            .map(|((&x, &y), &w)| {
                let r = y - model(x, p);
                w * r * r
            })
            .sum()
    };

    let mut params = start.to_vec();
    let mut chi2 = chi2_of(&params, &mut model);
    if !chi2.is_finite() {
        return Err(FitError::FitDiverged);
    }
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for _ in 0..200 {
        iterations += 1;
        // Numeric Jacobian by central differences.
        let mut jac = vec![vec![0.0; npar]; xs.len()];
        for j in 0..npar {
            let step = (params[j].abs() * 1e-6).max(1e-12);
            let mut hi = params.clone();
            let mut lo = params.clone();
            hi[j] += step;
            lo[j] -= step;
            for (i, &x) in xs.iter().enumerate() {
                jac[i][j] = (model(x, &hi) - model(x, &lo)) / (2.0 * step);
            }
        }
        // Normal equations JᵀWJ and JᵀW r.
        let mut jtj = vec![vec![0.0; npar]; npar];
        let mut jtr = vec![0.0; npar];
        for (i, &x) in xs.iter().enumerate() {
            let r = ys[i] - model(x, &params);
            let w = weights[i];
            for a in 0..npar {
                jtr[a] += w * jac[i][a] * r;
                for b in 0..npar {
                    jtj[a][b] += w * jac[i][a] * jac[i][b];
                }
            }
            let _ = x;
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for a in 0..npar {
                damped[a][a] += lambda * jtj[a][a].max(1e-300);
            }
            let mut rhs = jtr.clone();
            let Some(step) = solve_linear(&mut damped, &mut rhs) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + s).collect();
            let trial_chi2 = chi2_of(&trial, &mut model);
            if trial_chi2.is_finite() && trial_chi2 <= chi2 {
                let rel_step = step
                    .iter()
                    .zip(&params)
                    .map(|(s, p)| s.abs() / p.abs().max(1e-30))
                    .fold(0.0, f64::max);
                params = trial;
                let rel_impr = (chi2 - trial_chi2) / chi2.max(1e-300);
                chi2 = trial_chi2;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel_step < 1e-10 || rel_impr < 1e-14 {
                    let covariance = invert_normal_matrix(&jtj)
                        .ok_or(FitError::FitDiverged)?;
                    return Ok(LeastSquaresFit { params, covariance, chi2, iterations });
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }
        if !improved {
            break;
        }
    }
    let mut jtj = vec![vec![0.0; npar]; npar];
    for (i, &x) in xs.iter().enumerate() {
        let w = weights[i];
        for a in 0..npar {
            let step_a = (params[a].abs() * 1e-6).max(1e-12);
            let mut hi = params.clone();
            let mut lo = params.clone();
            hi[a] += step_a;
            lo[a] -= step_a;
            let da = (model(x, &hi) - model(x, &lo)) / (2.0 * step_a);
            for b in 0..npar {
                let step_b = (params[b].abs() * 1e-6).max(1e-12);
                let mut hb = params.clone();
                let mut lb = params.clone();
                hb[b] += step_b;
                lb[b] -= step_b;
                let db = (model(x, &hb) - model(x, &lb)) / (2.0 * step_b);
                jtj[a][b] += w * da * db;
            }
        }
        let _ = i;
    }
    let covariance = invert_normal_matrix(&jtj).ok_or(FitError::FitDiverged)?;
    Ok(LeastSquaresFit { params, covariance, chi2, iterations })
}

fn invert_normal_matrix(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut a: Vec<Vec<f64>> = m.to_vec();
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve_linear(&mut a, &mut e)?);
    }
    let mut out = vec![vec![0.0; n]; n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            out[i][j] = col[i];
        }
    }
    Some(out)
}

/// Weighted mean and its standard error.
pub fn weighted_mean(values: &[f64], sigmas: &[f64]) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&v, &s) in values.iter().zip(sigmas) {
        let w = 1.0 / (s * s).max(1e-300);
        num += w * v;
        den += w;
    }
    (num / den, (1.0 / den).sqrt())
}

/// Sample standard deviation (n − 1 normalization).
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    var.sqrt()
}
