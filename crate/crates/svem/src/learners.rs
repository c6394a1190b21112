//! Observation-weighted base learners.
//!
//! Both learners fit against the training-weighted response and tune on the
//! validation-weighted copy of the same rows — no data splitting. Forward
//! selection walks a greedy path from the intercept-only model, adding the
//! candidate column with the largest training-weighted SSE reduction and
//! refitting all included coefficients at each step; the Lasso solves a
//! coordinate-descent path over a geometric lambda grid with the intercept
//! unpenalized. Each returns the path solution with minimal
//! validation-weighted SSE.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Result, SvemError};
use crate::linalg::{cholesky_in_place, cholesky_solve, solve_lower_transpose};
use crate::weights::WeightPair;

/// Which base learner an ensemble uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Learner {
    ForwardSelection,
    Lasso,
}

impl std::fmt::Display for Learner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Learner::ForwardSelection => write!(f, "forward_selection"),
            Learner::Lasso => write!(f, "lasso"),
        }
    }
}

/// A fitted base model: one coefficient per candidate column (zero where the
/// path never activated a term), plus which path step / lambda was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Aligned to the model-matrix columns; includes the intercept slot.
    pub coefficients: Array1<f64>,
    pub intercept_index: usize,
    /// Path step (forward selection) or lambda index (Lasso).
    pub tuning_index: usize,
}

impl FitResult {
    pub fn intercept(&self) -> f64 {
        self.coefficients[self.intercept_index]
    }

    /// Prediction is affine in the model-matrix row.
    pub fn predict_row(&self, x_row: ndarray::ArrayView1<f64>) -> f64 {
        x_row.dot(&self.coefficients)
    }

    pub fn nonzero(&self) -> Vec<(usize, f64)> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(j, &c)| (j, c))
            .collect()
    }
}

fn check_dims(x: ArrayView2<f64>, y: &[f64], w: &[f64]) -> Result<()> {
    if x.nrows() != y.len() || y.len() != w.len() {
        return Err(SvemError::Degenerate(format!(
            "dimension mismatch: X is {}x{}, y has {}, w has {}",
            x.nrows(),
            x.ncols(),
            y.len(),
            w.len()
        )));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(SvemError::Degenerate("empty design matrix".into()));
    }
    if w.iter().any(|&wi| !(wi > 0.0) || !wi.is_finite()) {
        return Err(SvemError::Degenerate(
            "observation weights must be positive and finite".into(),
        ));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SvemError::Degenerate("response contains non-finite values".into()));
    }
    Ok(())
}

/// Index of the first identically-one column, if any.
pub fn find_intercept_column(x: ArrayView2<f64>) -> Option<usize> {
    (0..x.ncols()).find(|&j| x.column(j).iter().all(|&v| v == 1.0))
}

fn weighted_gram(x: ArrayView2<f64>, y: &[f64], w: &[f64]) -> (Array2<f64>, Vec<f64>, f64) {
    let n = x.nrows();
    let p = x.ncols();
    let mut gram = Array2::<f64>::zeros((p, p));
    let mut xty = vec![0.0; p];
    let mut yty = 0.0;
    for i in 0..n {
        let wi = w[i];
        let row = x.row(i);
        yty += wi * y[i] * y[i];
        for a in 0..p {
            let wa = wi * row[a];
            xty[a] += wa * y[i];
            for b in a..p {
                gram[[a, b]] += wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[[a, b]] = gram[[b, a]];
        }
    }
    (gram, xty, yty)
}

/// Minimizes sum_i w_i (y_i - x_i' beta)^2 via the weighted normal equations.
/// A singular Gram matrix gets one retry with ridge jitter 1e-10*trace/k on
/// the diagonal; if that still fails the system is reported singular.
pub fn weighted_least_squares(x: ArrayView2<f64>, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_dims(x, y, w)?;
    let p = x.ncols();
    let (gram, xty, _) = weighted_gram(x, y, w);
    let mut l = gram.clone();
    if cholesky_in_place(&mut l).is_ok() {
        return Ok(cholesky_solve(&l, &xty));
    }
    let trace: f64 = (0..p).map(|j| gram[[j, j]]).sum();
    let jitter = 1e-10 * trace / p as f64;
    let mut l = gram;
    for j in 0..p {
        l[[j, j]] += jitter;
    }
    match cholesky_in_place(&mut l) {
        Ok(()) => Ok(cholesky_solve(&l, &xty)),
        Err(col) => Err(SvemError::Singular(format!(
            "weighted Gram matrix not positive definite at pivot {col} even after ridge jitter"
        ))),
    }
}

/// Greedy forward selection tuned by validation-weighted SSE.
pub fn forward_selection_fit(
    x: ArrayView2<f64>,
    y: &[f64],
    weights: &WeightPair,
) -> Result<FitResult> {
    let intercept = find_intercept_column(x).ok_or_else(|| {
        SvemError::Degenerate("forward selection requires an intercept column".into())
    })?;
    fit_forward(x, y, weights, intercept)
}

pub(crate) fn fit_forward(
    x: ArrayView2<f64>,
    y: &[f64],
    weights: &WeightPair,
    intercept: usize,
) -> Result<FitResult> {
    check_dims(x, y, &weights.train)?;
    check_dims(x, y, &weights.valid)?;
    let n = x.nrows();
    let p = x.ncols();
    let max_steps = (p - 1).min(n - 1);

    let (gram, xty, yty) = weighted_gram(x, y, &weights.train);

    // Incrementally grown Cholesky factor of the selected Gram block, the
    // rotated RHS z = L^{-1} g_S, and per-candidate partial solves so each
    // step costs O(s) per candidate.
    let cap = max_steps + 1;
    let mut l = Array2::<f64>::zeros((cap, cap));
    let mut z: Vec<f64> = Vec::with_capacity(cap);
    let mut selected: Vec<usize> = Vec::with_capacity(cap);

    let l00 = gram[[intercept, intercept]].sqrt();
    if !(l00 > 0.0) {
        return Err(SvemError::Singular("intercept column has zero weight".into()));
    }
    l[[0, 0]] = l00;
    z.push(xty[intercept] / l00);
    selected.push(intercept);

    let mut in_model = vec![false; p];
    in_model[intercept] = true;

    // per-candidate state: partial forward-solve vector, residual diagonal,
    // and the projected RHS remainder
    let mut cand_l: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut cand_d2: Vec<f64> = vec![0.0; p];
    let mut cand_num: Vec<f64> = vec![0.0; p];
    for j in 0..p {
        if in_model[j] {
            continue;
        }
        let l0 = gram[[intercept, j]] / l00;
        cand_l[j].push(l0);
        cand_d2[j] = gram[[j, j]] - l0 * l0;
        cand_num[j] = xty[j] - l0 * z[0];
    }

    let valid_sse = |sel: &[usize], beta: &[f64]| -> f64 {
        let mut sse = 0.0;
        for i in 0..n {
            let mut pred = 0.0;
            for (k, &col) in sel.iter().enumerate() {
                pred += x[[i, col]] * beta[k];
            }
            let r = y[i] - pred;
            sse += weights.valid[i] * r * r;
        }
        sse
    };

    let beta_for_prefix = |l: &Array2<f64>, z: &[f64], m: usize| -> Vec<f64> {
        let lm = l.slice(ndarray::s![0..m, 0..m]).to_owned();
        solve_lower_transpose(&lm, &z[..m])
    };

    let b0 = beta_for_prefix(&l, &z, 1);
    let mut best_sse = valid_sse(&selected[..1], &b0);
    let mut best_step = 0usize;

    let mut train_sse = yty - z[0] * z[0];
    for step in 1..=max_steps {
        let mut best_j: Option<usize> = None;
        let mut best_red = 0.0f64;
        for j in 0..p {
            if in_model[j] {
                continue;
            }
            let d2 = cand_d2[j];
            if !(d2 > 1e-10 * gram[[j, j]].max(f64::MIN_POSITIVE)) {
                continue; // numerically collinear with the current model
            }
            let red = cand_num[j] * cand_num[j] / d2;
            if best_j.is_none() || red > best_red {
                best_j = Some(j);
                best_red = red;
            }
        }
        let Some(jstar) = best_j else { break };

        let s = selected.len();
        let d = cand_d2[jstar].sqrt();
        for (k, &lv) in cand_l[jstar].iter().enumerate() {
            l[[s, k]] = lv;
        }
        l[[s, s]] = d;
        let zj = cand_num[jstar] / d;
        z.push(zj);
        selected.push(jstar);
        in_model[jstar] = true;

        let new_train_sse = train_sse - zj * zj;
        debug_assert!(
            new_train_sse <= train_sse + 1e-9 * (1.0 + train_sse.abs()),
            "training SSE must be non-increasing along the path"
        );
        train_sse = new_train_sse;

        // extend every remaining candidate's partial solve by one coordinate
        for j in 0..p {
            if in_model[j] {
                continue;
            }
            let mut acc = gram[[jstar, j]];
            for (k, &lv) in cand_l[j].iter().enumerate() {
                acc -= l[[s, k]] * lv;
            }
            let lnew = acc / d;
            cand_l[j].push(lnew);
            cand_d2[j] -= lnew * lnew;
            cand_num[j] -= lnew * zj;
        }

        let beta = beta_for_prefix(&l, &z, s + 1);
        let sse_v = valid_sse(&selected, &beta);
        if sse_v < best_sse {
            best_sse = sse_v;
            best_step = step;
        }
    }

    let m = best_step + 1;
    let beta = beta_for_prefix(&l, &z, m);
    let mut coefficients = Array1::<f64>::zeros(p);
    for (k, &col) in selected[..m].iter().enumerate() {
        coefficients[col] = beta[k];
    }
    Ok(FitResult {
        coefficients,
        intercept_index: intercept,
        tuning_index: best_step,
    })
}

/// Number of lambda values on the path and its dynamic range.
const LASSO_PATH_LEN: usize = 100;
const LASSO_LAMBDA_RATIO: f64 = 1e-4;
const LASSO_MAX_SWEEPS: usize = 20_000;

/// A full Lasso solution path (kept mainly for audit and tests; ensemble
/// fitting uses the best solution only).
#[derive(Debug, Clone)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    /// Original-scale coefficient vectors per lambda, intercept slot filled.
    pub coefficients: Vec<Array1<f64>>,
    pub valid_sse: Vec<f64>,
}

/// Weighted Lasso along the geometric lambda grid, tuned by
/// validation-weighted SSE; coefficients returned on the original scale.
pub fn lasso_path_fit(x: ArrayView2<f64>, y: &[f64], weights: &WeightPair) -> Result<FitResult> {
    let intercept = find_intercept_column(x)
        .ok_or_else(|| SvemError::Degenerate("lasso requires an intercept column".into()))?;
    let (fit, _) = fit_lasso(x, y, weights, intercept, false)?;
    Ok(fit)
}

/// Solves the whole path and returns every solution.
pub fn lasso_path(x: ArrayView2<f64>, y: &[f64], weights: &WeightPair) -> Result<LassoPath> {
    let intercept = find_intercept_column(x)
        .ok_or_else(|| SvemError::Degenerate("lasso requires an intercept column".into()))?;
    let (_, path) = fit_lasso(x, y, weights, intercept, true)?;
    Ok(path.expect("path requested"))
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub(crate) fn fit_lasso(
    x: ArrayView2<f64>,
    y: &[f64],
    weights: &WeightPair,
    intercept: usize,
    keep_path: bool,
) -> Result<(FitResult, Option<LassoPath>)> {
    check_dims(x, y, &weights.train)?;
    check_dims(x, y, &weights.valid)?;
    let n = x.nrows();
    let p = x.ncols();
    let wt = &weights.train;
    let sw: f64 = wt.iter().sum();

    // training-weighted standardization of the non-intercept columns
    let mut mu = vec![0.0; p];
    let mut sd = vec![0.0; p];
    let mut active: Vec<usize> = Vec::new();
    for j in 0..p {
        if j == intercept {
            continue;
        }
        let col = x.column(j);
        let m = col
            .iter()
            .zip(wt)
            .map(|(&v, &w)| w * v)
            .sum::<f64>()
            / sw;
        let var = col
            .iter()
            .zip(wt)
            .map(|(&v, &w)| w * (v - m) * (v - m))
            .sum::<f64>()
            / sw;
        mu[j] = m;
        sd[j] = var.sqrt();
        if sd[j] > 1e-12 * m.abs().max(1.0) {
            active.push(j);
        }
    }
    let y_bar_w: f64 = y.iter().zip(wt).map(|(&v, &w)| w * v).sum::<f64>() / sw;

    // standardized active columns, materialized column-major
    let xs: Vec<Vec<f64>> = active
        .iter()
        .map(|&j| {
            (0..n)
                .map(|i| (x[[i, j]] - mu[j]) / sd[j])
                .collect::<Vec<f64>>()
        })
        .collect();
    let mut r: Vec<f64> = y.iter().map(|&v| v - y_bar_w).collect();

    let lambda_max = xs
        .iter()
        .map(|col| {
            let dot: f64 = col.iter().zip(r.iter()).zip(wt).map(|((&c, &ri), &w)| w * c * ri).sum();
            (dot / sw).abs()
        })
        .fold(0.0f64, f64::max);

    let intercept_only = |coef_p: usize| -> FitResult {
        let mut coefficients = Array1::<f64>::zeros(coef_p);
        coefficients[intercept] = y_bar_w;
        FitResult {
            coefficients,
            intercept_index: intercept,
            tuning_index: 0,
        }
    };

    if active.is_empty() || !(lambda_max > 0.0) {
        let fit = intercept_only(p);
        let path = keep_path.then(|| LassoPath {
            lambdas: vec![0.0],
            coefficients: vec![fit.coefficients.clone()],
            valid_sse: vec![weights
                .valid
                .iter()
                .zip(y)
                .map(|(&wv, &yi)| wv * (yi - y_bar_w) * (yi - y_bar_w))
                .sum()],
        });
        return Ok((fit, path));
    }

    let y_sd = {
        let m = y.iter().sum::<f64>() / n as f64;
        let v = y.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        v.sqrt()
    };
    let tol = 1e-7 * y_sd;

    let mut beta = vec![0.0f64; active.len()];
    let mut best: Option<(f64, usize, Vec<f64>)> = None; // (sse_v, lambda idx, beta snapshot)
    let mut path_out = keep_path.then(|| LassoPath {
        lambdas: Vec::with_capacity(LASSO_PATH_LEN),
        coefficients: Vec::with_capacity(LASSO_PATH_LEN),
        valid_sse: Vec::with_capacity(LASSO_PATH_LEN),
    });

    for t in 0..LASSO_PATH_LEN {
        let lambda = lambda_max * LASSO_LAMBDA_RATIO.powf(t as f64 / (LASSO_PATH_LEN - 1) as f64);
        let mut sweeps = 0usize;
        #[cfg(debug_assertions)]
        let mut prev_obj = f64::INFINITY;
        loop {
            let mut max_delta = 0.0f64;
            for (a, col) in xs.iter().enumerate() {
                let g: f64 = col
                    .iter()
                    .zip(r.iter())
                    .zip(wt)
                    .map(|((&c, &ri), &w)| w * c * ri)
                    .sum::<f64>()
                    / sw;
                let rho = g + beta[a];
                let bnew = soft_threshold(rho, lambda);
                let delta = bnew - beta[a];
                if delta != 0.0 {
                    for (ri, &c) in r.iter_mut().zip(col.iter()) {
                        *ri -= delta * c;
                    }
                    beta[a] = bnew;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            sweeps += 1;
            #[cfg(debug_assertions)]
            {
                let rss: f64 = r.iter().zip(wt).map(|(&ri, &w)| w * ri * ri).sum();
                let l1: f64 = beta.iter().map(|b| b.abs()).sum();
                let obj = rss / (2.0 * sw) + lambda * l1;
                debug_assert!(
                    obj <= prev_obj + 1e-9 * (1.0 + prev_obj.abs()),
                    "lasso objective increased within a sweep: {prev_obj} -> {obj}"
                );
                prev_obj = obj;
            }
            if max_delta < tol {
                break;
            }
            if sweeps >= LASSO_MAX_SWEEPS {
                return Err(SvemError::NonConvergence(format!(
                    "lasso coordinate descent exceeded {LASSO_MAX_SWEEPS} sweeps at lambda index {t}"
                )));
            }
        }

        let sse_v: f64 = r
            .iter()
            .zip(weights.valid.iter())
            .map(|(&ri, &wv)| wv * ri * ri)
            .sum();
        if best.as_ref().map_or(true, |(s, _, _)| sse_v < *s) {
            best = Some((sse_v, t, beta.clone()));
        }
        if let Some(path) = path_out.as_mut() {
            path.lambdas.push(lambda);
            path.coefficients
                .push(original_scale(p, intercept, &active, &beta, &mu, &sd, y_bar_w));
            path.valid_sse.push(sse_v);
        }
    }

    let (_, t_best, beta_best) = best.expect("path is nonempty");
    let coefficients = original_scale(p, intercept, &active, &beta_best, &mu, &sd, y_bar_w);
    Ok((
        FitResult {
            coefficients,
            intercept_index: intercept,
            tuning_index: t_best,
        },
        path_out,
    ))
}

fn original_scale(
    p: usize,
    intercept: usize,
    active: &[usize],
    beta_std: &[f64],
    mu: &[f64],
    sd: &[f64],
    y_bar_w: f64,
) -> Array1<f64> {
    let mut coefficients = Array1::<f64>::zeros(p);
    let mut b0 = y_bar_w;
    for (a, &j) in active.iter().enumerate() {
        let bj = beta_std[a] / sd[j];
        coefficients[j] = bj;
        b0 -= bj * mu[j];
    }
    coefficients[intercept] = b0;
    coefficients
}

/// Dispatch used by the ensemble once the intercept column is located.
pub(crate) fn fit_learner(
    x: ArrayView2<f64>,
    y: &[f64],
    weights: &WeightPair,
    learner: Learner,
    intercept: usize,
) -> Result<FitResult> {
    match learner {
        Learner::ForwardSelection => fit_forward(x, y, weights, intercept),
        Learner::Lasso => fit_lasso(x, y, weights, intercept, false).map(|(f, _)| f),
    }
}
