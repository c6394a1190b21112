//! Randomized-permutation whole-model test for SVEM fits.
//!
//! Tests H0: the response surface is constant over the study factors. The
//! test standardizes ensemble predictions at nPoint locations spread through
//! the factor space (Eq. (f_hat - y_bar)/s_hat per point), builds a reference
//! distribution by refitting the same SVEM pipeline to nPerm random
//! permutations of the response, reduces the standardized reference matrix by
//! SVD, and compares jackknife Mahalanobis distances of the unpermuted fits
//! against a parametric fit (SHASH, falling back to Weibull then gamma) of
//! the reference distances. The p-value is one minus the median fitted-CDF
//! value of the observed distances.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use crate::dist::{
    gamma_cdf, gamma_fit_mle, shash_cdf, shash_fit_mle, weibull_cdf, weibull_fit_mle,
    GammaParams, ShashParams, WeibullParams,
};
use crate::ensemble::{fit_members, predict_expanded, PredictionSummary};
use crate::error::{Result, SvemError};
use crate::factor::{expand_terms, FactorSpec, FactorTable, Term};
use crate::learners::Learner;
use crate::linalg::jacobi_eigen_sym;
use crate::rng::{derive_seed, seeded_rng, tags};
use crate::sampler::sample_points;

/// Reference distribution family fitted to the permutation distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceFamily {
    #[default]
    Shash,
    Weibull,
    Gamma,
}

impl std::fmt::Display for ReferenceFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReferenceFamily::Shash => write!(f, "shash"),
            ReferenceFamily::Weibull => write!(f, "weibull"),
            ReferenceFamily::Gamma => write!(f, "gamma"),
        }
    }
}

/// Test settings; the defaults match the recommended values
/// (nPerm 125, nPoint 2000, nBoot 200, percent 85, nSVEM 5).
#[derive(Debug, Clone, PartialEq)]
pub struct TestSettings {
    pub n_perm: usize,
    pub n_point: usize,
    pub n_boot: usize,
    /// Eigenvalue-share cutoff on a 0-100 scale.
    pub percent: f64,
    pub n_svem: usize,
    pub reference_family: ReferenceFamily,
    pub seed: u64,
}

impl Default for TestSettings {
    fn default() -> Self {
        TestSettings {
            n_perm: 125,
            n_point: 2000,
            n_boot: 200,
            percent: 85.0,
            n_svem: 5,
            reference_family: ReferenceFamily::Shash,
            seed: 0,
        }
    }
}

impl TestSettings {
    /// Reduced settings for desk-scale simulation studies
    /// (nPerm 50, nPoint 500, nBoot 100).
    pub fn desk_scale() -> Self {
        TestSettings {
            n_perm: 50,
            n_point: 500,
            n_boot: 100,
            ..TestSettings::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_perm == 0 || self.n_point == 0 || self.n_boot == 0 || self.n_svem == 0 {
            return Err(SvemError::Degenerate(
                "n_perm, n_point, n_boot and n_svem must all be >= 1".into(),
            ));
        }
        if !(self.percent > 0.0 && self.percent <= 100.0) {
            return Err(SvemError::Degenerate(format!(
                "percent must lie in (0, 100], got {}",
                self.percent
            )));
        }
        Ok(())
    }
}

/// The reference fit actually used for the p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceFit {
    Shash(ShashParams),
    Weibull(WeibullParams),
    Gamma(GammaParams),
}

impl ReferenceFit {
    pub fn family(&self) -> ReferenceFamily {
        match self {
            ReferenceFit::Shash(_) => ReferenceFamily::Shash,
            ReferenceFit::Weibull(_) => ReferenceFamily::Weibull,
            ReferenceFit::Gamma(_) => ReferenceFamily::Gamma,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ReferenceFit::Shash(p) => shash_cdf(x, p),
            ReferenceFit::Weibull(p) => weibull_cdf(x, p),
            ReferenceFit::Gamma(p) => gamma_cdf(x, p),
        }
    }
}

/// Everything the test produces: the permutation and observed distances (the
/// plot data), the retained eigen-structure, the fitted reference
/// distribution, and the p-value.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub d_ref: Vec<f64>,
    pub d_obs: Vec<f64>,
    /// Retained eigen-count.
    pub k: usize,
    /// Scaled eigenvalues (they sum to nPoint).
    pub eigenvalues: Vec<f64>,
    pub reference: ReferenceFit,
    pub requested_family: ReferenceFamily,
    pub p_value: f64,
}

/// Standardized prediction row (f_hat_i - y_bar)/s_hat_i with the zero-spread
/// guard: an ensemble with no member spread contributes 0 when its prediction
/// sits on the response mean and +/-1e6 when it confidently deviates.
pub fn standardized_prediction_row(summary: &PredictionSummary, y_bar: f64) -> Vec<f64> {
    summary
        .f_hat
        .iter()
        .zip(&summary.s_hat)
        .map(|(&f, &s)| {
            let num = f - y_bar;
            if s < 1e-12 {
                if num.abs() < 1e-10 {
                    0.0
                } else {
                    num.signum() * 1e6
                }
            } else {
                num / s
            }
        })
        .collect()
}

struct TestContext<'a> {
    x: Array2<f64>,
    xt: Array2<f64>,
    y: &'a [f64],
    y_bar: f64,
    learner: Learner,
    n_boot: usize,
}

impl<'a> TestContext<'a> {
    fn prepare(
        x_rows: &FactorTable,
        y: &'a [f64],
        specs: &[FactorSpec],
        terms: &[Term],
        learner: Learner,
        settings: &TestSettings,
        t: &FactorTable,
    ) -> Result<Self> {
        settings.validate()?;
        if y.len() != x_rows.n_rows() {
            return Err(SvemError::Degenerate(format!(
                "response length {} does not match {} design rows",
                y.len(),
                x_rows.n_rows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SvemError::Degenerate(
                "response contains missing or non-finite values; delete those rows first".into(),
            ));
        }
        let x = expand_terms(specs, terms, x_rows)?.values;
        let xt = expand_terms(specs, terms, t)?.values;
        let y_bar = y.iter().sum::<f64>() / y.len() as f64;
        Ok(TestContext {
            x,
            xt,
            y,
            y_bar,
            learner,
            n_boot: settings.n_boot,
        })
    }

    /// One SVEM refit to `y_job` and its standardized prediction row at T.
    fn standardized_row(&self, y_job: &[f64], fit_seed: u64) -> Result<Vec<f64>> {
        let members = fit_members(self.x.view(), y_job, self.learner, self.n_boot, fit_seed)?;
        let summary = predict_expanded(&members, self.xt.view());
        Ok(standardized_prediction_row(&summary, self.y_bar))
    }
}

fn permuted_response(y: &[f64], shuffle_seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(shuffle_seed);
    let mut out = y.to_vec();
    for i in (1..out.len()).rev() {
        let j = rng.random_range(0..=i);
        out.swap(i, j);
    }
    out
}

fn rows_to_matrix(rows: Vec<Vec<f64>>, n_cols: usize) -> Array2<f64> {
    let n_rows = rows.len();
    let mut m = Array2::<f64>::zeros((n_rows, n_cols));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

/// M_Y: nSVEM independent refits to the unpermuted response, one
/// standardized prediction row each.
pub fn build_observed_matrix(
    x_rows: &FactorTable,
    y: &[f64],
    specs: &[FactorSpec],
    terms: &[Term],
    learner: Learner,
    settings: &TestSettings,
    t: &FactorTable,
) -> Result<Array2<f64>> {
    let ctx = TestContext::prepare(x_rows, y, specs, terms, learner, settings, t)?;
    observed_matrix(&ctx, settings)
}

fn observed_matrix(ctx: &TestContext, settings: &TestSettings) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = (0..settings.n_svem)
        .into_par_iter()
        .map(|i| {
            let fit_seed = derive_seed(settings.seed, tags::WMT_OBSERVED, i as u64);
            ctx.standardized_row(ctx.y, fit_seed)
                .map_err(|e| e.for_refit(i))
        })
        .collect::<Result<_>>()?;
    Ok(rows_to_matrix(rows, settings.n_point))
}

/// M_pi(Y): nPerm refits to uniform random permutations of the response
/// (drawn without replacement within each permutation); y_bar is invariant
/// under permutation and reused from the original response.
pub fn build_reference_matrix(
    x_rows: &FactorTable,
    y: &[f64],
    specs: &[FactorSpec],
    terms: &[Term],
    learner: Learner,
    settings: &TestSettings,
    t: &FactorTable,
) -> Result<Array2<f64>> {
    let ctx = TestContext::prepare(x_rows, y, specs, terms, learner, settings, t)?;
    reference_matrix(&ctx, settings)
}

fn reference_matrix(ctx: &TestContext, settings: &TestSettings) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = (0..settings.n_perm)
        .into_par_iter()
        .map(|j| {
            let perm = permuted_response(ctx.y, derive_seed(settings.seed, tags::WMT_SHUFFLE, j as u64));
            let fit_seed = derive_seed(settings.seed, tags::WMT_PERM_FIT, j as u64);
            ctx.standardized_row(&perm, fit_seed)
                .map_err(|e| e.for_refit(j))
        })
        .collect::<Result<_>>()?;
    Ok(rows_to_matrix(rows, settings.n_point))
}

/// Output of the reduced-rank distance stage.
#[derive(Debug, Clone)]
pub struct MahalanobisDistances {
    pub d_ref: Vec<f64>,
    pub d_obs: Vec<f64>,
    pub k: usize,
    pub eigenvalues: Vec<f64>,
}

/// Smallest k whose cumulative eigenvalue share strictly exceeds
/// percent/100; all of them if no prefix does (percent = 100).
pub(crate) fn rank_for_percent(lambdas: &[f64], n_point: f64, percent: f64) -> usize {
    let threshold = percent / 100.0;
    let mut cum = 0.0;
    for (i, l) in lambdas.iter().enumerate() {
        cum += l / n_point;
        if cum > threshold {
            return i + 1;
        }
    }
    lambdas.len()
}

/// Reduced-rank Mahalanobis distances. The reference matrix is standardized
/// by its own column means/sds; the observed matrix is standardized by the
/// reference statistics (the jackknife/holdout convention). Columns with zero
/// reference spread are dropped from both matrices. Eigenvalues are scaled to
/// sum to the original nPoint; k is chosen by the strict percent cutoff.
pub fn reduced_rank_mahalanobis(
    m_ref: ArrayView2<f64>,
    m_obs: ArrayView2<f64>,
    percent: f64,
) -> Result<MahalanobisDistances> {
    let n_perm = m_ref.nrows();
    let n_point = m_ref.ncols();
    if n_perm < 2 {
        return Err(SvemError::Degenerate(
            "reduced-rank distances need at least 2 reference rows".into(),
        ));
    }
    if m_obs.ncols() != n_point {
        return Err(SvemError::Degenerate(format!(
            "observed matrix has {} columns, reference has {n_point}",
            m_obs.ncols()
        )));
    }
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(SvemError::Degenerate(format!(
            "percent must lie in (0, 100], got {percent}"
        )));
    }

    // column statistics of the reference matrix, sample sd (divisor nPerm-1)
    let denom = (n_perm - 1) as f64;
    let mut kept: Vec<(usize, f64, f64)> = Vec::with_capacity(n_point);
    for j in 0..n_point {
        let col = m_ref.column(j);
        let mean = col.sum() / n_perm as f64;
        let ss: f64 = col.iter().map(|&v| (v - mean) * (v - mean)).sum();
        let sd = (ss / denom).sqrt();
        if sd > 1e-12 {
            kept.push((j, mean, sd));
        }
    }
    if kept.is_empty() {
        return Err(SvemError::Degenerate(
            "degenerate reference matrix: every column has zero spread".into(),
        ));
    }

    let n_obs = m_obs.nrows();
    let mut z_ref = Array2::<f64>::zeros((n_perm, kept.len()));
    let mut z_obs = Array2::<f64>::zeros((n_obs, kept.len()));
    for (c, &(j, mean, sd)) in kept.iter().enumerate() {
        for i in 0..n_perm {
            z_ref[[i, c]] = (m_ref[[i, j]] - mean) / sd;
        }
        for i in 0..n_obs {
            z_obs[[i, c]] = (m_obs[[i, j]] - mean) / sd;
        }
    }

    // SVD of z_ref through the eigendecomposition of its Gram matrix:
    // z_ref = U Sigma V' with Gram = U Sigma^2 U'.
    let mut gram = Array2::<f64>::zeros((n_perm, n_perm));
    for a in 0..n_perm {
        for b in a..n_perm {
            let mut s = 0.0;
            for c in 0..kept.len() {
                s += z_ref[[a, c]] * z_ref[[b, c]];
            }
            gram[[a, b]] = s;
            gram[[b, a]] = s;
        }
    }
    let eig = jacobi_eigen_sym(&gram);
    let sigma2_max = eig.values[0];
    if !(sigma2_max > 0.0) {
        return Err(SvemError::Degenerate(
            "degenerate reference matrix: zero spectral mass".into(),
        ));
    }
    let rank = eig
        .values
        .iter()
        .take_while(|&&v| v > 1e-12 * sigma2_max)
        .count();
    let sigma2: Vec<f64> = eig.values[..rank].to_vec();
    let total: f64 = sigma2.iter().sum();

    // scaled so the eigenvalues sum to the full nPoint even when degenerate
    // columns were dropped
    let lambdas: Vec<f64> = sigma2.iter().map(|&s| s / total * n_point as f64).collect();
    let k = rank_for_percent(&lambdas, n_point as f64, percent);

    // d_ref from the U side: row i of z_ref V_k is (U_i1 s_1, ..., U_ik s_k)
    let mut d_ref = Vec::with_capacity(n_perm);
    for i in 0..n_perm {
        let mut d2 = 0.0;
        for j in 0..k {
            let z = eig.vectors[[i, j]] * sigma2[j].sqrt();
            d2 += z * z / lambdas[j];
        }
        d_ref.push(d2.max(0.0).sqrt());
    }

    // V_k = z_ref' U_k Sigma_k^{-1}, needed to project the held-out rows
    let mut v_k = Array2::<f64>::zeros((kept.len(), k));
    for j in 0..k {
        let inv_sigma = 1.0 / sigma2[j].sqrt();
        for c in 0..kept.len() {
            let mut s = 0.0;
            for i in 0..n_perm {
                s += z_ref[[i, c]] * eig.vectors[[i, j]];
            }
            v_k[[c, j]] = s * inv_sigma;
        }
    }
    let mut d_obs = Vec::with_capacity(n_obs);
    for i in 0..n_obs {
        let mut d2 = 0.0;
        for j in 0..k {
            let mut z = 0.0;
            for c in 0..kept.len() {
                z += z_obs[[i, c]] * v_k[[c, j]];
            }
            d2 += z * z / lambdas[j];
        }
        d_obs.push(d2.max(0.0).sqrt());
    }

    Ok(MahalanobisDistances {
        d_ref,
        d_obs,
        k,
        eigenvalues: lambdas,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fits the requested family to the reference distances (falling back
/// shash -> weibull -> gamma on non-convergence) and returns
/// p = 1 - median(CDF(d_obs)) together with the fit actually used.
pub fn p_value_from_distances(
    d_ref: &[f64],
    d_obs: &[f64],
    family: ReferenceFamily,
) -> Result<(f64, ReferenceFit)> {
    if d_ref.len() < 10 {
        return Err(SvemError::Degenerate(format!(
            "p-value fit needs at least 10 reference distances, got {}",
            d_ref.len()
        )));
    }
    if d_obs.is_empty() {
        return Err(SvemError::Degenerate("no observed distances".into()));
    }
    if d_ref.iter().chain(d_obs).any(|v| !v.is_finite()) {
        return Err(SvemError::Degenerate("distances must be finite".into()));
    }
    let chain: &[ReferenceFamily] = match family {
        ReferenceFamily::Shash => &[
            ReferenceFamily::Shash,
            ReferenceFamily::Weibull,
            ReferenceFamily::Gamma,
        ],
        ReferenceFamily::Weibull => &[ReferenceFamily::Weibull, ReferenceFamily::Gamma],
        ReferenceFamily::Gamma => &[ReferenceFamily::Gamma],
    };
    let mut last_err = None;
    for fam in chain {
        let fit = match fam {
            ReferenceFamily::Shash => shash_fit_mle(d_ref).map(ReferenceFit::Shash),
            ReferenceFamily::Weibull => weibull_fit_mle(d_ref).map(ReferenceFit::Weibull),
            ReferenceFamily::Gamma => gamma_fit_mle(d_ref).map(ReferenceFit::Gamma),
        };
        match fit {
            Ok(reference) => {
                let cdfs: Vec<f64> = d_obs.iter().map(|&d| reference.cdf(d)).collect();
                if cdfs.iter().any(|v| !v.is_finite()) {
                    last_err = Some(SvemError::NonConvergence(format!(
                        "{} fit produced non-finite CDF values",
                        reference.family()
                    )));
                    continue;
                }
                let p = (1.0 - median(&cdfs)).clamp(0.0, 1.0);
                return Ok((p, reference));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("family chain is never empty"))
}

/// Runs the whole test: samples T once, builds the observed and reference
/// matrices from independent seeded refits, reduces, fits the reference
/// family, and reports the p-value with the distance plot data.
pub fn whole_model_test(
    x_rows: &FactorTable,
    y: &[f64],
    specs: &[FactorSpec],
    terms: &[Term],
    learner: Learner,
    settings: &TestSettings,
) -> Result<TestResult> {
    settings.validate()?;
    let t = sample_points(
        specs,
        settings.n_point,
        derive_seed(settings.seed, tags::WMT_POINTS, 0),
    )?;
    let ctx = TestContext::prepare(x_rows, y, specs, terms, learner, settings, &t)?;
    let m_obs = observed_matrix(&ctx, settings)?;
    let m_ref = reference_matrix(&ctx, settings)?;
    let distances = reduced_rank_mahalanobis(m_ref.view(), m_obs.view(), settings.percent)?;
    let (p_value, reference) = p_value_from_distances(
        &distances.d_ref,
        &distances.d_obs,
        settings.reference_family,
    )?;
    Ok(TestResult {
        d_ref: distances.d_ref,
        d_obs: distances.d_obs,
        k: distances.k,
        eigenvalues: distances.eigenvalues,
        reference,
        requested_family: settings.reference_family,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::{FactorValue, Term};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn summary_from(f_hat: Vec<f64>, s_hat: Vec<f64>) -> PredictionSummary {
        let p = Array2::<f64>::zeros((f_hat.len(), 1));
        PredictionSummary { p, f_hat, s_hat }
    }

    #[test]
    fn standardized_row_formula_and_guard() {
        let s = summary_from(vec![2.0, 4.0, 2.0, 5.0], vec![1.0, 1.0, 0.0, 0.0]);
        let row = standardized_prediction_row(&s, 2.0);
        assert_eq!(row[0], 0.0); // zero numerator regardless of spread
        assert_eq!(row[1], 2.0); // direct substitution
        assert_eq!(row[2], 0.0); // guard: no spread, no deviation
        assert_eq!(row[3], 1e6); // guard: confident deviation
        let neg = standardized_prediction_row(&summary_from(vec![1.0], vec![0.0]), 2.0);
        assert_eq!(neg[0], -1e6);
    }

    fn tiny_problem() -> (Vec<FactorSpec>, Vec<Term>, FactorTable, Vec<f64>) {
        let specs = vec![FactorSpec::continuous("x", -1.0, 1.0)];
        let terms = vec![Term::Intercept, Term::main("x")];
        let xs = [-1.0, -0.8, -0.5, -0.2, 0.0, 0.2, 0.5, 0.7, 0.9, 1.0];
        let rows = FactorTable::new(
            vec!["x".into()],
            xs.iter().map(|&v| vec![FactorValue::Numeric(v)]).collect(),
        );
        let mut rng = crate::rng::seeded_rng(1234);
        let y: Vec<f64> = xs
            .iter()
            .map(|&v| 1.0 + 2.0 * v + 0.3 * (rng.random::<f64>() - 0.5))
            .collect();
        (specs, terms, rows, y)
    }

    fn tiny_settings() -> TestSettings {
        TestSettings {
            n_perm: 15,
            n_point: 40,
            n_boot: 8,
            percent: 85.0,
            n_svem: 3,
            reference_family: ReferenceFamily::Shash,
            seed: 5,
        }
    }

    #[test]
    fn observed_matrix_shape_and_determinism() {
        let (specs, terms, rows, y) = tiny_problem();
        let mut settings = tiny_settings();
        settings.n_svem = 1;
        let t = sample_points(&specs, settings.n_point, 1).unwrap();
        let a = build_observed_matrix(
            &rows,
            &y,
            &specs,
            &terms,
            Learner::ForwardSelection,
            &settings,
            &t,
        )
        .unwrap();
        assert_eq!(a.nrows(), 1);
        assert_eq!(a.ncols(), settings.n_point);
        let b = build_observed_matrix(
            &rows,
            &y,
            &specs,
            &terms,
            Learner::ForwardSelection,
            &settings,
            &t,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observed_rows_differ_across_refits() {
        let (specs, terms, rows, _) = tiny_problem();
        // noisy response so bootstrap variability is visible
        let mut rng = crate::rng::seeded_rng(9);
        let y: Vec<f64> = (0..rows.n_rows()).map(|_| rng.random::<f64>()).collect();
        let settings = tiny_settings();
        let t = sample_points(&specs, settings.n_point, 2).unwrap();
        let m = build_observed_matrix(
            &rows,
            &y,
            &specs,
            &terms,
            Learner::ForwardSelection,
            &settings,
            &t,
        )
        .unwrap();
        let r0: Vec<f64> = m.row(0).to_vec();
        let r1: Vec<f64> = m.row(1).to_vec();
        assert_ne!(r0, r1, "independent refits must differ for noisy y");
    }

    #[test]
    fn permutation_preserves_multiset_and_identity_for_n1() {
        let y = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
        let p = permuted_response(&y, 123);
        let mut a = y.to_vec();
        let mut b = p.clone();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a, b);
        assert_eq!(permuted_response(&[7.0], 5), vec![7.0]);
    }

    #[test]
    fn constant_response_zeroes_the_reference_matrix() {
        let (specs, terms, rows, _) = tiny_problem();
        let y = vec![4.0; rows.n_rows()];
        let settings = tiny_settings();
        let t = sample_points(&specs, settings.n_point, 3).unwrap();
        let m = build_reference_matrix(
            &rows,
            &y,
            &specs,
            &terms,
            Learner::ForwardSelection,
            &settings,
            &t,
        )
        .unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
        // and the distance stage reports the degeneracy
        let o = build_observed_matrix(
            &rows,
            &y,
            &specs,
            &terms,
            Learner::ForwardSelection,
            &settings,
            &t,
        )
        .unwrap();
        assert!(matches!(
            reduced_rank_mahalanobis(m.view(), o.view(), settings.percent),
            Err(SvemError::Degenerate(_))
        ));
    }

    #[test]
    fn rank_rule_on_crafted_shares() {
        // shares (0.6, 0.3, 0.1) at percent 85: cum 0.6 <= 0.85 < 0.9 -> k = 2
        let n_point = 50.0;
        let lambdas = [30.0, 15.0, 5.0];
        assert_eq!(rank_for_percent(&lambdas, n_point, 85.0), 2);
        assert_eq!(rank_for_percent(&lambdas, n_point, 50.0), 1);
        // percent = 100 never strictly exceeded -> keep all
        assert_eq!(rank_for_percent(&lambdas, n_point, 100.0), 3);
    }

    #[test]
    fn orthogonal_equal_norm_rows_share_distance() {
        // after column standardization the two rows are symmetric
        let m_ref = array![[1.0, 0.0], [0.0, 1.0]];
        let m_obs = array![[1.0, 0.0]];
        let d = reduced_rank_mahalanobis(m_ref.view(), m_obs.view(), 100.0).unwrap();
        assert_abs_diff_eq!(d.d_ref[0], d.d_ref[1], epsilon = 1e-10);
        // observed row equals reference row 0 -> identical distance
        assert_abs_diff_eq!(d.d_obs[0], d.d_ref[0], epsilon = 1e-8);
    }

    #[test]
    fn eigenvalues_sum_to_n_point() {
        let mut rng = crate::rng::seeded_rng(17);
        let n_perm = 12;
        let n_point = 30;
        let mut m_ref = Array2::<f64>::zeros((n_perm, n_point));
        for v in m_ref.iter_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        let m_obs = Array2::<f64>::zeros((2, n_point));
        let d = reduced_rank_mahalanobis(m_ref.view(), m_obs.view(), 85.0).unwrap();
        let total: f64 = d.eigenvalues.iter().sum();
        assert!(
            (total - n_point as f64).abs() < 1e-6 * n_point as f64,
            "eigenvalue sum {total}"
        );
        assert!(d.k >= 1 && d.k <= d.eigenvalues.len());
        assert!(d.d_ref.iter().all(|&v| v >= 0.0));
    }

    /// Brute-force oracle: explicit covariance pseudo-inverse via
    /// Gauss-Jordan on the full-rank standardized covariance.
    fn brute_force_distances(
        m_ref: &Array2<f64>,
        m_obs: &Array2<f64>,
    ) -> (Vec<f64>, Vec<f64>) {
        let n = m_ref.nrows();
        let p = m_ref.ncols();
        let mut means = vec![0.0; p];
        let mut sds = vec![0.0; p];
        for j in 0..p {
            let col = m_ref.column(j);
            let mean = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|&v| (v - mean) * (v - mean)).sum();
            means[j] = mean;
            sds[j] = (ss / (n as f64 - 1.0)).sqrt();
        }
        let std = |m: &Array2<f64>| {
            let mut z = m.clone();
            for j in 0..p {
                for i in 0..m.nrows() {
                    z[[i, j]] = (m[[i, j]] - means[j]) / sds[j];
                }
            }
            z
        };
        let z_ref = std(m_ref);
        let z_obs = std(m_obs);
        // covariance of the standardized reference, divisor n-1
        let mut cov = vec![vec![0.0f64; p]; p];
        for a in 0..p {
            for b in 0..p {
                let mut s = 0.0;
                for i in 0..n {
                    s += z_ref[[i, a]] * z_ref[[i, b]];
                }
                cov[a][b] = s / (n as f64 - 1.0);
            }
        }
        // Gauss-Jordan inverse
        let mut aug = vec![vec![0.0f64; 2 * p]; p];
        for i in 0..p {
            for j in 0..p {
                aug[i][j] = cov[i][j];
            }
            aug[i][p + i] = 1.0;
        }
        for col in 0..p {
            let piv = (col..p)
                .max_by(|&a, &b| aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap())
                .unwrap();
            aug.swap(col, piv);
            let d = aug[col][col];
            assert!(d.abs() > 1e-10, "oracle needs full rank");
            for v in aug[col].iter_mut() {
                *v /= d;
            }
            for r in 0..p {
                if r != col {
                    let f = aug[r][col];
                    for c in 0..2 * p {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
        let dist = |z: &Array2<f64>| {
            (0..z.nrows())
                .map(|i| {
                    let mut d2 = 0.0;
                    for a in 0..p {
                        for b in 0..p {
                            d2 += z[[i, a]] * aug[a][p + b] * z[[i, b]];
                        }
                    }
                    d2.max(0.0).sqrt()
                })
                .collect::<Vec<f64>>()
        };
        (dist(&z_ref), dist(&z_obs))
    }

    #[test]
    fn full_rank_distances_match_brute_force_pseudo_inverse() {
        let mut rng = crate::rng::seeded_rng(23);
        for _ in 0..10 {
            let n_perm = 10;
            let n_point = 6;
            let mut m_ref = Array2::<f64>::zeros((n_perm, n_point));
            let mut m_obs = Array2::<f64>::zeros((3, n_point));
            for v in m_ref.iter_mut() {
                *v = rng.random::<f64>() * 4.0 - 2.0;
            }
            for v in m_obs.iter_mut() {
                *v = rng.random::<f64>() * 4.0 - 2.0;
            }
            let fast = reduced_rank_mahalanobis(m_ref.view(), m_obs.view(), 100.0).unwrap();
            let (oref, oobs) = brute_force_distances(&m_ref, &m_obs);
            for (a, b) in fast.d_ref.iter().zip(&oref) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-8), "{a} vs {b}");
            }
            for (a, b) in fast.d_obs.iter().zip(&oobs) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-8), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn p_value_tail_behaviour() {
        // gamma-ish reference sample
        let mut rng = crate::rng::seeded_rng(31);
        let d_ref: Vec<f64> = (0..400)
            .map(|_| {
                let a: f64 = rng.random::<f64>().max(1e-12);
                let b: f64 = rng.random::<f64>().max(1e-12);
                -(a.ln()) - b.ln() // Gamma(2,1)
            })
            .collect();
        let med = median(&d_ref);
        let (p_mid, _) =
            p_value_from_distances(&d_ref, &[med, med, med], ReferenceFamily::Shash).unwrap();
        assert!((p_mid - 0.5).abs() < 0.05, "p at median = {p_mid}");
        let dmax = d_ref.iter().cloned().fold(f64::MIN, f64::max);
        let (p_hi, _) =
            p_value_from_distances(&d_ref, &[dmax * 3.0], ReferenceFamily::Shash).unwrap();
        assert!(p_hi < 0.01, "far-right p = {p_hi}");
        let dmin = d_ref.iter().cloned().fold(f64::MAX, f64::min);
        let low = (dmin - 1.0).max(0.0);
        let (p_lo, _) =
            p_value_from_distances(&d_ref, &[low], ReferenceFamily::Shash).unwrap();
        assert!(p_lo > 0.95, "far-left p = {p_lo}");
    }

    #[test]
    fn p_value_falls_back_and_reports_family() {
        // two-point mass breaks the SHASH start (IQR fine) but weibull/gamma
        // may still fit; at minimum the chain must either succeed with some
        // family or report the terminal error.
        let d_ref: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { 2.0 }).collect();
        match p_value_from_distances(&d_ref, &[1.5], ReferenceFamily::Shash) {
            Ok((p, fit)) => {
                assert!((0.0..=1.0).contains(&p));
                let _ = fit.family();
            }
            Err(e) => {
                assert!(matches!(e, SvemError::NonConvergence(_) | SvemError::Degenerate(_)));
            }
        }
        // gamma requested + negative support must error
        assert!(p_value_from_distances(&[-1.0; 20], &[0.5], ReferenceFamily::Gamma).is_err());
    }

    #[test]
    fn whole_model_test_is_deterministic_and_in_range() {
        let (specs, terms, rows, y) = tiny_problem();
        let settings = tiny_settings();
        let a = whole_model_test(
            &rows,
            &y,
            &specs,
            &terms,
            Learner::ForwardSelection,
            &settings,
        )
        .unwrap();
        let b = whole_model_test(
            &rows,
            &y,
            &specs,
            &terms,
            Learner::ForwardSelection,
            &settings,
        )
        .unwrap();
        assert_eq!(a.p_value, b.p_value);
        assert_eq!(a.d_ref, b.d_ref);
        assert_eq!(a.d_obs, b.d_obs);
        assert!((0.0..=1.0).contains(&a.p_value));
        assert_eq!(a.d_ref.len(), settings.n_perm);
        assert_eq!(a.d_obs.len(), settings.n_svem);
        let total: f64 = a.eigenvalues.iter().sum();
        assert!((total - settings.n_point as f64).abs() < 1e-6 * settings.n_point as f64);
    }

    #[test]
    fn reference_columns_standardized_by_own_stats() {
        // the invariant behind step 7: after standardization, column means 0
        // and sds 1 for non-degenerate columns
        let mut rng = crate::rng::seeded_rng(3);
        let n_perm = 20;
        let n_point = 10;
        let mut m_ref = Array2::<f64>::zeros((n_perm, n_point));
        for v in m_ref.iter_mut() {
            *v = rng.random::<f64>() * 3.0;
        }
        // reproduce the standardization and check
        for j in 0..n_point {
            let col = m_ref.column(j);
            let mean = col.sum() / n_perm as f64;
            let sd = (col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>()
                / (n_perm as f64 - 1.0))
                .sqrt();
            let z: Vec<f64> = col.iter().map(|&v| (v - mean) / sd).collect();
            let zm = z.iter().sum::<f64>() / n_perm as f64;
            let zs = (z.iter().map(|&v| (v - zm) * (v - zm)).sum::<f64>()
                / (n_perm as f64 - 1.0))
                .sqrt();
            assert_abs_diff_eq!(zm, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(zs, 1.0, epsilon = 1e-10);
        }
    }
}
