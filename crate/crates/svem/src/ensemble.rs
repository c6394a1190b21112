//! SVEM ensembles: nBoot reweighted base-learner fits, their prediction
//! matrix P, and the ensemble summary f_hat = rowMean(P),
//! s_hat = rowStdDev(P).

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Result, SvemError};
use crate::factor::{expand_terms, FactorSpec, FactorTable, Term};
use crate::learners::{find_intercept_column, fit_learner, FitResult, Learner};
use crate::weights::draw_weight_pair;

/// A fitted SVEM ensemble. Immutable after construction; safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub specs: Vec<FactorSpec>,
    pub terms: Vec<Term>,
    /// Candidate column labels shared by every member.
    pub columns: Vec<String>,
    pub learner: Learner,
    pub members: Vec<FitResult>,
    pub seed: u64,
}

/// Member predictions at a set of points, with the ensemble mean and the
/// ensemble standard deviation (divisor nBoot - 1) per point.
#[derive(Debug, Clone)]
pub struct PredictionSummary {
    /// nrow(T) x nBoot.
    pub p: Array2<f64>,
    pub f_hat: Vec<f64>,
    pub s_hat: Vec<f64>,
}

fn validate_response(y: &[f64], n_rows: usize) -> Result<()> {
    if y.len() != n_rows {
        return Err(SvemError::Degenerate(format!(
            "response length {} does not match {} factor rows",
            y.len(),
            n_rows
        )));
    }
    if y.is_empty() {
        return Err(SvemError::EmptyDataset("no observations".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SvemError::Degenerate(
            "response contains missing or non-finite values; delete those rows upstream".into(),
        ));
    }
    Ok(())
}

/// Fits the nBoot-member ensemble. Member b trains and tunes under
/// `draw_weight_pair(seed, b)`; the expansion of the candidate matrix is
/// computed once and shared by every member. Deterministic in `seed`
/// regardless of thread count.
pub fn svem_fit(
    x_rows: &FactorTable,
    y: &[f64],
    specs: &[FactorSpec],
    terms: &[Term],
    learner: Learner,
    n_boot: usize,
    seed: u64,
) -> Result<EnsembleModel> {
    validate_response(y, x_rows.n_rows())?;
    if n_boot == 0 {
        return Err(SvemError::Degenerate("n_boot must be >= 1".into()));
    }
    let mm = expand_terms(specs, terms, x_rows)?;
    let members = fit_members(mm.values.view(), y, learner, n_boot, seed)?;
    Ok(EnsembleModel {
        specs: specs.to_vec(),
        terms: terms.to_vec(),
        columns: mm.columns,
        learner,
        members,
        seed,
    })
}

/// Core member loop over a pre-expanded candidate matrix.
pub(crate) fn fit_members(
    x: ArrayView2<f64>,
    y: &[f64],
    learner: Learner,
    n_boot: usize,
    seed: u64,
) -> Result<Vec<FitResult>> {
    let intercept = find_intercept_column(x).ok_or_else(|| {
        SvemError::Degenerate("candidate matrix needs an intercept column".into())
    })?;
    let n = x.nrows();
    (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let wp = draw_weight_pair(n, seed, b as u64);
            fit_learner(x, y, &wp, learner, intercept).map_err(|e| e.for_member(b))
        })
        .collect()
}

/// Evaluates the ensemble at the rows of `t` (validating every factor value
/// against its declared range/levels) and summarizes the member predictions.
pub fn svem_predict(model: &EnsembleModel, t: &FactorTable) -> Result<PredictionSummary> {
    let mt = expand_terms(&model.specs, &model.terms, t)?;
    Ok(predict_expanded(&model.members, mt.values.view()))
}

/// P, f_hat, s_hat over a pre-expanded point matrix.
pub(crate) fn predict_expanded(members: &[FitResult], xt: ArrayView2<f64>) -> PredictionSummary {
    let n_points = xt.nrows();
    let n_boot = members.len();
    let mut p = Array2::<f64>::zeros((n_points, n_boot));
    for (b, member) in members.iter().enumerate() {
        // members are usually sparse; accumulate column by column
        for (j, coef) in member.nonzero() {
            let col = xt.column(j);
            for i in 0..n_points {
                p[[i, b]] += coef * col[i];
            }
        }
    }
    summarize(p)
}

fn summarize(p: Array2<f64>) -> PredictionSummary {
    let n_points = p.nrows();
    let n_boot = p.ncols();
    let mut f_hat = Vec::with_capacity(n_points);
    let mut s_hat = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let row = p.row(i);
        let mean = row.sum() / n_boot as f64;
        f_hat.push(mean);
        if n_boot < 2 {
            s_hat.push(0.0);
        } else {
            let ss: f64 = row.iter().map(|&v| (v - mean) * (v - mean)).sum();
            s_hat.push((ss / (n_boot as f64 - 1.0)).sqrt());
        }
    }
    PredictionSummary { p, f_hat, s_hat }
}

impl EnsembleModel {
    pub fn n_boot(&self) -> usize {
        self.members.len()
    }

    /// Audit dump: a CSV with one row per member, columns
    /// `member,tuning_index,<candidate columns...>`.
    pub fn write_dump<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["member".to_string(), "tuning_index".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (b, m) in self.members.iter().enumerate() {
            let mut rec = vec![b.to_string(), m.tuning_index.to_string()];
            rec.extend(m.coefficients.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
