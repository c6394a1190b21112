//! Power-analysis harness: central composite designs in three continuous
//! factors, the three simulation scenarios, Monte Carlo power estimation for
//! the permutation heuristic against the classical ANOVA F test, and the
//! sampled-surface visualization data.
//!
//! Scenario 1 simulates `Y = b*x1 + b*x2 + b*x1*x2 + e` against the full
//! response-surface candidate set; Scenario 2 uses the same response but the
//! true reduced candidate set ("no sparsity"); Scenario 3 simulates
//! `Y = b*x3 + e` against the full candidate set. Noise is standard normal
//! throughout and power is counted at alpha = 0.05.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dist::anova_whole_model_f;
use crate::ensemble::{svem_predict, EnsembleModel};
use crate::error::{Result, SvemError};
use crate::factor::{expand_terms, FactorSpec, FactorTable, FactorValue, Term};
use crate::learners::Learner;
use crate::rng::{derive_seed, seeded_rng, tags};
use crate::wmt::{whole_model_test, TestSettings};

/// Axial-point placement for the central composite design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AxialMode {
    /// alpha = 8^(1/4), the rotatable choice for 3 factors.
    #[default]
    Rotatable,
    /// alpha = 1.
    FaceCentered,
}

pub fn ccd_axial_distance(mode: AxialMode) -> f64 {
    match mode {
        AxialMode::Rotatable => 8.0f64.powf(0.25),
        AxialMode::FaceCentered => 1.0,
    }
}

/// CCD generator options; defaults to the rotatable axial distance with six
/// center runs (20 runs total).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CcdOptions {
    pub alpha_mode: AxialMode,
    pub n_center: usize,
}

impl Default for CcdOptions {
    fn default() -> Self {
        CcdOptions {
            alpha_mode: AxialMode::Rotatable,
            n_center: 6,
        }
    }
}

/// Central composite design in coded units for factors x1, x2, x3:
/// 8 factorial corners, 6 axial points at +/-alpha, `n_center` center rows.
pub fn ccd_design(alpha_mode: AxialMode, n_center: usize) -> FactorTable {
    let alpha = ccd_axial_distance(alpha_mode);
    let mut rows: Vec<Vec<FactorValue>> = Vec::with_capacity(14 + n_center);
    for i in 0..8u32 {
        let signs = [
            if i & 4 == 0 { -1.0 } else { 1.0 },
            if i & 2 == 0 { -1.0 } else { 1.0 },
            if i & 1 == 0 { -1.0 } else { 1.0 },
        ];
        rows.push(signs.iter().map(|&s| FactorValue::Numeric(s)).collect());
    }
    for axis in 0..3 {
        for &sign in &[-1.0, 1.0] {
            let mut row = vec![FactorValue::Numeric(0.0); 3];
            row[axis] = FactorValue::Numeric(sign * alpha);
            rows.push(row);
        }
    }
    for _ in 0..n_center {
        rows.push(vec![FactorValue::Numeric(0.0); 3]);
    }
    FactorTable::new(vec!["x1".into(), "x2".into(), "x3".into()], rows)
}

/// Factor declarations covering the design span in coded units.
pub fn scenario_factor_specs(alpha_mode: AxialMode) -> Vec<FactorSpec> {
    let alpha = ccd_axial_distance(alpha_mode);
    (1..=3)
        .map(|i| FactorSpec::continuous(format!("x{i}"), -alpha, alpha))
        .collect()
}

/// The full response-surface candidate set: intercept, three mains, three
/// quadratics, three two-way interactions.
pub fn full_rsm_terms() -> Vec<Term> {
    let mut terms = vec![Term::Intercept];
    for i in 1..=3 {
        terms.push(Term::main(format!("x{i}")));
    }
    for i in 1..=3 {
        terms.push(Term::power(format!("x{i}"), 2));
    }
    for (a, b) in [(1, 2), (1, 3), (2, 3)] {
        terms.push(Term::interaction([format!("x{a}"), format!("x{b}")]));
    }
    terms
}

/// The true data-generating terms for each scenario.
pub fn reduced_terms(scenario: u8) -> Vec<Term> {
    match scenario {
        1 | 2 => vec![
            Term::Intercept,
            Term::main("x1"),
            Term::main("x2"),
            Term::interaction(["x1", "x2"]),
        ],
        3 => vec![Term::Intercept, Term::main("x3")],
        _ => unreachable!("scenario must be 1, 2 or 3"),
    }
}

/// Candidate set handed to the SVEM arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateSet {
    FullRsm,
    TrueReduced,
}

/// One simulation scenario at a fixed effect size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: u8,
    pub beta: f64,
    pub candidate: CandidateSet,
}

impl ScenarioSpec {
    /// Builds the spec with the candidate set the scenario prescribes:
    /// scenario 2 forces the true reduced set, scenarios 1 and 3 the full
    /// response-surface set.
    pub fn new(scenario: u8, beta: f64) -> Result<ScenarioSpec> {
        if !(1..=3).contains(&scenario) {
            return Err(SvemError::Degenerate(format!(
                "scenario must be 1, 2 or 3, got {scenario}"
            )));
        }
        if !(beta >= 0.0) {
            return Err(SvemError::Degenerate(format!(
                "beta must be >= 0, got {beta}"
            )));
        }
        let candidate = if scenario == 2 {
            CandidateSet::TrueReduced
        } else {
            CandidateSet::FullRsm
        };
        Ok(ScenarioSpec {
            scenario,
            beta,
            candidate,
        })
    }

    pub fn svem_terms(&self) -> Vec<Term> {
        match self.candidate {
            CandidateSet::FullRsm => full_rsm_terms(),
            CandidateSet::TrueReduced => reduced_terms(self.scenario),
        }
    }
}

/// Simulates the scenario response over the design rows with iid standard
/// normal noise.
pub fn simulate_response(design: &FactorTable, spec: &ScenarioSpec, seed: u64) -> Vec<f64> {
    let coord = |name: &str| design.column_index(name).expect("design has x1..x3");
    let (c1, c2, c3) = (coord("x1"), coord("x2"), coord("x3"));
    let numeric = |v: &FactorValue| match v {
        FactorValue::Numeric(x) => *x,
        FactorValue::Level(_) => unreachable!(),
    };
    let mut rng = seeded_rng(derive_seed(seed, tags::SIM_NOISE, 0));
    design
        .rows
        .iter()
        .map(|row| {
            let eps: f64 = rng.sample(StandardNormal);
            let signal = match spec.scenario {
                1 | 2 => {
                    let x1 = numeric(&row[c1]);
                    let x2 = numeric(&row[c2]);
                    spec.beta * (x1 + x2 + x1 * x2)
                }
                3 => spec.beta * numeric(&row[c3]),
                _ => unreachable!(),
            };
            signal + eps
        })
        .collect()
}

/// A test procedure whose power is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    SvemFs,
    SvemLasso,
    AnovaFull,
    AnovaReduced,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::SvemFs => write!(f, "svem_fs"),
            Method::SvemLasso => write!(f, "svem_lasso"),
            Method::AnovaFull => write!(f, "anova_full"),
            Method::AnovaReduced => write!(f, "anova_reduced"),
        }
    }
}

impl Method {
    pub fn parse(text: &str) -> Result<Method> {
        match text.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "svem_fs" | "fs" => Ok(Method::SvemFs),
            "svem_lasso" | "lasso" => Ok(Method::SvemLasso),
            "anova_full" => Ok(Method::AnovaFull),
            "anova_reduced" => Ok(Method::AnovaReduced),
            other => Err(SvemError::ConfigParse(format!("unknown method `{other}`"))),
        }
    }
}

/// Rejection counts for one (beta, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerPoint {
    pub beta: f64,
    pub method: Method,
    pub rejections: usize,
    pub trials: usize,
}

impl PowerPoint {
    pub fn power(&self) -> f64 {
        self.rejections as f64 / self.trials as f64
    }
}

const ALPHA_LEVEL: f64 = 0.05;

/// Monte Carlo power estimate: `trials` fresh responses on a fixed CCD, each
/// analyzed by every requested method, counting p < 0.05. Trials run in
/// parallel on derived seeds; counts are order-independent.
pub fn estimate_power(
    spec: &ScenarioSpec,
    methods: &[Method],
    trials: usize,
    settings: &TestSettings,
    ccd: &CcdOptions,
    seed: u64,
) -> Result<Vec<PowerPoint>> {
    if trials == 0 {
        return Err(SvemError::Degenerate("trials must be >= 1".into()));
    }
    settings.validate()?;
    let design = ccd_design(ccd.alpha_mode, ccd.n_center);
    let specs = scenario_factor_specs(ccd.alpha_mode);
    let svem_terms = spec.svem_terms();
    let x_full = expand_terms(&specs, &full_rsm_terms(), &design)?.values;
    let x_reduced = expand_terms(&specs, &reduced_terms(spec.scenario), &design)?.values;

    let per_trial: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let y = simulate_response(&design, spec, derive_seed(seed, tags::SIM_NOISE, t as u64));
            let mut rejected = Vec::with_capacity(methods.len());
            for (m_idx, method) in methods.iter().enumerate() {
                let p = match method {
                    Method::AnovaFull => anova_whole_model_f(x_full.view(), &y)?.1,
                    Method::AnovaReduced => anova_whole_model_f(x_reduced.view(), &y)?.1,
                    Method::SvemFs | Method::SvemLasso => {
                        let learner = if *method == Method::SvemFs {
                            Learner::ForwardSelection
                        } else {
                            Learner::Lasso
                        };
                        let mut s = settings.clone();
                        s.seed = derive_seed(
                            seed,
                            tags::SIM_FIT,
                            (t * methods.len() + m_idx) as u64,
                        );
                        whole_model_test(&design, &y, &specs, &svem_terms, learner, &s)?.p_value
                    }
                };
                rejected.push(p < ALPHA_LEVEL);
            }
            Ok(rejected)
        })
        .collect::<Result<_>>()?;

    Ok(methods
        .iter()
        .enumerate()
        .map(|(m_idx, &method)| PowerPoint {
            beta: spec.beta,
            method,
            rejections: per_trial.iter().filter(|r| r[m_idx]).count(),
            trials,
        })
        .collect())
}

/// One normal draw per point with mean f_hat and sd s_hat — the sampled
/// response-surface visualization data.
pub fn sample_surface(model: &EnsembleModel, t: &FactorTable, seed: u64) -> Result<Vec<f64>> {
    let summary = svem_predict(model, t)?;
    let mut rng = seeded_rng(derive_seed(seed, tags::SURFACE, 0));
    Ok(summary
        .f_hat
        .iter()
        .zip(&summary.s_hat)
        .map(|(&f, &s)| {
            let z: f64 = rng.sample(StandardNormal);
            f + s * z
        })
        .collect())
}
