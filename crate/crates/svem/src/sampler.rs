//! Random evaluation points spread through the factor space.
//!
//! Mixture blocks are sampled uniformly on the bound-constrained simplex:
//! uniform-simplex proposals built from exponential spacings, rejected
//! against the per-component box bounds. Continuous factors are uniform in
//! range (optionally Latin-hypercube stratified), categorical factors
//! uniform over levels.

use rand::Rng;

use crate::error::{Result, SvemError};
use crate::factor::{validate_factor_specs, FactorRole, FactorSpec, FactorTable, FactorValue};
use crate::rng::{derive_seed, seeded_rng, tags};

/// How continuous coordinates are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerMode {
    /// Independent uniform draws (the default).
    #[default]
    Uniform,
    /// Latin-hypercube stratification per continuous factor. Mixture and
    /// categorical factors are sampled as in [`SamplerMode::Uniform`].
    LatinHypercube,
}

/// Draws `n_point` factor-setting rows, deterministic in `seed`.
pub fn sample_points(specs: &[FactorSpec], n_point: usize, seed: u64) -> Result<FactorTable> {
    sample_points_with(specs, n_point, seed, SamplerMode::Uniform)
}

pub fn sample_points_with(
    specs: &[FactorSpec],
    n_point: usize,
    seed: u64,
    mode: SamplerMode,
) -> Result<FactorTable> {
    validate_factor_specs(specs)?;
    if n_point == 0 {
        return Err(SvemError::Degenerate("n_point must be >= 1".into()));
    }
    let mut rng = seeded_rng(derive_seed(seed, tags::POINTS, 0));

    let mixture: Vec<(usize, f64, f64)> = specs
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s.role {
            FactorRole::Mixture { low, high } => Some((i, low, high)),
            _ => None,
        })
        .collect();

    let mut rows: Vec<Vec<FactorValue>> =
        vec![vec![FactorValue::Numeric(0.0); specs.len()]; n_point];

    // Mixture block: rejection sampling row by row with shared acceptance
    // accounting so infeasibly tight bounds fail fast.
    if !mixture.is_empty() {
        let mut proposals: u64 = 0;
        let mut accepted: u64 = 0;
        let mut warned = false;
        let mut spacings = vec![0.0f64; mixture.len()];
        for row in rows.iter_mut() {
            loop {
                proposals += 1;
                let mut total = 0.0;
                for e in spacings.iter_mut() {
                    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                    *e = -u.ln();
                    total += *e;
                }
                let ok = mixture.iter().zip(spacings.iter()).all(|(&(_, lo, hi), &e)| {
                    let x = e / total;
                    x >= lo && x <= hi
                });
                if ok {
                    accepted += 1;
                    for (&(col, _, _), &e) in mixture.iter().zip(spacings.iter()) {
                        row[col] = FactorValue::Numeric(e / total);
                    }
                    break;
                }
                if !warned && proposals >= 10_000 && (accepted as f64) < 0.01 * proposals as f64 {
                    log::warn!(
                        "mixture bound rejection acceptance below 1% ({accepted}/{proposals} accepted)"
                    );
                    warned = true;
                }
                if proposals >= 1_000_000 && (accepted as f64) < 1e-4 * proposals as f64 {
                    return Err(SvemError::InfeasibleBounds(format!(
                        "mixture rejection acceptance below 1e-4 after {proposals} proposals"
                    )));
                }
            }
        }
    }

    // Continuous factors.
    for (i, spec) in specs.iter().enumerate() {
        let (low, high) = match spec.role {
            FactorRole::Continuous { low, high } => (low, high),
            _ => continue,
        };
        match mode {
            SamplerMode::Uniform => {
                for row in rows.iter_mut() {
                    let u: f64 = rng.random();
                    row[i] = FactorValue::Numeric(low + u * (high - low));
                }
            }
            SamplerMode::LatinHypercube => {
                // one stratum per row, shuffled
                let mut strata: Vec<usize> = (0..n_point).collect();
                for j in (1..n_point).rev() {
                    let k = rng.random_range(0..=j);
                    strata.swap(j, k);
                }
                for (row, &s) in rows.iter_mut().zip(strata.iter()) {
                    let u: f64 = rng.random();
                    let frac = (s as f64 + u) / n_point as f64;
                    row[i] = FactorValue::Numeric(low + frac * (high - low));
                }
            }
        }
    }

    // Categorical factors.
    for (i, spec) in specs.iter().enumerate() {
        let levels = match &spec.role {
            FactorRole::Categorical { levels } => levels,
            _ => continue,
        };
        for row in rows.iter_mut() {
            let k = rng.random_range(0..levels.len());
            row[i] = FactorValue::Level(levels[k].clone());
        }
    }

    Ok(FactorTable::new(
        specs.iter().map(|s| s.name.clone()).collect(),
        rows,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::FactorSpec;

    fn numeric(v: &FactorValue) -> f64 {
        match v {
            FactorValue::Numeric(x) => *x,
            FactorValue::Level(_) => panic!("expected numeric"),
        }
    }

    #[test]
    fn table3_bounds_and_simplex_sum_hold() {
        let cfg = crate::factor::StudyConfig::from_toml(crate::lnp::LNP_CONFIG_TOML).unwrap();
        let t = sample_points(&cfg.factors, 2000, 11).unwrap();
        let peg = t.column_index("PEG").unwrap();
        let mix_cols: Vec<usize> = cfg
            .factors
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_mixture())
            .map(|(i, _)| i)
            .collect();
        for row in &t.rows {
            let v = numeric(&row[peg]);
            assert!((0.01..=0.05).contains(&v), "PEG out of range: {v}");
            let sum: f64 = mix_cols.iter().map(|&c| numeric(&row[c])).sum();
            assert!((sum - 1.0).abs() <= 1e-12, "mixture sum {sum}");
        }
    }

    #[test]
    fn single_point_in_range() {
        let specs = vec![FactorSpec::continuous("x", 0.0, 2.0)];
        let t = sample_points(&specs, 1, 5).unwrap();
        let v = numeric(&t.rows[0][0]);
        assert!((0.0..=2.0).contains(&v));
    }

    #[test]
    fn unconstrained_simplex_mean_is_one_third() {
        // Dirichlet(1,1,1) coordinate: mean 1/3, var 1/18.
        let specs = vec![
            FactorSpec::mixture("a", 0.0, 1.0),
            FactorSpec::mixture("b", 0.0, 1.0),
            FactorSpec::mixture("c", 0.0, 1.0),
        ];
        let n = 20_000;
        let t = sample_points(&specs, n, 7).unwrap();
        let se = (1.0f64 / 18.0 / n as f64).sqrt();
        for col in 0..3 {
            let mean: f64 = t.rows.iter().map(|r| numeric(&r[col])).sum::<f64>() / n as f64;
            assert!(
                (mean - 1.0 / 3.0).abs() < 3.0 * se,
                "coordinate {col} mean {mean} not within 3 se of 1/3"
            );
        }
    }

    #[test]
    fn seed_determinism_and_divergence() {
        let cfg = crate::factor::StudyConfig::from_toml(crate::lnp::LNP_CONFIG_TOML).unwrap();
        let a = sample_points(&cfg.factors, 50, 99).unwrap();
        let b = sample_points(&cfg.factors, 50, 99).unwrap();
        let c = sample_points(&cfg.factors, 50, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn latin_hypercube_stratifies_continuous() {
        let specs = vec![FactorSpec::continuous("x", 0.0, 1.0)];
        let n = 64;
        let t = sample_points_with(&specs, n, 3, SamplerMode::LatinHypercube).unwrap();
        let mut seen = vec![false; n];
        for row in &t.rows {
            let stratum = (numeric(&row[0]) * n as f64).floor() as usize;
            seen[stratum.min(n - 1)] = true;
        }
        assert!(seen.iter().all(|&s| s), "every stratum hit exactly once");
    }

    #[test]
    fn infeasible_mixture_bounds_error_out() {
        // feasible per validate (sum(low)=0.9 <= 1 <= sum(high)) but the slice
        // is a sliver: every coordinate confined to [0.30, 0.34].
        let specs = vec![
            FactorSpec::mixture("a", 0.30, 0.335),
            FactorSpec::mixture("b", 0.30, 0.335),
            FactorSpec::mixture("c", 0.30, 0.335),
        ];
        // acceptance is ~ the simplex area of a tiny triangle; expect either a
        // slow success or the infeasibility error; with a sliver this tight the
        // error path must trigger.
        let specs_tight = vec![
            FactorSpec::mixture("a", 0.333, 0.3334),
            FactorSpec::mixture("b", 0.333, 0.3334),
            FactorSpec::mixture("c", 0.3333, 0.3336),
        ];
        let r = sample_points(&specs_tight, 5, 1);
        assert!(matches!(r, Err(SvemError::InfeasibleBounds(_))));
        // the milder case still succeeds
        let ok = sample_points(&specs, 5, 1);
        assert!(ok.is_ok());
    }
}
