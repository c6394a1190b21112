//! Worked example: a 23-run lipid-nanoparticle formulation study with four
//! mixture components, one three-level categorical factor, two continuous
//! process factors, and a 100-parameter candidate effect set. The bundled
//! generator simulates the three responses — Potency and Size depend on the
//! factors, PDI is pure noise — so the whole pipeline can be exercised
//! end-to-end without external data.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::factor::{FactorTable, FactorValue, StudyConfig};
use crate::rng::{derive_seed, seeded_rng, tags};
use crate::sampler::sample_points;

/// Factor/term configuration for the LNP study: the four mixture components
/// PEG, Helper, Ionizable and Cholesterol, the three-level Ionizable Lipid
/// Type, the two continuous process factors, and the 100-column candidate
/// set (categorical mentions expand to two sum-to-zero columns each).
pub const LNP_CONFIG_TOML: &str = r#"
# top-level keys must precede the factor tables in TOML
terms = [
  "Intercept",
  "PEG",
  "Helper",
  "Ionizable",
  "Cholesterol",
  "Ionizable Lipid Type",
  "N_P_ratio",
  "flow rate",
  "PEG * Helper",
  "PEG * Ionizable",
  "Helper * Ionizable",
  "PEG * Cholesterol",
  "Helper * Cholesterol",
  "Ionizable * Cholesterol",
  "Scheffe Cubic(PEG, Helper)",
  "Scheffe Cubic(PEG, Ionizable)",
  "PEG * Helper * Ionizable",
  "Scheffe Cubic(Helper, Ionizable)",
  "Scheffe Cubic(PEG, Cholesterol)",
  "PEG * Helper * Cholesterol",
  "Scheffe Cubic(Helper, Cholesterol)",
  "PEG * Ionizable * Cholesterol",
  "Helper * Ionizable * Cholesterol",
  "Scheffe Cubic(Ionizable, Cholesterol)",
  "Ionizable Lipid Type * N_P_ratio",
  "N_P_ratio * N_P_ratio",
  "Ionizable Lipid Type * flow rate",
  "N_P_ratio * flow rate",
  "flow rate * flow rate",
  "N_P_ratio * N_P_ratio * Ionizable Lipid Type",
  "N_P_ratio * N_P_ratio * flow rate",
  "flow rate * flow rate * Ionizable Lipid Type",
  "flow rate * flow rate * N_P_ratio",
  "PEG * Ionizable Lipid Type",
  "PEG * N_P_ratio",
  "PEG * flow rate",
  "Helper * Ionizable Lipid Type",
  "Helper * N_P_ratio",
  "Helper * flow rate",
  "Ionizable * Ionizable Lipid Type",
  "Ionizable * N_P_ratio",
  "Ionizable * flow rate",
  "Cholesterol * Ionizable Lipid Type",
  "Cholesterol * N_P_ratio",
  "Cholesterol * flow rate",
  "PEG * Helper * Ionizable Lipid Type",
  "PEG * Helper * N_P_ratio",
  "PEG * Helper * flow rate",
  "PEG * Ionizable * Ionizable Lipid Type",
  "PEG * Ionizable * N_P_ratio",
  "PEG * Ionizable * flow rate",
  "PEG * Cholesterol * Ionizable Lipid Type",
  "PEG * Cholesterol * N_P_ratio",
  "PEG * Cholesterol * flow rate",
  "PEG * Ionizable Lipid Type * N_P_ratio",
  "PEG * Ionizable Lipid Type * flow rate",
  "PEG * N_P_ratio * flow rate",
  "Helper * Ionizable * Ionizable Lipid Type",
  "Helper * Ionizable * N_P_ratio",
  "Helper * Ionizable * flow rate",
  "Helper * Cholesterol * Ionizable Lipid Type",
  "Helper * Cholesterol * N_P_ratio",
  "Helper * Cholesterol * flow rate",
  "Helper * Ionizable Lipid Type * N_P_ratio",
  "Helper * Ionizable Lipid Type * flow rate",
  "Helper * N_P_ratio * flow rate",
  "Ionizable * Cholesterol * Ionizable Lipid Type",
  "Ionizable * Cholesterol * N_P_ratio",
  "Ionizable * Cholesterol * flow rate",
  "Ionizable * Ionizable Lipid Type * N_P_ratio",
  "Ionizable * Ionizable Lipid Type * flow rate",
  "Ionizable * N_P_ratio * flow rate",
  "Cholesterol * Ionizable Lipid Type * N_P_ratio",
  "Cholesterol * Ionizable Lipid Type * flow rate",
  "Cholesterol * N_P_ratio * flow rate",
  "Ionizable Lipid Type * N_P_ratio * flow rate",
]

[[factors]]
name = "PEG"
role = "mixture"
range = [0.01, 0.05]

[[factors]]
name = "Helper"
role = "mixture"
range = [0.1, 0.6]

[[factors]]
name = "Ionizable"
role = "mixture"
range = [0.1, 0.6]

[[factors]]
name = "Cholesterol"
role = "mixture"
range = [0.1, 0.6]

[[factors]]
name = "Ionizable Lipid Type"
role = "categorical"
levels = ["H101", "H102", "H103"]

[[factors]]
name = "N_P_ratio"
role = "continuous"
range = [6.0, 14.0]

[[factors]]
name = "flow rate"
role = "continuous"
range = [1.0, 3.0]
"#;

/// Parses [`LNP_CONFIG_TOML`].
pub fn lnp_study_config() -> StudyConfig {
    StudyConfig::from_toml(LNP_CONFIG_TOML).expect("bundled LNP config must parse")
}

/// Number of experimental runs in the worked example.
pub const LNP_RUNS: usize = 23;

/// One simulated LNP study: factor settings plus the three responses.
#[derive(Debug, Clone)]
pub struct LnpData {
    pub rows: FactorTable,
    pub potency: Vec<f64>,
    pub size: Vec<f64>,
    pub pdi: Vec<f64>,
}

/// Simulates a 23-run study. Potency and Size carry strong factor signal,
/// PDI is generated independently of every factor.
pub fn simulate_lnp_dataset(seed: u64) -> Result<LnpData> {
    let config = lnp_study_config();
    let rows = sample_points(&config.factors, LNP_RUNS, derive_seed(seed, tags::LNP, 0))?;
    let mut rng = seeded_rng(derive_seed(seed, tags::LNP, 1));

    let col = |name: &str| rows.column_index(name).unwrap();
    let (c_peg, c_hel, c_ion) = (col("PEG"), col("Helper"), col("Ionizable"));
    let c_type = col("Ionizable Lipid Type");
    let (c_np, c_flow) = (col("N_P_ratio"), col("flow rate"));

    let numeric = |row: &[FactorValue], c: usize| match &row[c] {
        FactorValue::Numeric(v) => *v,
        FactorValue::Level(_) => unreachable!(),
    };

    let mut potency = Vec::with_capacity(LNP_RUNS);
    let mut size = Vec::with_capacity(LNP_RUNS);
    let mut pdi = Vec::with_capacity(LNP_RUNS);
    for row in &rows.rows {
        // scale to roughly [-1, 1] so effect sizes are comparable
        let np = (numeric(row, c_np) - 10.0) / 4.0;
        let flow = (numeric(row, c_flow) - 2.0) / 1.0;
        let peg = (numeric(row, c_peg) - 0.03) / 0.02;
        let hel = (numeric(row, c_hel) - 0.35) / 0.25;
        let ion = (numeric(row, c_ion) - 0.35) / 0.25;
        let lipid_effect = match &row[c_type] {
            FactorValue::Level(l) => match l.as_str() {
                "H101" => 2.0,
                "H102" => 0.0,
                _ => -2.0,
            },
            FactorValue::Numeric(_) => unreachable!(),
        };

        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let e3: f64 = rng.sample(StandardNormal);

        potency.push(50.0 + 6.0 * np + 4.0 * flow + 3.0 * np * flow + lipid_effect + 0.8 * e1);
        size.push(100.0 + 10.0 * peg + 8.0 * ion - 6.0 * hel + 4.0 * np + 1.0 * e2);
        pdi.push(0.2 + 0.05 * e3);
    }

    Ok(LnpData {
        rows,
        potency,
        size,
        pdi,
    })
}

/// Writes the simulated study as a CSV with the factor columns followed by
/// Potency, Size and PDI.
pub fn write_lnp_csv<W: Write>(data: &LnpData, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = data.rows.factors.clone();
    header.extend(["Potency".into(), "Size".into(), "PDI".into()]);
    w.write_record(&header)?;
    for (i, row) in data.rows.rows.iter().enumerate() {
        let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        record.push(data.potency[i].to_string());
        record.push(data.size[i].to_string());
        record.push(data.pdi[i].to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::expand_terms;

    #[test]
    fn candidate_set_expands_to_100_columns() {
        let cfg = lnp_study_config();
        assert_eq!(cfg.terms.len(), 76);
        let data = simulate_lnp_dataset(1).unwrap();
        let mm = expand_terms(&cfg.factors, &cfg.terms, &data.rows).unwrap();
        assert_eq!(mm.n_params(), 100);
        assert_eq!(mm.n_rows(), LNP_RUNS);
        // intercept column is identically one
        let j = mm.columns.iter().position(|c| c == "Intercept").unwrap();
        assert!((0..mm.n_rows()).all(|i| mm.values[[i, j]] == 1.0));
    }

    #[test]
    fn dataset_is_deterministic_in_seed() {
        let a = simulate_lnp_dataset(9).unwrap();
        let b = simulate_lnp_dataset(9).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.potency, b.potency);
        let c = simulate_lnp_dataset(10).unwrap();
        assert_ne!(a.potency, c.potency);
    }

    #[test]
    fn csv_round_trips_headers() {
        let data = simulate_lnp_dataset(3).unwrap();
        let mut buf = Vec::new();
        write_lnp_csv(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("PEG,Helper,Ionizable,Cholesterol"));
        assert!(first.ends_with("Potency,Size,PDI"));
        assert_eq!(text.lines().count(), 1 + LNP_RUNS);
    }
}
