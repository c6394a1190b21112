//! Study factors, candidate model terms, and expansion of factor-setting
//! rows into numeric model-matrix rows.
//!
//! Factors come in three roles: mixture components (bounded proportions that
//! sum to one across the mixture block), continuous settings with a declared
//! range, and categorical settings with a fixed level list. Candidate effects
//! are described by [`Term`]s — intercept, products of factors (mains,
//! interactions, powers), and the third-order Scheffé cubic in two mixture
//! components, `A*B*(A-B)`.
//!
//! Expansion rules:
//! * continuous factors are affinely mapped from their declared range onto
//!   [-1, 1] before any product is formed, so powers and interactions stay
//!   numerically balanced; the applied maps are recorded in
//!   [`ModelMatrix::scaling`];
//! * mixture factors enter as raw proportions;
//! * a categorical factor with L levels contributes L-1 sum-to-zero coded
//!   columns per mention (level i maps to +1 on column i, the last level maps
//!   to -1 on every column).

use std::collections::HashSet;
use std::fmt;

use ndarray::Array2;
use serde::Deserialize;

use crate::error::{Result, SvemError};

/// Role-specific payload of a study factor.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorRole {
    Mixture { low: f64, high: f64 },
    Continuous { low: f64, high: f64 },
    Categorical { levels: Vec<String> },
}

/// One declared study factor.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpec {
    pub name: String,
    pub role: FactorRole,
}

impl FactorSpec {
    pub fn mixture(name: impl Into<String>, low: f64, high: f64) -> Self {
        FactorSpec {
            name: name.into(),
            role: FactorRole::Mixture { low, high },
        }
    }

    pub fn continuous(name: impl Into<String>, low: f64, high: f64) -> Self {
        FactorSpec {
            name: name.into(),
            role: FactorRole::Continuous { low, high },
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>) -> Self {
        FactorSpec {
            name: name.into(),
            role: FactorRole::Categorical { levels },
        }
    }

    pub fn is_mixture(&self) -> bool {
        matches!(self.role, FactorRole::Mixture { .. })
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.role, FactorRole::Continuous { .. })
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.role, FactorRole::Categorical { .. })
    }

    fn schema_err(&self, reason: impl Into<String>) -> SvemError {
        SvemError::Schema {
            factor: self.name.clone(),
            reason: reason.into(),
        }
    }
}

/// Validates a factor list: unique names, sane ranges/levels, and a feasible
/// mixture block (`sum(low) <= 1 <= sum(high)`).
pub fn validate_factor_specs(specs: &[FactorSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(SvemError::ConfigParse("no factors declared".into()));
    }
    let mut seen = HashSet::new();
    for spec in specs {
        if spec.name.trim().is_empty() {
            return Err(spec.schema_err("empty factor name"));
        }
        if spec.name.contains('*') || spec.name.contains('^') {
            return Err(spec.schema_err("factor names may not contain `*` or `^`"));
        }
        if !seen.insert(spec.name.as_str()) {
            return Err(spec.schema_err("duplicate factor name"));
        }
        match &spec.role {
            FactorRole::Mixture { low, high } => {
                if !low.is_finite() || !high.is_finite() || low >= high {
                    return Err(spec.schema_err(format!("inverted or empty range [{low}, {high}]")));
                }
                if *low < 0.0 {
                    return Err(spec.schema_err("mixture lower bound must be >= 0"));
                }
            }
            FactorRole::Continuous { low, high } => {
                if !low.is_finite() || !high.is_finite() || low >= high {
                    return Err(spec.schema_err(format!("inverted or empty range [{low}, {high}]")));
                }
            }
            FactorRole::Categorical { levels } => {
                if levels.len() < 2 {
                    return Err(spec.schema_err("categorical factors need at least 2 levels"));
                }
                let mut lv = HashSet::new();
                for l in levels {
                    if !lv.insert(l.as_str()) {
                        return Err(spec.schema_err(format!("duplicate level `{l}`")));
                    }
                }
            }
        }
    }
    let mixture: Vec<&FactorSpec> = specs.iter().filter(|s| s.is_mixture()).collect();
    if !mixture.is_empty() {
        let sum_low: f64 = mixture
            .iter()
            .map(|s| match s.role {
                FactorRole::Mixture { low, .. } => low,
                _ => unreachable!(),
            })
            .sum();
        let sum_high: f64 = mixture
            .iter()
            .map(|s| match s.role {
                FactorRole::Mixture { high, .. } => high,
                _ => unreachable!(),
            })
            .sum();
        if sum_low > 1.0 || sum_high < 1.0 {
            return Err(SvemError::InfeasibleBounds(format!(
                "mixture bounds leave no simplex slice: sum(low) = {sum_low}, sum(high) = {sum_high}"
            )));
        }
    }
    Ok(())
}

/// One cell of a factor-setting row.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorValue {
    Numeric(f64),
    Level(String),
}

impl fmt::Display for FactorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactorValue::Numeric(v) => write!(f, "{v}"),
            FactorValue::Level(l) => write!(f, "{l}"),
        }
    }
}

/// A batch of factor-setting rows in the native factor scale. Used both for
/// experimental designs and for the evaluation points T sampled through the
/// factor space.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    pub factors: Vec<String>,
    pub rows: Vec<Vec<FactorValue>>,
}

impl FactorTable {
    pub fn new(factors: Vec<String>, rows: Vec<Vec<FactorValue>>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == factors.len()));
        FactorTable { factors, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f == name)
    }

    /// Keeps only the rows at the given indices (in the given order).
    pub fn subset(&self, keep: &[usize]) -> FactorTable {
        FactorTable {
            factors: self.factors.clone(),
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Classification of a term by shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    Intercept,
    Main,
    Interaction,
    Power,
    ScheffeCubic,
}

/// A candidate model effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Intercept,
    /// Product of factors with exponents, e.g. `[("x1", 2), ("x2", 1)]`.
    Product(Vec<(String, u32)>),
    /// Third-order Scheffé term in two mixture components: `A*B*(A-B)`.
    ScheffeCubic(String, String),
}

impl Term {
    pub fn main(factor: impl Into<String>) -> Self {
        Term::Product(vec![(factor.into(), 1)])
    }

    pub fn power(factor: impl Into<String>, exponent: u32) -> Self {
        Term::Product(vec![(factor.into(), exponent)])
    }

    pub fn interaction<I: Into<String>>(factors: impl IntoIterator<Item = I>) -> Self {
        Term::Product(factors.into_iter().map(|f| (f.into(), 1)).collect())
    }

    pub fn kind(&self) -> TermKind {
        match self {
            Term::Intercept => TermKind::Intercept,
            Term::ScheffeCubic(..) => TermKind::ScheffeCubic,
            Term::Product(parts) => match (parts.len(), parts.first().map(|p| p.1)) {
                (1, Some(1)) => TermKind::Main,
                (1, _) => TermKind::Power,
                _ => TermKind::Interaction,
            },
        }
    }

    /// Parses the textual term notation used in config files:
    /// `Intercept` | `1`, products like `PEG * Helper` or `flow rate^2`
    /// (`flow rate * flow rate` is equivalent), and
    /// `Scheffe Cubic(PEG, Helper)`.
    pub fn parse(text: &str) -> Result<Term> {
        let t = text.trim();
        if t.is_empty() {
            return Err(SvemError::Term("empty term".into()));
        }
        if t == "1" || t.eq_ignore_ascii_case("intercept") || t.eq_ignore_ascii_case("(intercept)")
        {
            return Ok(Term::Intercept);
        }
        let lower = t.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("scheffe cubic") {
            let rest = rest.trim_start();
            if !rest.starts_with('(') || !t.trim_end().ends_with(')') {
                return Err(SvemError::Term(format!(
                    "malformed Scheffe Cubic term `{t}`"
                )));
            }
            let open = t.find('(').unwrap();
            let close = t.rfind(')').unwrap();
            let inner = &t[open + 1..close];
            let args: Vec<&str> = inner.split(',').map(str::trim).collect();
            if args.len() != 2 || args.iter().any(|a| a.is_empty()) {
                return Err(SvemError::Term(format!(
                    "Scheffe Cubic expects exactly two factors, got `{t}`"
                )));
            }
            return Ok(Term::ScheffeCubic(args[0].to_string(), args[1].to_string()));
        }
        let mut parts: Vec<(String, u32)> = Vec::new();
        for atom in t.split('*') {
            let atom = atom.trim();
            if atom.is_empty() {
                return Err(SvemError::Term(format!("empty atom in term `{t}`")));
            }
            let (name, exp) = match atom.rsplit_once('^') {
                Some((n, e)) => {
                    let exp: u32 = e.trim().parse().map_err(|_| {
                        SvemError::Term(format!("bad exponent `{e}` in term `{t}`"))
                    })?;
                    (n.trim(), exp)
                }
                None => (atom, 1),
            };
            if exp == 0 {
                return Err(SvemError::Term(format!("zero exponent in term `{t}`")));
            }
            match parts.iter_mut().find(|(n, _)| n == name) {
                Some(entry) => entry.1 += exp,
                None => parts.push((name.to_string(), exp)),
            }
        }
        Ok(Term::Product(parts))
    }

    /// Canonical display label (before categorical expansion).
    pub fn label(&self) -> String {
        match self {
            Term::Intercept => "Intercept".to_string(),
            Term::ScheffeCubic(a, b) => format!("Scheffe Cubic({a}, {b})"),
            Term::Product(parts) => parts
                .iter()
                .map(|(n, e)| {
                    if *e == 1 {
                        n.clone()
                    } else {
                        format!("{n}^{e}")
                    }
                })
                .collect::<Vec<_>>()
                .join("*"),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Affine map applied to one continuous factor before expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorScaling {
    pub factor: String,
    pub center: f64,
    pub half_width: f64,
}

/// Numeric expansion of a term list over a batch of factor rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrix {
    pub columns: Vec<String>,
    /// n_rows x n_params.
    pub values: Array2<f64>,
    /// Continuous-factor maps applied during expansion.
    pub scaling: Vec<FactorScaling>,
}

impl ModelMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.values.ncols()
    }
}

/// A factor reference resolved against the spec list and the row table.
struct BoundFactor<'a> {
    spec: &'a FactorSpec,
    col: usize,
}

enum ColumnPiece<'a> {
    /// Continuous factor: ((v - center)/half_width)^exp.
    Scaled {
        f: BoundFactor<'a>,
        center: f64,
        half_width: f64,
        exp: u32,
    },
    /// Mixture factor: raw v^exp.
    Raw { f: BoundFactor<'a>, exp: u32 },
    /// One sum-to-zero coded column of a categorical factor.
    Code {
        f: BoundFactor<'a>,
        code: usize,
        n_levels: usize,
    },
    /// A*B*(A-B) over two mixture factors.
    Scheffe {
        a: BoundFactor<'a>,
        b: BoundFactor<'a>,
    },
    One,
}

/// A compiled output column: product of pieces.
struct ColumnPlan<'a> {
    label: String,
    pieces: Vec<ColumnPiece<'a>>,
}

fn bind<'a>(
    specs: &'a [FactorSpec],
    table: &FactorTable,
    name: &str,
    term: &Term,
) -> Result<BoundFactor<'a>> {
    let spec = specs.iter().find(|s| s.name == name).ok_or_else(|| {
        SvemError::Term(format!(
            "term `{}` references undeclared factor `{name}`",
            term.label()
        ))
    })?;
    let col = table.column_index(name).ok_or_else(|| {
        SvemError::Term(format!("factor `{name}` missing from the row table"))
    })?;
    Ok(BoundFactor { spec, col })
}

fn numeric_value(row_idx: usize, row: &[FactorValue], f: &BoundFactor) -> Result<f64> {
    match &row[f.col] {
        FactorValue::Numeric(v) => Ok(*v),
        FactorValue::Level(l) => Err(SvemError::Ingest {
            row: row_idx + 1,
            column: f.spec.name.clone(),
            reason: format!("expected a numeric value, got level `{l}`"),
        }),
    }
}

fn level_index(row_idx: usize, row: &[FactorValue], f: &BoundFactor) -> Result<usize> {
    let levels = match &f.spec.role {
        FactorRole::Categorical { levels } => levels,
        _ => unreachable!("level_index on non-categorical factor"),
    };
    match &row[f.col] {
        FactorValue::Level(l) => levels.iter().position(|x| x == l).ok_or_else(|| {
            SvemError::UnknownLevel {
                row: row_idx + 1,
                factor: f.spec.name.clone(),
                level: l.clone(),
            }
        }),
        FactorValue::Numeric(v) => Err(SvemError::Ingest {
            row: row_idx + 1,
            column: f.spec.name.clone(),
            reason: format!("expected a level label, got numeric value {v}"),
        }),
    }
}

/// Sum-to-zero code for `level` on coded column `code` of an L-level factor.
#[inline]
fn effects_code(level: usize, code: usize, n_levels: usize) -> f64 {
    if level == code {
        1.0
    } else if level == n_levels - 1 {
        -1.0
    } else {
        0.0
    }
}

/// Range check against the declared bounds, with a small tolerance so values
/// sitting exactly on a bound survive round-tripping through text.
fn check_range(row_idx: usize, name: &str, v: f64, low: f64, high: f64) -> Result<()> {
    let eps = 1e-9 * (high - low).max(1.0);
    if !v.is_finite() || v < low - eps || v > high + eps {
        return Err(SvemError::OutOfRange {
            row: row_idx + 1,
            factor: name.to_string(),
            value: v,
            low,
            high,
        });
    }
    Ok(())
}

/// Expands factor-setting rows into the numeric model matrix for the given
/// term list. Column ordering follows the term list deterministically; a
/// categorical factor contributes levels-1 coded columns per mention.
pub fn expand_terms(
    specs: &[FactorSpec],
    terms: &[Term],
    rows: &FactorTable,
) -> Result<ModelMatrix> {
    validate_factor_specs(specs)?;
    if terms.is_empty() {
        return Err(SvemError::Term("no terms declared".into()));
    }
    // Every declared factor must be present in the table and every value must
    // be in range / a known level.
    for spec in specs {
        let col = rows.column_index(&spec.name).ok_or_else(|| {
            SvemError::Term(format!("factor `{}` missing from the row table", spec.name))
        })?;
        match &spec.role {
            FactorRole::Mixture { low, high } | FactorRole::Continuous { low, high } => {
                for (i, row) in rows.rows.iter().enumerate() {
                    match &row[col] {
                        FactorValue::Numeric(v) => check_range(i, &spec.name, *v, *low, *high)?,
                        FactorValue::Level(l) => {
                            return Err(SvemError::Ingest {
                                row: i + 1,
                                column: spec.name.clone(),
                                reason: format!("expected a numeric value, got level `{l}`"),
                            })
                        }
                    }
                }
            }
            FactorRole::Categorical { levels } => {
                for (i, row) in rows.rows.iter().enumerate() {
                    match &row[col] {
                        FactorValue::Level(l) => {
                            if !levels.iter().any(|x| x == l) {
                                return Err(SvemError::UnknownLevel {
                                    row: i + 1,
                                    factor: spec.name.clone(),
                                    level: l.clone(),
                                });
                            }
                        }
                        FactorValue::Numeric(v) => {
                            return Err(SvemError::Ingest {
                                row: i + 1,
                                column: spec.name.clone(),
                                reason: format!("expected a level label, got numeric value {v}"),
                            })
                        }
                    }
                }
            }
        }
    }

    let mut plans: Vec<ColumnPlan> = Vec::new();
    for term in terms {
        match term {
            Term::Intercept => plans.push(ColumnPlan {
                label: "Intercept".into(),
                pieces: vec![ColumnPiece::One],
            }),
            Term::ScheffeCubic(a, b) => {
                if a == b {
                    return Err(SvemError::Term(format!(
                        "Scheffe Cubic needs two distinct factors, got `{}`",
                        term.label()
                    )));
                }
                let fa = bind(specs, rows, a, term)?;
                let fb = bind(specs, rows, b, term)?;
                if !fa.spec.is_mixture() || !fb.spec.is_mixture() {
                    return Err(SvemError::Term(format!(
                        "Scheffe Cubic factors must both be mixture components in `{}`",
                        term.label()
                    )));
                }
                plans.push(ColumnPlan {
                    label: term.label(),
                    pieces: vec![ColumnPiece::Scheffe { a: fa, b: fb }],
                });
            }
            Term::Product(parts) => {
                if parts.is_empty() {
                    return Err(SvemError::Term("empty product term".into()));
                }
                // numeric pieces first, then the categorical mentions which
                // fan out into coded-column combinations
                let mut numeric: Vec<(ColumnPiece, String)> = Vec::new();
                let mut categorical: Vec<BoundFactor> = Vec::new();
                for (name, exp) in parts {
                    let f = bind(specs, rows, name, term)?;
                    match &f.spec.role {
                        FactorRole::Continuous { low, high } => {
                            let center = 0.5 * (low + high);
                            let half_width = 0.5 * (high - low);
                            let label = if *exp == 1 {
                                name.clone()
                            } else {
                                format!("{name}^{exp}")
                            };
                            numeric.push((
                                ColumnPiece::Scaled {
                                    f,
                                    center,
                                    half_width,
                                    exp: *exp,
                                },
                                label,
                            ));
                        }
                        FactorRole::Mixture { .. } => {
                            if *exp > 1 {
                                return Err(SvemError::Term(format!(
                                    "mixture factor `{name}` may not carry exponent {exp} \
                                     (mixture curvature enters via interactions and Scheffe terms)"
                                )));
                            }
                            numeric.push((ColumnPiece::Raw { f, exp: *exp }, name.clone()));
                        }
                        FactorRole::Categorical { .. } => {
                            if *exp > 1 {
                                return Err(SvemError::Term(format!(
                                    "categorical factor `{name}` may not carry exponent {exp}"
                                )));
                            }
                            categorical.push(f);
                        }
                    }
                }
                // cartesian product over the coded columns of each
                // categorical mention (usually zero or one mention)
                let mut combos: Vec<(Vec<ColumnPiece>, Vec<String>)> = vec![(vec![], vec![])];
                for f in categorical {
                    let levels = match &f.spec.role {
                        FactorRole::Categorical { levels } => levels.clone(),
                        _ => unreachable!(),
                    };
                    let n_levels = levels.len();
                    let mut next = Vec::with_capacity(combos.len() * (n_levels - 1));
                    for (pieces, labels) in &combos {
                        for code in 0..(n_levels - 1) {
                            let mut p = Vec::with_capacity(pieces.len() + 1);
                            for piece in pieces {
                                p.push(clone_piece(piece));
                            }
                            p.push(ColumnPiece::Code {
                                f: BoundFactor {
                                    spec: f.spec,
                                    col: f.col,
                                },
                                code,
                                n_levels,
                            });
                            let mut l = labels.clone();
                            l.push(format!("{}[{}]", f.spec.name, levels[code]));
                            next.push((p, l));
                        }
                    }
                    combos = next;
                }
                for (cat_pieces, cat_labels) in combos {
                    let mut pieces: Vec<ColumnPiece> = Vec::new();
                    let mut labels: Vec<String> = Vec::new();
                    for (piece, label) in &numeric {
                        pieces.push(clone_piece(piece));
                        labels.push(label.clone());
                    }
                    pieces.extend(cat_pieces);
                    labels.extend(cat_labels);
                    plans.push(ColumnPlan {
                        label: labels.join("*"),
                        pieces,
                    });
                }
            }
        }
    }

    let n = rows.n_rows();
    let p = plans.len();
    let mut values = Array2::<f64>::zeros((n, p));
    for (i, row) in rows.rows.iter().enumerate() {
        for (j, plan) in plans.iter().enumerate() {
            let mut v = 1.0;
            for piece in &plan.pieces {
                v *= match piece {
                    ColumnPiece::One => 1.0,
                    ColumnPiece::Scaled {
                        f,
                        center,
                        half_width,
                        exp,
                    } => {
                        let raw = numeric_value(i, row, f)?;
                        ((raw - center) / half_width).powi(*exp as i32)
                    }
                    ColumnPiece::Raw { f, exp } => {
                        numeric_value(i, row, f)?.powi(*exp as i32)
                    }
                    ColumnPiece::Code { f, code, n_levels } => {
                        let level = level_index(i, row, f)?;
                        effects_code(level, *code, *n_levels)
                    }
                    ColumnPiece::Scheffe { a, b } => {
                        let va = numeric_value(i, row, a)?;
                        let vb = numeric_value(i, row, b)?;
                        va * vb * (va - vb)
                    }
                };
            }
            values[[i, j]] = v;
        }
    }

    let scaling = specs
        .iter()
        .filter_map(|s| match s.role {
            FactorRole::Continuous { low, high } => Some(FactorScaling {
                factor: s.name.clone(),
                center: 0.5 * (low + high),
                half_width: 0.5 * (high - low),
            }),
            _ => None,
        })
        .collect();

    Ok(ModelMatrix {
        columns: plans.into_iter().map(|p| p.label).collect(),
        values,
        scaling,
    })
}

fn clone_piece<'a>(piece: &ColumnPiece<'a>) -> ColumnPiece<'a> {
    match piece {
        ColumnPiece::One => ColumnPiece::One,
        ColumnPiece::Scaled {
            f,
            center,
            half_width,
            exp,
        } => ColumnPiece::Scaled {
            f: BoundFactor {
                spec: f.spec,
                col: f.col,
            },
            center: *center,
            half_width: *half_width,
            exp: *exp,
        },
        ColumnPiece::Raw { f, exp } => ColumnPiece::Raw {
            f: BoundFactor {
                spec: f.spec,
                col: f.col,
            },
            exp: *exp,
        },
        ColumnPiece::Code { f, code, n_levels } => ColumnPiece::Code {
            f: BoundFactor {
                spec: f.spec,
                col: f.col,
            },
            code: *code,
            n_levels: *n_levels,
        },
        ColumnPiece::Scheffe { a, b } => ColumnPiece::Scheffe {
            a: BoundFactor {
                spec: a.spec,
                col: a.col,
            },
            b: BoundFactor {
                spec: b.spec,
                col: b.col,
            },
        },
    }
}

/// Parsed factor/term configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub factors: Vec<FactorSpec>,
    pub terms: Vec<Term>,
}

#[derive(Deserialize)]
struct RawConfig {
    factors: Vec<RawFactor>,
    #[serde(default)]
    terms: Vec<String>,
}

#[derive(Deserialize)]
struct RawFactor {
    name: String,
    role: String,
    range: Option<[f64; 2]>,
    levels: Option<Vec<String>>,
}

impl StudyConfig {
    /// Parses the TOML study configuration. Note that the top-level `terms`
    /// key must come before the factor tables:
    ///
    /// ```toml
    /// terms = ["Intercept", "PEG", "PEG * Helper", "Scheffe Cubic(PEG, Helper)"]
    ///
    /// [[factors]]
    /// name = "PEG"
    /// role = "mixture"          # mixture | continuous | categorical
    /// range = [0.01, 0.05]
    ///
    /// [[factors]]
    /// name = "Ionizable Lipid Type"
    /// role = "categorical"
    /// levels = ["H101", "H102", "H103"]
    /// ```
    pub fn from_toml(text: &str) -> Result<StudyConfig> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| SvemError::ConfigParse(e.to_string()))?;
        let mut factors = Vec::with_capacity(raw.factors.len());
        for rf in raw.factors {
            let role = match rf.role.to_ascii_lowercase().as_str() {
                "mixture" => {
                    let [low, high] = rf.range.ok_or_else(|| SvemError::Schema {
                        factor: rf.name.clone(),
                        reason: "mixture factors need a `range`".into(),
                    })?;
                    FactorRole::Mixture { low, high }
                }
                "continuous" => {
                    let [low, high] = rf.range.ok_or_else(|| SvemError::Schema {
                        factor: rf.name.clone(),
                        reason: "continuous factors need a `range`".into(),
                    })?;
                    FactorRole::Continuous { low, high }
                }
                "categorical" => {
                    let levels = rf.levels.ok_or_else(|| SvemError::Schema {
                        factor: rf.name.clone(),
                        reason: "categorical factors need `levels`".into(),
                    })?;
                    FactorRole::Categorical { levels }
                }
                other => {
                    return Err(SvemError::Schema {
                        factor: rf.name.clone(),
                        reason: format!("unknown role `{other}`"),
                    })
                }
            };
            factors.push(FactorSpec {
                name: rf.name,
                role,
            });
        }
        validate_factor_specs(&factors)?;
        let mut terms = Vec::with_capacity(raw.terms.len());
        for t in &raw.terms {
            terms.push(Term::parse(t)?);
        }
        Ok(StudyConfig { factors, terms })
    }
}

/// Parses and validates the factor block of a config file, preserving order.
pub fn parse_factor_specs(config_text: &str) -> Result<Vec<FactorSpec>> {
    Ok(StudyConfig::from_toml(config_text)?.factors)
}
