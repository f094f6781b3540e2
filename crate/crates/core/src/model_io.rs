//! JSON model files, built-in presets and torus mode lists.
//!
//! A model file looks like
//!
//! ```json
//! {
//!   "name": "iwasawa",
//!   "n": 3,
//!   "d_alpha": [ { "k": 3, "kind": "20", "i": 1, "j": 2, "re": 1.0, "im": 0.0 } ],
//!   "metric": [ [[1,0],[0,0],[0,0]], [[0,0],[1,0],[0,0]], [[0,0],[0,0],[1,0]] ]
//! }
//! ```
//!
//! Each `d_alpha` entry adds `(re + i im) alpha^i ∧ alpha^j` (kind `"20"`, `i < j`) or
//! `(re + i im) alpha^i ∧ alphabar^j` (kind `"11"`) to `d alpha^k`; indices are 1-based.
//! `metric` is optional (identity when absent) and holds `g_{jk}` as `[re, im]` pairs,
//! either as `n` rows or as one row-major list of `n^2` entries.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{LieAlgebraModel, StructureTerm, TermKind};
use crate::error::{Error, Result};
use crate::hermitian::InvariantMetric;
use crate::linalg::CMatrix;
use crate::torus::FourierMode;

/// Largest complex dimension accepted from a file.
pub const MAX_DIMENSION: usize = 6;

pub const PRESETS: [&str; 5] = ["iwasawa", "torus1", "torus2", "torus3", "solvable"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermRecord {
    pub k: usize,
    pub kind: TermKind,
    pub i: usize,
    pub j: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricRecord {
    Rows(Vec<Vec<[f64; 2]>>),
    Flat(Vec<[f64; 2]>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    pub n: usize,
    #[serde(default)]
    pub d_alpha: Vec<TermRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricRecord>,
}

/// A validated model with its metric.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub model: LieAlgebraModel,
    pub metric: InvariantMetric,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn field_error(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::ModelField {
        field: field.into(),
        message: message.into(),
    }
}

pub fn parse_model(text: &str) -> Result<LoadedModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(parse_error)?;
    load(&file)
}

pub fn load(file: &ModelFile) -> Result<LoadedModel> {
    let n = file.n;
    if !(1..=MAX_DIMENSION).contains(&n) {
        return Err(field_error("n", format!("must be between 1 and {MAX_DIMENSION}, got {n}")));
    }
    let mut terms = Vec::with_capacity(file.d_alpha.len());
    for (idx, t) in file.d_alpha.iter().enumerate() {
        if !t.re.is_finite() || !t.im.is_finite() {
            return Err(field_error(format!("d_alpha[{idx}]"), "coefficient is not finite"));
        }
        terms.push(StructureTerm::new(t.k, t.kind, t.i, t.j, Complex64::new(t.re, t.im)));
    }
    let model = LieAlgebraModel::new(file.name.clone(), n, terms)?;
    let metric = match &file.metric {
        None => InvariantMetric::identity(n),
        Some(record) => InvariantMetric::new(metric_matrix(n, record)?)?,
    };
    Ok(LoadedModel { model, metric })
}

pub fn metric_matrix(n: usize, record: &MetricRecord) -> Result<CMatrix> {
    let entries: Vec<[f64; 2]> = match record {
        MetricRecord::Rows(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(field_error("metric", format!("expected {n} rows of {n} entries")));
            }
            rows.iter().flatten().copied().collect()
        }
        MetricRecord::Flat(flat) => {
            if flat.len() != n * n {
                return Err(field_error("metric", format!("expected {} entries, got {}", n * n, flat.len())));
            }
            flat.clone()
        }
    };
    if entries.iter().flatten().any(|v| !v.is_finite()) {
        return Err(field_error("metric", "entries must be finite"));
    }
    let values: Vec<Complex64> = entries.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
    Ok(CMatrix::from_row_slice(n, n, &values))
}

/// Parses a bare metric, `[[re, im], ...]` rows or a flat row-major list.
pub fn parse_metric(n: usize, text: &str) -> Result<InvariantMetric> {
    let record: MetricRecord = serde_json::from_str(text).map_err(parse_error)?;
    InvariantMetric::new(metric_matrix(n, &record)?)
}

pub fn preset(name: &str) -> Result<LoadedModel> {
    let model = match name {
        "iwasawa" => LieAlgebraModel::iwasawa(),
        "solvable" => LieAlgebraModel::solvable(1.0, 0.0),
        _ => match name.strip_prefix("torus").and_then(|d| d.parse::<usize>().ok()) {
            Some(n) if (1..=3).contains(&n) => LieAlgebraModel::abelian(n),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown preset `{name}` (available: {})",
                    PRESETS.join(", ")
                )))
            }
        },
    };
    let metric = InvariantMetric::identity(model.n());
    Ok(LoadedModel { model, metric })
}

pub fn to_file(model: &LieAlgebraModel, metric: Option<&InvariantMetric>) -> ModelFile {
    let n = model.n();
    ModelFile {
        name: model.name().to_string(),
        n,
        d_alpha: model
            .terms()
            .iter()
            .map(|t| TermRecord {
                k: t.k,
                kind: t.kind,
                i: t.i,
                j: t.j,
                re: t.coeff.re,
                im: t.coeff.im,
            })
            .collect(),
        metric: metric.map(|m| {
            MetricRecord::Rows(
                (0..n)
                    .map(|r| (0..n).map(|c| [m.matrix()[(r, c)].re, m.matrix()[(r, c)].im]).collect())
                    .collect(),
            )
        }),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ModesFile {
    List(Vec<FourierMode>),
    Wrapped {
        modes: Vec<FourierMode>,
    },
}

/// Mode list: `[{"k": [1,0,1,0], "amplitude": 0.003, "phase": 0.0}, ...]`, optionally
/// wrapped as `{"modes": [...]}`.
pub fn parse_modes(text: &str) -> Result<Vec<FourierMode>> {
    // untagged enums lose the position, so try the plain list first for a precise error
    match serde_json::from_str::<Vec<FourierMode>>(text) {
        Ok(modes) => Ok(modes),
        Err(list_err) => match serde_json::from_str::<ModesFile>(text) {
            Ok(ModesFile::List(modes)) | Ok(ModesFile::Wrapped { modes }) => Ok(modes),
            Err(_) => Err(parse_error(list_err)),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    const IWASAWA: &str = r#"{
  "name": "iwasawa",
  "n": 3,
  "d_alpha": [ { "k": 3, "kind": "20", "i": 1, "j": 2, "re": 1.0, "im": 0.0 } ]
}"#;

    #[test]
    fn parses_iwasawa() {
        let loaded = parse_model(IWASAWA).unwrap();
        assert_eq!(loaded.model.terms(), LieAlgebraModel::iwasawa().terms());
        assert!(linalg::rel_diff(loaded.metric.matrix(), &CMatrix::identity(3, 3)) == 0.0);
    }

    #[test]
    fn metric_formats() {
        let rows = r#"{"name": "t", "n": 2, "metric": [[[2,0],[0,1]],[[0,-1],[3,0]]]}"#;
        let flat = r#"{"name": "t", "n": 2, "metric": [[2,0],[0,1],[0,-1],[3,0]]}"#;
        let a = parse_model(rows).unwrap();
        let b = parse_model(flat).unwrap();
        assert_eq!(a.metric.matrix(), b.metric.matrix());
        assert_eq!(a.metric.matrix()[(0, 1)], Complex64::new(0.0, 1.0));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let text = "{\n  \"name\": \"x\",\n  \"n\": 3,,\n}";
        match parse_model(text) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_field() {
        let missing = r#"{"name": "x", "d_alpha": []}"#;
        let err = parse_model(missing).unwrap_err();
        assert_eq!(err.code(), "E_PARSE");
        assert!(err.to_string().contains("`n`"));

        let kind = r#"{"name": "x", "n": 2, "d_alpha": [{"k": 1, "kind": "02", "i": 1, "j": 2, "re": 1}]}"#;
        assert!(parse_model(kind).unwrap_err().to_string().contains("02"));

        let extra = r#"{"name": "x", "n": 2, "colour": 1}"#;
        assert!(parse_model(extra).unwrap_err().to_string().contains("colour"));

        let dim = r#"{"name": "x", "n": 0}"#;
        match parse_model(dim) {
            Err(Error::ModelField { field, .. }) => assert_eq!(field, "n"),
            other => panic!("{other:?}"),
        }
        let metric = r#"{"name": "x", "n": 2, "metric": [[1,0],[0,0],[1,0]]}"#;
        match parse_model(metric) {
            Err(Error::ModelField { field, .. }) => assert_eq!(field, "metric"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_pass_through() {
        // d alpha^2 = alpha^1 ∧ alphabar^2 violates d^2 = 0
        let jacobi = r#"{"name": "bad", "n": 2, "d_alpha": [{"k": 2, "kind": "11", "i": 1, "j": 2, "re": 1}]}"#;
        let err = parse_model(jacobi).unwrap_err();
        assert_eq!(err.code(), "E_JACOBI");
        assert!(err.to_string().contains("d(d alpha^2)"));

        let index = r#"{"name": "bad", "n": 2, "d_alpha": [{"k": 3, "kind": "20", "i": 1, "j": 2, "re": 1}]}"#;
        assert_eq!(parse_model(index).unwrap_err().code(), "E_INDEX");

        let not_positive = r#"{"name": "x", "n": 2, "metric": [[1,0],[0,0],[0,0],[-1,0]]}"#;
        assert_eq!(parse_model(not_positive).unwrap_err().code(), "E_NOT_POSITIVE");
    }

    #[test]
    fn round_trip() {
        let model = LieAlgebraModel::solvable(0.7, -0.2);
        let metric = InvariantMetric::diagonal(&[2.0, 0.5]).unwrap();
        let text = serde_json::to_string_pretty(&to_file(&model, Some(&metric))).unwrap();
        let back = parse_model(&text).unwrap();
        assert_eq!(back.model.terms(), model.terms());
        assert_eq!(back.metric.matrix(), metric.matrix());
    }

    #[test]
    fn presets() {
        for name in PRESETS {
            let loaded = preset(name).unwrap();
            assert_eq!(loaded.model.n(), loaded.metric.n());
        }
        assert!(preset("torus3").unwrap().model.is_abelian());
        assert!(preset("torus9").is_err());
        assert_eq!(preset("nope").unwrap_err().code(), "E_ARGUMENT");
    }

    #[test]
    fn mode_lists() {
        let bare = r#"[{"k": [1, 0, 1, 0], "amplitude": 0.003}]"#;
        let wrapped = r#"{"modes": [{"k": [1, 0, 1, 0], "amplitude": 0.003, "phase": 0.0}]}"#;
        assert_eq!(parse_modes(bare).unwrap(), parse_modes(wrapped).unwrap());
        assert_eq!(parse_modes("[{\"k\": [1,0,1], \"amplitude\": 1}]").unwrap_err().code(), "E_PARSE");
    }
}
