//! JSON dump and load of weak Hopf algebras.
//!
//! Every real number is written with 17 significant digits and read back
//! through the exact decimal string, so a round trip reproduces each stored
//! value bit for bit. Each sparse entry sits on its own line.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::{Number, Value};
use thiserror::Error;

use crate::cxlinalg::{SparseMatrix, Tensor3, Vector, C64, ZERO};
use crate::wha::{BlockLayout, WeakHopfAlgebra, WhaError};

pub const FORMAT: &str = "tyqg-wha/1";

#[derive(Debug, Error)]
pub enum SerializeError {
    #[error("parse error at line {line} column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("field `{field}` entry {entry}: {message}")]
    Entry { field: String, entry: usize, message: String },
    #[error("non-finite value {0} cannot be written")]
    NonFinite(f64),
    #[error(transparent)]
    Wha(#[from] WhaError),
}

/// A real number as a JSON number with 17 significant digits.
pub fn number(x: f64) -> Result<Value, SerializeError> {
    if !x.is_finite() {
        return Err(SerializeError::NonFinite(x));
    }
    let n = Number::from_str(&format!("{x:.16e}")).expect("formatted float is valid JSON");
    Ok(Value::Number(n))
}

/// Reads a JSON number exactly through its decimal string.
pub fn read_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.to_string().parse().ok(),
        _ => None,
    }
}

fn fmt_num(x: f64) -> Result<String, SerializeError> {
    Ok(number(x)?.to_string())
}

fn fmt_c(c: C64) -> Result<String, SerializeError> {
    Ok(format!("{}, {}", fmt_num(c.re)?, fmt_num(c.im)?))
}

fn list(out: &mut String, name: &str, rows: &[String], last: bool) {
    let _ = write!(out, "  \"{name}\": [");
    if rows.is_empty() {
        out.push(']');
    } else {
        out.push('\n');
        for (i, r) in rows.iter().enumerate() {
            let sep = if i + 1 < rows.len() { "," } else { "" };
            let _ = writeln!(out, "    [{r}]{sep}");
        }
        out.push_str("  ]");
    }
    out.push_str(if last { "\n" } else { ",\n" });
}

/// Serializes `w`; sparse entries appear in sorted order.
pub fn dump(w: &WeakHopfAlgebra) -> Result<String, SerializeError> {
    let d = w.dim();
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"format\": {},", Value::from(FORMAT));
    let _ = writeln!(out, "  \"dim\": {d},");
    let labels: Vec<String> = w.labels().iter().map(|l| Value::from(l.as_str()).to_string()).collect();
    let _ = writeln!(out, "  \"labels\": [{}],", labels.join(", "));
    let unit: Vec<String> = w
        .unit()
        .iter()
        .map(|(i, c)| Ok(format!("{i}, {}", fmt_c(c)?)))
        .collect::<Result<_, SerializeError>>()?;
    list(&mut out, "unit", &unit, false);
    let counit: Vec<String> = w
        .counit()
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != ZERO)
        .map(|(i, c)| Ok(format!("{i}, {}", fmt_c(*c)?)))
        .collect::<Result<_, SerializeError>>()?;
    list(&mut out, "counit", &counit, false);
    for (name, t) in [("multiplication", w.mul_tensor()), ("coproduct", w.coprod_tensor())] {
        let rows: Vec<String> = t
            .triplets()
            .into_iter()
            .map(|(a, b, c, v)| Ok(format!("{a}, {b}, {c}, {}", fmt_c(v)?)))
            .collect::<Result<_, SerializeError>>()?;
        list(&mut out, name, &rows, false);
    }
    for (name, m) in [("antipode", w.antipode_matrix()), ("star", w.star_matrix())] {
        let rows: Vec<String> = m
            .triplets()
            .into_iter()
            .map(|(r, c, v)| Ok(format!("{r}, {c}, {}", fmt_c(v)?)))
            .collect::<Result<_, SerializeError>>()?;
        list(&mut out, name, &rows, false);
    }
    match w.layout() {
        None => out.push_str("  \"layout\": null\n"),
        Some(l) => {
            let sizes: Vec<String> = l.block_sizes.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "  \"layout\": {{\n    \"block_sizes\": [{}],", sizes.join(", "));
            let entries: Vec<String> = l.entries.iter().map(|(x, a, b)| format!("[{x}, {a}, {b}]")).collect();
            let _ = writeln!(out, "    \"entries\": [{}]\n  }}", entries.join(", "));
        }
    }
    out.push_str("}\n");
    Ok(out)
}

struct Reader<'a> {
    obj: &'a serde_json::Map<String, Value>,
    dim: usize,
}

impl<'a> Reader<'a> {
    fn field(&self, name: &str) -> Result<&'a Value, SerializeError> {
        self.obj.get(name).ok_or_else(|| SerializeError::Field {
            field: name.into(),
            message: "missing".into(),
        })
    }

    fn array(&self, name: &str) -> Result<&'a Vec<Value>, SerializeError> {
        self.field(name)?.as_array().ok_or_else(|| SerializeError::Field {
            field: name.into(),
            message: "expected an array".into(),
        })
    }

    /// Entries of the form `[i_1, .., i_k, re, im]` with indices below `dim`;
    /// duplicate index tuples are rejected.
    fn entries(&self, name: &str, k: usize) -> Result<Vec<(Vec<usize>, C64)>, SerializeError> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for (n, e) in self.array(name)?.iter().enumerate() {
            let bad = |message: String| SerializeError::Entry {
                field: name.into(),
                entry: n,
                message,
            };
            let a = e
                .as_array()
                .filter(|a| a.len() == k + 2)
                .ok_or_else(|| bad(format!("expected {} indices followed by re, im", k)))?;
            let mut idx = Vec::with_capacity(k);
            for v in &a[..k] {
                let i = v.as_u64().ok_or_else(|| bad(format!("index {v} is not a non-negative integer")))? as usize;
                if i >= self.dim {
                    return Err(bad(format!("index {i} out of range for dimension {}", self.dim)));
                }
                idx.push(i);
            }
            let re = read_number(&a[k]).ok_or_else(|| bad("real part is not a number".into()))?;
            let im = read_number(&a[k + 1]).ok_or_else(|| bad("imaginary part is not a number".into()))?;
            if !seen.insert(idx.clone()) {
                return Err(bad(format!("duplicate entry {idx:?}")));
            }
            out.push((idx, C64::new(re, im)));
        }
        Ok(out)
    }

    fn tensor(&self, name: &str) -> Result<Tensor3, SerializeError> {
        let d = self.dim;
        let e = self.entries(name, 3)?;
        Ok(Tensor3::from_triplets([d, d, d], e.into_iter().map(|(i, v)| (i[0], i[1], i[2], v)), 0.0))
    }

    fn matrix(&self, name: &str) -> Result<SparseMatrix, SerializeError> {
        let d = self.dim;
        let e = self.entries(name, 2)?;
        Ok(SparseMatrix::from_triplets(d, d, e.into_iter().map(|(i, v)| (i[0], i[1], v)), 0.0))
    }

    fn layout(&self) -> Result<Option<BlockLayout>, SerializeError> {
        let v = self.field("layout")?;
        if v.is_null() {
            return Ok(None);
        }
        let bad = |message: &str| SerializeError::Field {
            field: "layout".into(),
            message: message.into(),
        };
        let sizes = v
            .get("block_sizes")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing block_sizes"))?
            .iter()
            .map(|s| s.as_u64().map(|s| s as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("block sizes must be non-negative integers"))?;
        let entries = v
            .get("entries")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing entries"))?
            .iter()
            .map(|e| {
                let a = e.as_array().filter(|a| a.len() == 3)?;
                let u = |i: usize| a[i].as_u64().map(|x| x as usize);
                Some((u(0)?, u(1)?, u(2)?))
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("entries must be [block, row, col] triples"))?;
        Ok(Some(BlockLayout {
            block_sizes: sizes,
            entries,
        }))
    }
}

/// Parses a file written by `dump`.
pub fn load(text: &str) -> Result<WeakHopfAlgebra, SerializeError> {
    let root: Value = serde_json::from_str(text).map_err(|e| SerializeError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let obj = root.as_object().ok_or_else(|| SerializeError::Field {
        field: "<root>".into(),
        message: "expected an object".into(),
    })?;
    let pre = Reader { obj, dim: 0 };
    let format = pre.field("format")?;
    if format.as_str() != Some(FORMAT) {
        return Err(SerializeError::Field {
            field: "format".into(),
            message: format!("expected {FORMAT:?}, found {format}"),
        });
    }
    let dim = pre.field("dim")?.as_u64().ok_or_else(|| SerializeError::Field {
        field: "dim".into(),
        message: "expected a non-negative integer".into(),
    })? as usize;
    let r = Reader { obj, dim };
    let labels = r
        .array("labels")?
        .iter()
        .map(|l| l.as_str().map(String::from))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| SerializeError::Field {
            field: "labels".into(),
            message: "expected strings".into(),
        })?;
    if labels.len() != dim {
        return Err(SerializeError::Field {
            field: "labels".into(),
            message: format!("{} labels for dimension {dim}", labels.len()),
        });
    }
    let unit = Vector::from_entries(dim, r.entries("unit", 1)?.into_iter().map(|(i, c)| (i[0], c)), 0.0);
    let mut counit = vec![ZERO; dim];
    for (i, c) in r.entries("counit", 1)? {
        counit[i[0]] = c;
    }
    let w = WeakHopfAlgebra::new(
        labels,
        r.tensor("multiplication")?,
        unit,
        r.tensor("coproduct")?,
        counit,
        r.matrix("antipode")?,
        r.matrix("star")?,
        r.layout()?,
    )?;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wha::tests::group_algebra;
    use proptest::prelude::*;

    #[test]
    fn group_algebra_round_trip() {
        let w = group_algebra(3);
        let text = dump(&w).unwrap();
        assert_eq!(load(&text).unwrap(), w);
        assert_eq!(dump(&load(&text).unwrap()).unwrap(), text);
    }

    #[test]
    fn missing_field_is_named() {
        let text = dump(&group_algebra(2)).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        let mut obj = v.as_object().unwrap().clone();
        obj.remove("coproduct");
        let err = load(&Value::Object(obj).to_string()).unwrap_err();
        assert!(err.to_string().contains("`coproduct`"), "{err}");
    }

    #[test]
    fn bad_entry_is_located() {
        let text = dump(&group_algebra(2)).unwrap();
        let broken = text.replacen("\"antipode\": [\n    [0, 0,", "\"antipode\": [\n    [0, 9,", 1);
        assert_ne!(broken, text);
        let err = load(&broken).unwrap_err();
        assert!(matches!(err, SerializeError::Entry { ref field, entry: 0, .. } if field == "antipode"), "{err}");
    }

    #[test]
    fn syntax_error_has_line() {
        let err = load("{\n  \"format\": ,\n}").unwrap_err();
        assert!(matches!(err, SerializeError::Syntax { line: 2, .. }), "{err}");
    }

    proptest! {
        #[test]
        fn numbers_round_trip_exactly(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let v = number(x).unwrap();
            let back = read_number(&serde_json::from_str(&v.to_string()).unwrap()).unwrap();
            prop_assert_eq!(back.to_bits() == x.to_bits() || (x == 0.0 && back == 0.0), true);
        }
    }
}
