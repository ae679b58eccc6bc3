//! The canonical workbook interchange format (`.sgwb`): a JSON document that is
//! easy to write by hand and diff. See `docs/canonical-format.md`.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::model::*;
use super::WorkbookError;
use crate::address::CellPos;
use crate::formula::{ErrorKind, MAX_COL, MAX_ROW};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    format: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    id: String,
    #[serde(default)]
    settings: WorkbookSettings,
    #[serde(default)]
    features: Features,
    #[serde(default)]
    names: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    external_links: Vec<String>,
    sheets: Vec<SheetDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SheetDoc {
    name: String,
    #[serde(default)]
    hidden: bool,
    #[serde(default)]
    protected: bool,
    #[serde(default)]
    hidden_rows: Vec<u32>,
    #[serde(default)]
    hidden_cols: Vec<u32>,
    #[serde(default)]
    cells: CellMap,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CellDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<serde_json::Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cached: Option<Box<CellDoc>>,
}

/// Cells keyed by A1 address, kept in document order on read and written
/// row-major.
#[derive(Default)]
struct CellMap(Vec<(String, CellDoc)>);

impl Serialize for CellMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for CellMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = CellMap;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from A1 addresses to cell objects")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<CellMap, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, CellDoc>()? {
                    out.push((k, v));
                }
                Ok(CellMap(out))
            }
        }
        deserializer.deserialize_map(V)
    }
}

fn schema_err(path: impl Into<String>, message: impl Into<String>) -> WorkbookError {
    WorkbookError::Canonical {
        path: path.into(),
        message: message.into(),
    }
}

/// Parse a canonical document.
pub fn load_canonical(text: &str) -> Result<Workbook, WorkbookError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: Doc = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema_err(path, e.into_inner().to_string())
    })?;
    if doc.format != FORMAT_VERSION {
        return Err(schema_err(
            "format",
            format!("unsupported format version {} (expected {FORMAT_VERSION})", doc.format),
        ));
    }
    if doc.settings.iteration_enabled && doc.settings.max_iterations < 1 {
        return Err(schema_err(
            "settings.max_iterations",
            "must be at least 1 when iteration is enabled",
        ));
    }
    for name in doc.names.keys() {
        if !crate::formula::is_name_token(name) {
            return Err(schema_err(
                format!("names.{name}"),
                "not a valid defined name (cell references and booleans are reserved)",
            ));
        }
    }
    let mut sheets = Vec::with_capacity(doc.sheets.len());
    for (i, sd) in doc.sheets.into_iter().enumerate() {
        let base = format!("sheets[{i}]");
        let mut sheet = Sheet::new(sd.name);
        sheet.hidden = sd.hidden;
        sheet.protected = sd.protected;
        for r in sd.hidden_rows {
            if r == 0 || r > MAX_ROW {
                return Err(schema_err(format!("{base}.hidden_rows"), format!("row {r} out of range")));
            }
            sheet.hidden_rows.insert(r);
        }
        for c in sd.hidden_cols {
            if c == 0 || c > MAX_COL {
                return Err(schema_err(format!("{base}.hidden_cols"), format!("column {c} out of range")));
            }
            sheet.hidden_cols.insert(c);
        }
        for (key, cd) in sd.cells.0 {
            let path = format!("{base}.cells.{key}");
            let pos = CellPos::parse(&key)
                .ok_or_else(|| schema_err(&path, "cell key must be a plain A1 address"))?;
            if sheet.get(pos).is_some() {
                return Err(schema_err(&path, "duplicate cell"));
            }
            sheet.set(pos, cell_from_doc(cd, &path)?);
        }
        sheets.push(sheet);
    }
    Workbook::from_parts(
        doc.id,
        sheets,
        doc.names,
        doc.external_links,
        doc.settings,
        doc.features,
    )
    .map_err(|e| match e {
        WorkbookError::DuplicateSheet(n) => schema_err("sheets", format!("duplicate sheet name {n:?}")),
        other => other,
    })
}

fn scalar_from_doc(cd: &CellDoc, path: &str) -> Result<Scalar, WorkbookError> {
    let set = [cd.n.is_some(), cd.s.is_some(), cd.b.is_some(), cd.e.is_some()]
        .iter()
        .filter(|x| **x)
        .count();
    if set > 1 {
        return Err(schema_err(path, "a cell holds exactly one of n, s, b, e, f"));
    }
    if let Some(n) = &cd.n {
        let v = n
            .as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| schema_err(format!("{path}.n"), "not a finite number"))?;
        return Ok(Scalar::Number(v));
    }
    if let Some(s) = &cd.s {
        return Ok(Scalar::Text(s.clone()));
    }
    if let Some(b) = cd.b {
        return Ok(Scalar::Bool(b));
    }
    if let Some(e) = &cd.e {
        let k: ErrorKind = e
            .parse()
            .map_err(|_| schema_err(format!("{path}.e"), format!("unknown error value {e:?}")))?;
        return Ok(Scalar::Error(k));
    }
    Ok(Scalar::Blank)
}

fn cell_from_doc(cd: CellDoc, path: &str) -> Result<CellValue, WorkbookError> {
    match &cd.f {
        Some(src) => {
            if cd.n.is_some() || cd.s.is_some() || cd.b.is_some() || cd.e.is_some() {
                return Err(schema_err(path, "a formula cell keeps its value under `cached`"));
            }
            let cached = match &cd.cached {
                Some(c) => {
                    let cpath = format!("{path}.cached");
                    if c.f.is_some() || c.cached.is_some() {
                        return Err(schema_err(cpath, "a cached value cannot be a formula"));
                    }
                    Some(scalar_from_doc(c, &cpath)?)
                }
                None => None,
            };
            Ok(CellValue::Formula(Box::new(Formula::new(src, cached))))
        }
        None => {
            if cd.cached.is_some() {
                return Err(schema_err(format!("{path}.cached"), "only formula cells have a cached value"));
            }
            Ok(scalar_from_doc(&cd, path)?.into())
        }
    }
}

fn number_doc(v: f64) -> serde_json::Number {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        serde_json::Number::from(v as i64)
    } else {
        serde_json::Number::from_f64(v).expect("finite")
    }
}

fn scalar_doc(s: &Scalar) -> CellDoc {
    let mut d = CellDoc::default();
    match s {
        Scalar::Blank => {}
        Scalar::Number(v) => d.n = Some(number_doc(*v)),
        Scalar::Text(t) => d.s = Some(t.clone()),
        Scalar::Bool(b) => d.b = Some(*b),
        Scalar::Error(k) => d.e = Some(k.as_str().to_string()),
    }
    d
}

fn cell_doc(v: &CellValue) -> CellDoc {
    match v {
        CellValue::Blank => CellDoc::default(),
        CellValue::Number(n) => scalar_doc(&Scalar::Number(*n)),
        CellValue::Text(t) => scalar_doc(&Scalar::Text(t.clone())),
        CellValue::Bool(b) => scalar_doc(&Scalar::Bool(*b)),
        CellValue::Error(k) => scalar_doc(&Scalar::Error(*k)),
        CellValue::Formula(f) => CellDoc {
            f: Some(f.source.clone()),
            cached: f.cached.as_ref().map(|c| Box::new(scalar_doc(c))),
            ..Default::default()
        },
    }
}

/// Deterministic rendering: fixed key order, sheets in workbook order, cells row-major.
pub fn save_canonical(wb: &Workbook) -> String {
    let doc = Doc {
        format: FORMAT_VERSION,
        id: wb.id.clone(),
        settings: wb.settings.clone(),
        features: wb.features,
        names: wb.defined_names().clone(),
        external_links: wb.link_records().to_vec(),
        sheets: wb
            .sheets()
            .iter()
            .map(|s| SheetDoc {
                name: s.name.clone(),
                hidden: s.hidden,
                protected: s.protected,
                hidden_rows: s.hidden_rows.iter().copied().collect(),
                hidden_cols: s.hidden_cols.iter().copied().collect(),
                cells: CellMap(s.cells().map(|(p, v)| (p.to_string(), cell_doc(v))).collect()),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("serializable");
    out.push('\n');
    out
}
