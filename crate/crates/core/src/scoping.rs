//! Size and complexity measures, copy classes, effort estimates and
//! sheet-to-sheet comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::address::{CellAddress, CellPos};
use crate::formula::{self, NormalizedFormula};
use crate::graph::DepGraph;
use crate::workbook::{CellValue, Formula, Workbook};

/// Copy-class key of a formula at `host`.
pub fn formula_key(f: &Formula, host: CellPos) -> NormalizedFormula {
    match f.ast() {
        Some(ast) => formula::normalize(ast, host),
        None => NormalizedFormula::raw(&f.source, host),
    }
}

pub type FormulaClasses = BTreeMap<NormalizedFormula, Vec<CellAddress>>;

/// Partition the formulas of one sheet into copy classes. Members are listed
/// row-major; the first member of a class is its original.
pub fn formula_classes(wb: &Workbook, sheet: usize) -> FormulaClasses {
    let mut out: FormulaClasses = BTreeMap::new();
    if let Some(s) = wb.sheet(sheet) {
        for (pos, v) in s.cells() {
            if let Some(f) = v.as_formula() {
                out.entry(formula_key(f, pos))
                    .or_default()
                    .push(CellAddress::at(sheet, pos));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetMetrics {
    pub formula_count: u64,
    pub number_count: u64,
    pub label_count: u64,
    pub boolean_count: u64,
    pub error_count: u64,
    pub inter_sheet_link_count: u64,
    pub external_ref_count: u64,
    pub unique_formula_count: u64,
    pub original_formula_count: u64,
    pub copy_count: u64,
}

impl SheetMetrics {
    fn add(&mut self, o: &SheetMetrics) {
        self.formula_count += o.formula_count;
        self.number_count += o.number_count;
        self.label_count += o.label_count;
        self.boolean_count += o.boolean_count;
        self.error_count += o.error_count;
        self.inter_sheet_link_count += o.inter_sheet_link_count;
        self.external_ref_count += o.external_ref_count;
        self.unique_formula_count += o.unique_formula_count;
        self.original_formula_count += o.original_formula_count;
        self.copy_count += o.copy_count;
    }
}

/// Counts for one sheet.
///
/// Numbers are stored numeric inputs; labels are text cells that do not look
/// numeric; booleans are stored literals; errors include cached formula
/// results. Link counts are distinct (formula cell, target) pairs.
pub fn sheet_metrics(wb: &Workbook, sheet: usize, g: &DepGraph) -> SheetMetrics {
    let mut m = SheetMetrics::default();
    let Some(s) = wb.sheet(sheet) else { return m };
    for (_, v) in s.cells() {
        match v {
            CellValue::Formula(_) => m.formula_count += 1,
            CellValue::Number(_) => m.number_count += 1,
            CellValue::Text(t) if !formula::is_numeric_text(t) => m.label_count += 1,
            CellValue::Bool(_) => m.boolean_count += 1,
            _ => {}
        }
        if v.error_kind().is_some() {
            m.error_count += 1;
        }
    }
    for members in formula_classes(wb, sheet).values() {
        if members.len() == 1 {
            m.unique_formula_count += 1;
        } else {
            m.original_formula_count += 1;
            m.copy_count += members.len() as u64 - 1;
        }
    }
    let links = g.cross_links();
    m.inter_sheet_link_count = links.inter_sheet.iter().filter(|(a, _)| a.sheet == sheet).count() as u64;
    m.external_ref_count = links.external.iter().filter(|(a, _)| a.sheet == sheet).count() as u64;
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSheetMetrics {
    pub sheet: String,
    #[serde(flatten)]
    pub metrics: SheetMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkbookMetrics {
    pub sheet_count: u64,
    pub sheets: Vec<NamedSheetMetrics>,
    pub totals: SheetMetrics,
    pub external_workbooks: Vec<String>,
}

pub fn workbook_metrics(wb: &Workbook, g: &DepGraph) -> WorkbookMetrics {
    let mut totals = SheetMetrics::default();
    let sheets = wb
        .sheets()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let metrics = sheet_metrics(wb, i, g);
            totals.add(&metrics);
            NamedSheetMetrics {
                sheet: s.name.clone(),
                metrics,
            }
        })
        .collect();
    WorkbookMetrics {
        sheet_count: wb.sheets().len() as u64,
        sheets,
        totals,
        external_workbooks: wb.external_targets().to_vec(),
    }
}

/// Minutes per counted item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffortCoefficients {
    pub unique: f64,
    pub original: f64,
    pub copy: f64,
    pub external_ref: f64,
    pub sheet: f64,
}

impl Default for EffortCoefficients {
    fn default() -> Self {
        EffortCoefficients {
            unique: 3.0,
            original: 4.0,
            copy: 0.25,
            external_ref: 5.0,
            sheet: 10.0,
        }
    }
}

impl EffortCoefficients {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("unique", self.unique),
            ("original", self.original),
            ("copy", self.copy),
            ("external_ref", self.external_ref),
            ("sheet", self.sheet),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("effort coefficient {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortEstimate {
    pub minutes: f64,
    pub breakdown: BTreeMap<String, f64>,
    pub coefficients: EffortCoefficients,
}

pub fn estimate_effort(m: &WorkbookMetrics, k: &EffortCoefficients) -> EffortEstimate {
    let t = &m.totals;
    let breakdown: BTreeMap<String, f64> = [
        ("unique", k.unique * t.unique_formula_count as f64),
        ("original", k.original * t.original_formula_count as f64),
        ("copy", k.copy * t.copy_count as f64),
        ("external_ref", k.external_ref * t.external_ref_count as f64),
        ("sheet", k.sheet * m.sheet_count as f64),
    ]
    .into_iter()
    .map(|(n, v)| (n.to_string(), v))
    .collect();
    EffortEstimate {
        minutes: breakdown.values().sum(),
        breakdown,
        coefficients: *k,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DivergenceKind {
    ClassMismatch,
    PresentOnlyInA,
    PresentOnlyInB,
    ValueTypeMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub cell: CellPos,
    pub kind: DivergenceKind,
}

/// Cell-by-cell comparison of two sheets, row-major. Formula cells are compared
/// by copy-class key, other cells by value type only.
pub fn compare_sheets(wb: &Workbook, a: usize, b: usize) -> Vec<Divergence> {
    let (Some(sa), Some(sb)) = (wb.sheet(a), wb.sheet(b)) else {
        return Vec::new();
    };
    let mut positions: Vec<CellPos> = sa.cells().map(|(p, _)| p).chain(sb.cells().map(|(p, _)| p)).collect();
    positions.sort_unstable();
    positions.dedup();
    let mut out = Vec::new();
    for pos in positions {
        let kind = match (sa.get(pos), sb.get(pos)) {
            (Some(_), None) => Some(DivergenceKind::PresentOnlyInA),
            (None, Some(_)) => Some(DivergenceKind::PresentOnlyInB),
            (Some(CellValue::Formula(fa)), Some(CellValue::Formula(fb))) => {
                (formula_key(fa, pos) != formula_key(fb, pos)).then_some(DivergenceKind::ClassMismatch)
            }
            (Some(va), Some(vb)) => {
                (va.type_name() != vb.type_name()).then_some(DivergenceKind::ValueTypeMismatch)
            }
            (None, None) => None,
        };
        if let Some(kind) = kind {
            out.push(Divergence { cell: pos, kind });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::workbook::load_canonical;

    fn one_sheet(cells: &str) -> Workbook {
        load_canonical(&format!(
            r#"{{"format": 1, "sheets": [{{"name": "S", "cells": {{{cells}}}}}, {{"name": "T"}}]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn copied_column_is_one_class() {
        let w = one_sheet(r#""B1": {"f": "=A1"}, "B2": {"f": "=A2"}, "B3": {"f": "=A3"}"#);
        let c = formula_classes(&w, 0);
        assert_eq!(c.len(), 1);
        let (k, members) = c.iter().next().unwrap();
        assert_eq!(k.as_str(), "R[0]C[-1]");
        assert_eq!(members[0].a1(), "B1");
        assert_eq!(members.len(), 3);
    }

    #[test]
    fn census() {
        let w = one_sheet(
            r#""B1": {"f": "=A1*2"}, "B2": {"f": "=A2*2"}, "B3": {"f": "=A3*2"},
               "C1": {"f": "=SUM(B1:B3)"}, "C2": {"f": "=T!A1"},
               "A1": {"n": 1}, "A2": {"n": 2}, "A3": {"n": 3}, "D1": {"n": 4},
               "E1": {"s": "Revenue"}, "E2": {"s": "Cost"}, "E3": {"s": "1234"}"#,
        );
        let g = build_graph(&w);
        let m = sheet_metrics(&w, 0, &g);
        assert_eq!(m.formula_count, 5);
        assert_eq!(m.unique_formula_count, 2);
        assert_eq!(m.original_formula_count, 1);
        assert_eq!(m.copy_count, 2);
        assert_eq!(m.number_count, 4);
        assert_eq!(m.label_count, 2);
        assert_eq!(m.inter_sheet_link_count, 1);
        assert_eq!(sheet_metrics(&w, 1, &g), SheetMetrics::default());
    }

    #[test]
    fn unparsed_formulas_are_singletons() {
        let w = one_sheet(r#""A1": {"f": "={1,2}"}, "A2": {"f": "={1,2}"}"#);
        assert_eq!(formula_classes(&w, 0).len(), 2);
    }

    #[test]
    fn effort_arithmetic() {
        let mut m = WorkbookMetrics {
            sheet_count: 0,
            sheets: vec![],
            totals: SheetMetrics::default(),
            external_workbooks: vec![],
        };
        let k = EffortCoefficients::default();
        assert_eq!(estimate_effort(&m, &k).minutes, 0.0);
        m.sheet_count = 1;
        m.totals.unique_formula_count = 2;
        m.totals.original_formula_count = 1;
        m.totals.copy_count = 2;
        let e = estimate_effort(&m, &k);
        assert_eq!(e.minutes, 20.5);
        assert_eq!(e.breakdown.values().sum::<f64>(), e.minutes);
        let mut doubled = m.clone();
        doubled.totals.unique_formula_count *= 2;
        doubled.totals.original_formula_count *= 2;
        doubled.totals.copy_count *= 2;
        assert_eq!(estimate_effort(&doubled, &k).minutes - 10.0, 2.0 * (e.minutes - 10.0));
    }

    #[test]
    fn coefficients_must_be_positive() {
        assert!(EffortCoefficients::default().validate().is_ok());
        let bad = EffortCoefficients { copy: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn compare() {
        let w = load_canonical(
            r#"{"format": 1, "sheets": [
                {"name": "A", "cells": {"A1": {"n": 1}, "B1": {"f": "=A1*2"}, "B2": {"f": "=A2*2"}}},
                {"name": "B", "cells": {"A1": {"n": 1}, "B1": {"f": "=A1*2"}, "B2": {"n": 7}, "C9": {"s": "x"}}},
                {"name": "C", "cells": {"A1": {"n": 5}, "B1": {"f": "=A1*3"}, "B2": {"f": "=A2*2"}}}
            ]}"#,
        )
        .unwrap();
        assert!(compare_sheets(&w, 0, 0).is_empty());
        let d = compare_sheets(&w, 0, 1);
        assert_eq!(
            d,
            vec![
                Divergence { cell: CellPos::new(2, 2), kind: DivergenceKind::ValueTypeMismatch },
                Divergence { cell: CellPos::new(9, 3), kind: DivergenceKind::PresentOnlyInB },
            ]
        );
        let back = compare_sheets(&w, 1, 0);
        assert_eq!(back[1].kind, DivergenceKind::PresentOnlyInA);
        assert_eq!(
            compare_sheets(&w, 0, 2),
            vec![Divergence { cell: CellPos::new(1, 2), kind: DivergenceKind::ClassMismatch }]
        );
    }
}
