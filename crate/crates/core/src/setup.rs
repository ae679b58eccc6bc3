//! Workbook-level set-up risks: calculation settings, macros, hidden
//! structure, protection, advanced features and name usage.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::formula::{self, RefItem};
use crate::graph::DepGraph;
use crate::severity::Severity;
use crate::workbook::{CalcMode, Workbook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SetupKind {
    ManualRecalc,
    NoRecalcBeforeSave,
    IterationEnabled,
    MacrosPresent,
    HiddenSheet,
    HiddenRows,
    HiddenCols,
    NoProtection,
    AdvancedFeature,
    NamesInUse,
}

impl SetupKind {
    pub const ALL: [SetupKind; 10] = [
        SetupKind::ManualRecalc,
        SetupKind::NoRecalcBeforeSave,
        SetupKind::IterationEnabled,
        SetupKind::MacrosPresent,
        SetupKind::HiddenSheet,
        SetupKind::HiddenRows,
        SetupKind::HiddenCols,
        SetupKind::NoProtection,
        SetupKind::AdvancedFeature,
        SetupKind::NamesInUse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SetupKind::ManualRecalc => "MANUAL_RECALC",
            SetupKind::NoRecalcBeforeSave => "NO_RECALC_BEFORE_SAVE",
            SetupKind::IterationEnabled => "ITERATION_ENABLED",
            SetupKind::MacrosPresent => "MACROS_PRESENT",
            SetupKind::HiddenSheet => "HIDDEN_SHEET",
            SetupKind::HiddenRows => "HIDDEN_ROWS",
            SetupKind::HiddenCols => "HIDDEN_COLS",
            SetupKind::NoProtection => "NO_PROTECTION",
            SetupKind::AdvancedFeature => "ADVANCED_FEATURE",
            SetupKind::NamesInUse => "NAMES_IN_USE",
        }
    }
}

impl fmt::Display for SetupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupFinding {
    pub kind: SetupKind,
    pub severity: Severity,
    /// Sheet name for sheet-scoped findings; absent for workbook scope.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sheet: Option<String>,
    pub detail: String,
}

/// Severity per condition. `NAMES_IN_USE` is always informational and has no
/// entry here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetupSeverities {
    pub manual_recalc: Severity,
    pub manual_recalc_without_save_recalc: Severity,
    pub no_recalc_before_save: Severity,
    pub iteration_enabled: Severity,
    pub iteration_with_cycles: Severity,
    pub macro_project: Severity,
    pub user_defined_function: Severity,
    pub hidden_sheet: Severity,
    pub hidden_rows: Severity,
    pub hidden_cols: Severity,
    pub no_protection: Severity,
    pub advanced_feature: Severity,
}

impl Default for SetupSeverities {
    fn default() -> Self {
        SetupSeverities {
            manual_recalc: Severity::Medium,
            manual_recalc_without_save_recalc: Severity::High,
            no_recalc_before_save: Severity::High,
            iteration_enabled: Severity::Low,
            iteration_with_cycles: Severity::High,
            macro_project: Severity::High,
            user_defined_function: Severity::Medium,
            hidden_sheet: Severity::Medium,
            hidden_rows: Severity::Medium,
            hidden_cols: Severity::Medium,
            no_protection: Severity::Low,
            advanced_feature: Severity::Medium,
        }
    }
}

fn builtin_functions() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        include_str!("../data/functions.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// True when `name` is a standard worksheet function. Storage prefixes used
/// for newer functions are ignored.
pub fn is_builtin_function(name: &str) -> bool {
    let mut n = name;
    for prefix in ["_XLFN.", "_XLWS.", "_XLUDF."] {
        n = n.strip_prefix(prefix).unwrap_or(n);
    }
    builtin_functions().contains(n)
}

fn compress(items: &[u32], render: impl Fn(u32) -> String) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j + 1 < items.len() && items[j + 1] == items[j] + 1 {
            j += 1;
        }
        if i == j {
            parts.push(render(items[i]));
        } else {
            parts.push(format!("{}-{}", render(items[i]), render(items[j])));
        }
        i = j + 1;
    }
    parts.join(", ")
}

pub fn assess_setup(wb: &Workbook, g: &DepGraph, sev: &SetupSeverities) -> Vec<SetupFinding> {
    let mut out = Vec::new();
    let mut push = |kind, severity, sheet: Option<&str>, detail: String| {
        out.push(SetupFinding {
            kind,
            severity,
            sheet: sheet.map(str::to_string),
            detail,
        })
    };
    let s = &wb.settings;

    if s.calc_mode == CalcMode::Manual {
        if s.recalc_before_save {
            push(SetupKind::ManualRecalc, sev.manual_recalc, None, "manual calculation; recalculates before save".into());
        } else {
            push(
                SetupKind::ManualRecalc,
                sev.manual_recalc_without_save_recalc,
                None,
                "manual calculation".into(),
            );
            push(
                SetupKind::NoRecalcBeforeSave,
                sev.no_recalc_before_save,
                None,
                "manual calculation without recalculation before save".into(),
            );
        }
    }

    if s.iteration_enabled {
        let cycles = g.cycles(wb);
        if cycles.is_empty() {
            push(
                SetupKind::IterationEnabled,
                sev.iteration_enabled,
                None,
                format!("iteration enabled (max {}), no circular references", s.max_iterations),
            );
        } else {
            let first: Vec<String> = cycles[0]
                .iter()
                .map(|a| format!("{}!{}", wb.sheets()[a.sheet].name, a.a1()))
                .collect();
            push(
                SetupKind::IterationEnabled,
                sev.iteration_with_cycles,
                None,
                format!(
                    "iteration enabled (max {}) with {} circular reference group(s), first: {}",
                    s.max_iterations,
                    cycles.len(),
                    first.join(" ")
                ),
            );
        }
    }

    if wb.features.has_vba {
        push(SetupKind::MacrosPresent, sev.macro_project, None, "embedded macro project".into());
    }
    let mut udfs = BTreeSet::new();
    let mut uses_names = false;
    for (_, f) in wb.formula_cells() {
        let Some(ast) = f.ast() else { continue };
        for name in formula::functions_of(ast) {
            if !is_builtin_function(name) {
                udfs.insert(name.to_string());
            }
        }
        if !uses_names {
            uses_names = formula::refs_of(ast).iter().any(|r| matches!(r, RefItem::Name(_)));
        }
    }
    for name in udfs {
        push(
            SetupKind::MacrosPresent,
            sev.user_defined_function,
            None,
            format!("possible user-defined function {name}"),
        );
    }

    for sheet in wb.sheets().iter().filter(|s| s.hidden) {
        push(SetupKind::HiddenSheet, sev.hidden_sheet, Some(&sheet.name), format!("sheet {} is hidden", sheet.name));
    }
    for sheet in wb.sheets().iter().filter(|s| !s.hidden_rows.is_empty()) {
        let rows: Vec<u32> = sheet.hidden_rows.iter().copied().collect();
        push(
            SetupKind::HiddenRows,
            sev.hidden_rows,
            Some(&sheet.name),
            format!("hidden rows {}", compress(&rows, |r| r.to_string())),
        );
    }
    for sheet in wb.sheets().iter().filter(|s| !s.hidden_cols.is_empty()) {
        let cols: Vec<u32> = sheet.hidden_cols.iter().copied().collect();
        push(
            SetupKind::HiddenCols,
            sev.hidden_cols,
            Some(&sheet.name),
            format!("hidden columns {}", compress(&cols, crate::a1::col_to_letters)),
        );
    }
    for sheet in wb.sheets().iter().filter(|s| !s.protected) {
        let n = sheet.formula_count();
        if n > 0 {
            push(
                SetupKind::NoProtection,
                sev.no_protection,
                Some(&sheet.name),
                format!("unprotected sheet with {n} formula(s)"),
            );
        }
    }
    for (flag, label) in [
        (wb.features.has_pivot_tables, "pivot tables"),
        (wb.features.has_scenarios, "scenarios"),
        (wb.features.has_data_consolidation, "data consolidation"),
    ] {
        if flag {
            push(SetupKind::AdvancedFeature, sev.advanced_feature, None, label.into());
        }
    }
    if uses_names {
        push(
            SetupKind::NamesInUse,
            Severity::Info,
            None,
            format!("{} defined name(s); formulas refer to names", wb.defined_names().len()),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::workbook::load_canonical;

    fn run(doc: &str) -> Vec<SetupFinding> {
        let w = load_canonical(doc).unwrap();
        assess_setup(&w, &build_graph(&w), &SetupSeverities::default())
    }

    fn kinds(f: &[SetupFinding]) -> Vec<(SetupKind, Severity)> {
        f.iter().map(|f| (f.kind, f.severity)).collect()
    }

    #[test]
    fn clean_defaults() {
        let f = run(r#"{"format": 1, "sheets": [{"name": "S", "protected": true, "cells": {"A1": {"n": 1}, "B1": {"f": "=A1*2"}}}]}"#);
        assert!(f.is_empty(), "{f:?}");
    }

    #[test]
    fn manual_without_save_recalc() {
        let f = run(r#"{"format": 1, "settings": {"calc_mode": "manual", "recalc_before_save": false}, "sheets": []}"#);
        assert_eq!(
            kinds(&f),
            vec![(SetupKind::ManualRecalc, Severity::High), (SetupKind::NoRecalcBeforeSave, Severity::High)]
        );
        let f = run(r#"{"format": 1, "settings": {"calc_mode": "manual"}, "sheets": []}"#);
        assert_eq!(kinds(&f), vec![(SetupKind::ManualRecalc, Severity::Medium)]);
    }

    #[test]
    fn iteration_depends_on_cycles() {
        let f = run(r#"{"format": 1, "settings": {"iteration_enabled": true}, "sheets": []}"#);
        assert_eq!(kinds(&f), vec![(SetupKind::IterationEnabled, Severity::Low)]);
        let f = run(
            r#"{"format": 1, "settings": {"iteration_enabled": true}, "sheets": [{"name": "S", "protected": true,
                "cells": {"A1": {"f": "=B1+1"}, "B1": {"f": "=A1/2"}}}]}"#,
        );
        assert_eq!(kinds(&f), vec![(SetupKind::IterationEnabled, Severity::High)]);
        assert!(f[0].detail.contains("S!A1 S!B1"));
    }

    #[test]
    fn hidden_structure_and_protection() {
        let f = run(
            r#"{"format": 1, "sheets": [
                {"name": "Main", "hidden_rows": [3, 4, 5, 9], "hidden_cols": [2], "cells": {"A1": {"f": "=Rates!A1"}}},
                {"name": "Rates", "hidden": true, "protected": true, "cells": {"A1": {"n": 0.2}}}
            ]}"#,
        );
        assert_eq!(
            kinds(&f),
            vec![
                (SetupKind::HiddenSheet, Severity::Medium),
                (SetupKind::HiddenRows, Severity::Medium),
                (SetupKind::HiddenCols, Severity::Medium),
                (SetupKind::NoProtection, Severity::Low),
            ]
        );
        assert_eq!(f[0].sheet.as_deref(), Some("Rates"));
        assert_eq!(f[1].detail, "hidden rows 3-5, 9");
        assert_eq!(f[2].detail, "hidden columns B");
        assert_eq!(f[3].sheet.as_deref(), Some("Main"));
    }

    #[test]
    fn macros_features_and_names() {
        let f = run(
            r#"{"format": 1, "features": {"has_vba": true, "has_pivot_tables": true, "has_scenarios": true},
                "names": {"Rate": "S!$A$1"},
                "sheets": [{"name": "S", "protected": true, "cells": {
                    "A1": {"n": 0.1}, "B1": {"f": "=MYCALC(Rate)+_xlfn.XLOOKUP(1,A1:A2,A1:A2)+sum(A1)"}}}]}"#,
        );
        assert_eq!(
            kinds(&f),
            vec![
                (SetupKind::MacrosPresent, Severity::High),
                (SetupKind::MacrosPresent, Severity::Medium),
                (SetupKind::AdvancedFeature, Severity::Medium),
                (SetupKind::AdvancedFeature, Severity::Medium),
                (SetupKind::NamesInUse, Severity::Info),
            ]
        );
        assert_eq!(f[1].detail, "possible user-defined function MYCALC");
    }

    #[test]
    fn catalog_has_common_functions() {
        for name in ["SUM", "NPV", "VLOOKUP", "IF", "INDEX", "_xlfn.XLOOKUP", "_XLFN.CONCAT"] {
            assert!(is_builtin_function(&name.to_ascii_uppercase()), "{name}");
        }
        assert!(!is_builtin_function("MYCALC"));
    }
}
