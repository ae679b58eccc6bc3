//! Cell-level inspection rules.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::address::{CellAddress, CellPos};
use crate::formula::{self, ErrorKind, Expr, NormalizedFormula, PathStep, RefItem};
use crate::graph::{self, DepGraph, RangeNode, Target};
use crate::scoping::FormulaClasses;
use crate::severity::Severity;
use crate::workbook::{CellValue, Formula, Workbook};

macro_rules! rules {
    ($($variant:ident => $id:literal, $sev:ident;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum RuleId {
            $(#[serde(rename = $id)] $variant,)*
        }

        impl RuleId {
            pub const ALL: &'static [RuleId] = &[$(RuleId::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(RuleId::$variant => $id,)*
                }
            }

            pub fn default_severity(self) -> Severity {
                match self {
                    $(RuleId::$variant => Severity::$sev,)*
                }
            }
        }

        impl FromStr for RuleId {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim().to_ascii_uppercase().as_str() {
                    $($id => Ok(RuleId::$variant),)*
                    _ => Err(format!("unknown rule id {s:?}")),
                }
            }
        }
    };
}

rules! {
    ConstInFormula => "CONST_IN_FORMULA", Medium;
    AbsRef => "ABS_REF", Low;
    NamedRangeLookup => "NAMED_RANGE_LOOKUP", Info;
    BlockRef => "BLOCK_REF", Medium;
    NoPrecedent => "NO_PRECEDENT", Medium;
    TextNumber => "TEXT_NUMBER", High;
    BlankRef => "BLANK_REF", Medium;
    NoDependents => "NO_DEPENDENTS", Low;
    HiddenRef => "HIDDEN_REF", Medium;
    ErrorCell => "ERROR_CELL", High;
    ErrorRef => "ERROR_REF", High;
    ExternalLink => "EXTERNAL_LINK", Medium;
    HighRiskFunction => "HIGH_RISK_FUNCTION", Medium;
    PatternBreak => "PATTERN_BREAK", High;
    FormulaOverwrite => "FORMULA_OVERWRITE", High;
    UnusedInput => "UNUSED_INPUT", Low;
    UnparsedFormula => "UNPARSED_FORMULA", High;
}

impl RuleId {
    /// Rules that report a likely defect. The other two flag constructs that
    /// merit a look but are often deliberate.
    pub fn is_defect_rule(self) -> bool {
        !matches!(self, RuleId::AbsRef | RuleId::NamedRangeLookup)
    }

    pub fn defect_rules() -> impl Iterator<Item = RuleId> {
        RuleId::ALL.iter().copied().filter(|r| r.is_defect_rule())
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Structured detail backing a finding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    None,
    Literal { text: String, context: String },
    References { targets: Vec<String> },
    Range { range: String, rows: u32, cols: u32 },
    Function { name: String },
    Lookup { function: String, name: String },
    Value { value: String },
    Pattern { expected: String, found: String },
    Parse { error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: RuleId,
    pub severity: Severity,
    pub cell: CellAddress,
    pub message: String,
    pub evidence: Evidence,
}

fn default_positional() -> BTreeMap<String, Vec<usize>> {
    [
        ("VLOOKUP", vec![3, 4]),
        ("HLOOKUP", vec![3, 4]),
        ("INDEX", vec![2, 3]),
        ("MATCH", vec![3]),
        ("OFFSET", vec![2, 3, 4, 5]),
        ("ROUND", vec![2]),
        ("ROUNDUP", vec![2]),
        ("ROUNDDOWN", vec![2]),
        ("CHOOSE", vec![1]),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn names(list: &[&str]) -> BTreeSet<String> {
    list.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub enabled: BTreeSet<RuleId>,
    /// Literal values never reported as constants.
    pub constant_allowlist: Vec<f64>,
    /// Function arguments (1-based) whose literal value is positional rather
    /// than a business constant, e.g. the column index of a lookup.
    pub positional_arguments: BTreeMap<String, Vec<usize>>,
    pub high_risk_functions: BTreeSet<String>,
    pub lookup_functions: BTreeSet<String>,
    pub aggregation_functions: BTreeSet<String>,
    /// Ranges such as `Model!B20:J20` whose formulas are end results.
    pub output_ranges: Vec<String>,
    /// Defined names starting with one of these prefixes mark end results.
    pub output_name_prefixes: Vec<String>,
    /// Flanking neighbors that must share a copy class for a pattern break,
    /// split evenly between the two sides.
    pub pattern_neighbors: u32,
    pub severities: BTreeMap<RuleId, Severity>,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            enabled: RuleId::ALL.iter().copied().collect(),
            constant_allowlist: vec![0.0, 1.0, -1.0],
            positional_arguments: default_positional(),
            high_risk_functions: names(&[
                "NPV", "IRR", "XNPV", "XIRR", "VLOOKUP", "HLOOKUP", "LOOKUP", "INDIRECT", "OFFSET",
            ]),
            lookup_functions: names(&["VLOOKUP", "HLOOKUP", "LOOKUP", "INDEX", "MATCH"]),
            aggregation_functions: names(&["SUM", "AVERAGE", "COUNT", "MIN", "MAX", "PRODUCT"]),
            output_ranges: Vec::new(),
            output_name_prefixes: vec!["OUTPUT".into(), "RESULT".into()],
            pattern_neighbors: 2,
            severities: RuleId::ALL.iter().map(|r| (*r, r.default_severity())).collect(),
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.pattern_neighbors == 0 {
            return Err("pattern_neighbors must be at least 1".into());
        }
        if self.constant_allowlist.iter().any(|v| !v.is_finite()) {
            return Err("constant_allowlist entries must be finite".into());
        }
        for r in &self.output_ranges {
            parse_output_range(r).ok_or_else(|| format!("bad output range {r:?}"))?;
        }
        Ok(())
    }

    pub fn severity(&self, rule: RuleId) -> Severity {
        self.severities
            .get(&rule)
            .copied()
            .unwrap_or_else(|| rule.default_severity())
    }

    /// Keep only the listed rules enabled.
    pub fn restrict_to(&mut self, rules: &[RuleId]) {
        self.enabled.retain(|r| rules.contains(r));
    }
}

fn upper_set(set: &BTreeSet<String>) -> BTreeSet<String> {
    set.iter().map(|s| s.to_ascii_uppercase()).collect()
}

fn strip_storage_prefix(name: &str) -> &str {
    let mut n = name;
    for p in ["_XLFN.", "_XLWS."] {
        n = n.strip_prefix(p).unwrap_or(n);
    }
    n
}

/// (sheet name or None, top, left, bottom, right)
fn parse_output_range(text: &str) -> Option<(Option<String>, u32, u32, u32, u32)> {
    let e = formula::parse(&format!("={}", text.trim())).ok()?;
    match e {
        Expr::Cell(c) if c.workbook.is_none() => {
            Some((c.sheet, c.coord.row, c.coord.col, c.coord.row, c.coord.col))
        }
        Expr::Range(r) if r.workbook().is_none() => {
            let (t, l, b, rt) = r.bounds();
            Some((r.start.sheet.clone(), t, l, b, rt))
        }
        _ => None,
    }
}

fn target_text(wb: &Workbook, host_sheet: usize, t: &Target) -> String {
    let qualify = |sheet: usize, body: String| {
        if sheet == host_sheet {
            body
        } else {
            let name = &wb.sheets()[sheet].name;
            if formula::sheet_needs_quotes(name) {
                format!("'{}'!{body}", name.replace('\'', "''"))
            } else {
                format!("{name}!{body}")
            }
        }
    };
    match t {
        Target::Cell { cell } => qualify(cell.sheet, cell.a1()),
        Target::Range { range } => qualify(range.sheet, range.a1()),
        Target::External { workbook, sheet, reference } => match sheet {
            Some(s) => format!("[{workbook}]{s}!{reference}"),
            None => format!("[{workbook}]{reference}"),
        },
        Target::Dangling { text } => text.clone(),
    }
}

const MAX_LISTED: usize = 8;

fn listed(mut items: Vec<String>) -> Vec<String> {
    if items.len() > MAX_LISTED {
        let extra = items.len() - MAX_LISTED;
        items.truncate(MAX_LISTED);
        items.push(format!("+{extra} more"));
    }
    items
}

struct Ctx<'a> {
    wb: &'a Workbook,
    g: &'a DepGraph,
    cfg: &'a RuleConfig,
    high_risk: BTreeSet<String>,
    lookups: BTreeSet<String>,
    aggregations: BTreeSet<String>,
    outputs: Vec<RangeNode>,
    out: Vec<Finding>,
}

impl Ctx<'_> {
    fn on(&self, r: RuleId) -> bool {
        self.cfg.enabled.contains(&r)
    }

    fn emit(&mut self, rule: RuleId, cell: CellAddress, message: String, evidence: Evidence) {
        if self.on(rule) {
            self.out.push(Finding {
                rule_id: rule,
                severity: self.cfg.severity(rule),
                cell,
                message,
                evidence,
            });
        }
    }

    fn is_output(&self, a: CellAddress) -> bool {
        self.outputs.iter().any(|r| r.contains(a))
    }
}

/// Resolve configured output ranges and prefix-named ranges to rectangles.
fn output_nodes(wb: &Workbook, cfg: &RuleConfig) -> Vec<RangeNode> {
    let mut out = Vec::new();
    let mut add = |sheet: Option<String>, t, l, b, r| match sheet {
        Some(s) => {
            if let Some(i) = wb.sheet_index(&s) {
                out.push(RangeNode { sheet: i, top: t, left: l, bottom: b, right: r });
            }
        }
        None => {
            for i in 0..wb.sheets().len() {
                out.push(RangeNode { sheet: i, top: t, left: l, bottom: b, right: r });
            }
        }
    };
    for text in &cfg.output_ranges {
        if let Some((s, t, l, b, r)) = parse_output_range(text) {
            add(s, t, l, b, r);
        }
    }
    let prefixes: Vec<String> = cfg.output_name_prefixes.iter().map(|p| p.to_ascii_uppercase()).collect();
    for (name, text) in wb.defined_names() {
        let upper = name.to_ascii_uppercase();
        if !prefixes.iter().any(|p| upper.starts_with(p.as_str())) {
            continue;
        }
        if let Some((Some(s), t, l, b, r)) = parse_output_range(text.trim_start_matches('=')) {
            add(Some(s), t, l, b, r);
        }
    }
    out
}

/// Run every enabled rule. `classes` holds one partition per sheet, as built
/// by `scoping::formula_classes`.
pub fn inspect(wb: &Workbook, g: &DepGraph, classes: &[FormulaClasses], cfg: &RuleConfig) -> Vec<Finding> {
    let mut ctx = Ctx {
        wb,
        g,
        cfg,
        high_risk: upper_set(&cfg.high_risk_functions),
        lookups: upper_set(&cfg.lookup_functions),
        aggregations: upper_set(&cfg.aggregation_functions),
        outputs: output_nodes(wb, cfg),
        out: Vec::new(),
    };
    for (si, sheet) in wb.sheets().iter().enumerate() {
        let keys: HashMap<CellPos, &NormalizedFormula> = classes
            .get(si)
            .map(|c| {
                c.iter()
                    .flat_map(|(k, members)| members.iter().map(move |m| (m.pos(), k)))
                    .collect()
            })
            .unwrap_or_default();
        for (pos, v) in sheet.cells() {
            let addr = CellAddress::at(si, pos);
            value_rules(&mut ctx, addr, v);
            if let CellValue::Formula(f) = v {
                formula_rules(&mut ctx, addr, f);
            }
            pattern_rules(&mut ctx, si, pos, v, &keys);
        }
    }
    let mut out = ctx.out;
    out.sort_by(|a, b| {
        (a.cell, a.rule_id, &a.evidence).cmp(&(b.cell, b.rule_id, &b.evidence))
    });
    out.dedup_by(|a, b| a.cell == b.cell && a.rule_id == b.rule_id && a.evidence == b.evidence);
    out
}

fn value_rules(ctx: &mut Ctx<'_>, addr: CellAddress, v: &CellValue) {
    if let Some(k) = v.error_kind() {
        ctx.emit(
            RuleId::ErrorCell,
            addr,
            format!("cell evaluates to {k}"),
            Evidence::Value { value: k.to_string() },
        );
    }
    match v {
        CellValue::Text(t) if formula::is_numeric_text(t) => ctx.emit(
            RuleId::TextNumber,
            addr,
            format!("number stored as text: {t:?}"),
            Evidence::Value { value: t.clone() },
        ),
        CellValue::Number(_) if !ctx.g.has_dependents(addr) => ctx.emit(
            RuleId::UnusedInput,
            addr,
            "number not used by any formula".into(),
            Evidence::None,
        ),
        _ => {}
    }
}

fn formula_rules(ctx: &mut Ctx<'_>, addr: CellAddress, f: &Formula) {
    if !ctx.g.has_dependents(addr) && !ctx.is_output(addr) {
        ctx.emit(
            RuleId::NoDependents,
            addr,
            "formula result is not used and the cell is not a declared output".into(),
            Evidence::None,
        );
    }
    let ast = match &f.parsed {
        Ok(ast) => ast,
        Err(e) => {
            ctx.emit(
                RuleId::UnparsedFormula,
                addr,
                format!("formula not analysed: {e}"),
                Evidence::Parse { error: e.to_string() },
            );
            return;
        }
    };
    let refs = formula::refs_of(ast);

    if ctx.on(RuleId::ConstInFormula) {
        let mut seen = BTreeSet::new();
        for c in formula::constants_of(ast) {
            let effective = if c.path.last() == Some(&PathStep::Percent) {
                c.value / 100.0
            } else {
                c.value
            };
            if ctx.cfg.constant_allowlist.iter().any(|a| *a == effective || *a == c.value) {
                continue;
            }
            if let Some(PathStep::Arg { func, index }) = c.path.last() {
                let f = strip_storage_prefix(func);
                if ctx.cfg.positional_arguments.get(f).is_some_and(|ix| ix.contains(index)) {
                    continue;
                }
            }
            let shown = if c.path.last() == Some(&PathStep::Percent) {
                format!("{}%", c.text)
            } else {
                c.text.clone()
            };
            if seen.insert(c.text.clone()) {
                ctx.emit(
                    RuleId::ConstInFormula,
                    addr,
                    format!("hard-coded constant {shown}"),
                    Evidence::Literal { text: c.text.clone(), context: c.path_string() },
                );
            }
        }
    }

    if ctx.on(RuleId::AbsRef) {
        let mut abs = Vec::new();
        for r in &refs {
            match r {
                RefItem::Cell(c) if c.coord.has_absolute_axis() => abs.push(c.coord.to_string()),
                RefItem::Range(rr)
                    if rr.start.coord.has_absolute_axis() || rr.end.coord.has_absolute_axis() =>
                {
                    abs.push(format!("{}:{}", rr.start.coord, rr.end.coord))
                }
                _ => {}
            }
        }
        if !abs.is_empty() {
            ctx.emit(
                RuleId::AbsRef,
                addr,
                format!("absolute reference {}", abs[0]),
                Evidence::References { targets: listed(abs) },
            );
        }
    }

    if refs.is_empty() {
        ctx.emit(
            RuleId::NoPrecedent,
            addr,
            "formula refers to no cells or names".into(),
            Evidence::None,
        );
    }

    // Function-shaped rules.
    let mut calls = Vec::new();
    ast.walk(&mut |e| {
        if let Expr::Func { name, args } = e {
            calls.push((name.as_str(), args.as_slice()));
        }
    });
    let mut risky = BTreeSet::new();
    for (name, args) in calls {
        let bare = strip_storage_prefix(name);
        if ctx.high_risk.contains(bare) {
            risky.insert(bare.to_string());
        }
        if ctx.lookups.contains(bare) {
            for a in args {
                if let Expr::Name(n) = a.strip_parens() {
                    ctx.emit(
                        RuleId::NamedRangeLookup,
                        addr,
                        format!("{bare} looks up named range {}", n.name),
                        Evidence::Lookup { function: bare.to_string(), name: n.name.clone() },
                    );
                }
            }
        }
        if ctx.aggregations.contains(bare) {
            for a in args {
                if let Expr::Range(r) = a.strip_parens() {
                    if r.height() > 1 && r.width() > 1 {
                        let range = format!("{}:{}", r.start.coord, r.end.coord);
                        ctx.emit(
                            RuleId::BlockRef,
                            addr,
                            format!("{bare} over a {}x{} block {range}", r.height(), r.width()),
                            Evidence::Range { range, rows: r.height(), cols: r.width() },
                        );
                    }
                }
            }
        }
    }
    for name in risky {
        ctx.emit(
            RuleId::HighRiskFunction,
            addr,
            format!("uses {name}"),
            Evidence::Function { name },
        );
    }

    // Graph-shaped rules.
    let targets = ctx.g.precedents(addr);
    let blanks = ctx.g.blank_precedents(ctx.wb, addr);
    if !blanks.cells.is_empty() {
        let texts: Vec<String> = blanks
            .cells
            .iter()
            .map(|c| target_text(ctx.wb, addr.sheet, &Target::Cell { cell: *c }))
            .collect();
        ctx.emit(
            RuleId::BlankRef,
            addr,
            format!("refers to blank cell {}", texts[0]),
            Evidence::References { targets: listed(texts) },
        );
    }
    let hidden: Vec<String> = targets
        .iter()
        .filter(|t| graph::touches_hidden(ctx.wb, t))
        .map(|t| target_text(ctx.wb, addr.sheet, t))
        .collect();
    if !hidden.is_empty() {
        ctx.emit(
            RuleId::HiddenRef,
            addr,
            format!("refers to hidden cell {}", hidden[0]),
            Evidence::References { targets: listed(hidden) },
        );
    }
    let mut bad: Vec<String> = targets
        .iter()
        .filter(|t| matches!(t, Target::Dangling { .. }) || graph::target_has_error(ctx.wb, t))
        .map(|t| target_text(ctx.wb, addr.sheet, t))
        .collect();
    let mut has_ref_literal = false;
    ast.walk(&mut |e| {
        if matches!(e, Expr::Error(ErrorKind::Ref)) {
            has_ref_literal = true;
        }
    });
    if has_ref_literal {
        bad.push(ErrorKind::Ref.to_string());
    }
    if !bad.is_empty() {
        ctx.emit(
            RuleId::ErrorRef,
            addr,
            format!("refers to an error or unresolvable reference {}", bad[0]),
            Evidence::References { targets: listed(bad) },
        );
    }
    let external: BTreeSet<String> = targets
        .iter()
        .filter_map(|t| match t {
            Target::External { workbook, .. } => Some(workbook.clone()),
            _ => None,
        })
        .collect();
    if !external.is_empty() {
        let list: Vec<String> = external.into_iter().collect();
        ctx.emit(
            RuleId::ExternalLink,
            addr,
            format!("links to workbook {}", list[0]),
            Evidence::References { targets: listed(list) },
        );
    }
}

fn pattern_rules(
    ctx: &mut Ctx<'_>,
    sheet: usize,
    pos: CellPos,
    v: &CellValue,
    keys: &HashMap<CellPos, &NormalizedFormula>,
) {
    let overwrite = matches!(v, CellValue::Number(_));
    if !overwrite && v.as_formula().is_none() {
        return;
    }
    if !(ctx.on(RuleId::PatternBreak) || ctx.on(RuleId::FormulaOverwrite)) {
        return;
    }
    let per_side = i64::from(ctx.cfg.pattern_neighbors.div_ceil(2));
    let own = keys.get(&pos).copied();
    let flank = |dr: i64, dc: i64| -> Option<&NormalizedFormula> {
        let mut class: Option<&NormalizedFormula> = None;
        for step in 1..=per_side {
            for sign in [-1, 1] {
                let p = pos.offset(dr * step * sign, dc * step * sign)?;
                let k = *keys.get(&p)?;
                match class {
                    None => class = Some(k),
                    Some(c) if c == k => {}
                    Some(_) => return None,
                }
            }
        }
        class
    };
    for (dr, dc) in [(1, 0), (0, 1)] {
        let Some(k) = flank(dr, dc) else { continue };
        if own == Some(k) {
            continue;
        }
        let addr = CellAddress::at(sheet, pos);
        let direction = if dr == 1 { "column" } else { "row" };
        if overwrite {
            let CellValue::Number(n) = v else { unreachable!() };
            ctx.emit(
                RuleId::FormulaOverwrite,
                addr,
                format!("number {n} interrupts copied formulas along the {direction}"),
                Evidence::Pattern { expected: k.to_string(), found: format!("number {n}") },
            );
        } else {
            let found = own.map(|o| o.to_string()).unwrap_or_default();
            ctx.emit(
                RuleId::PatternBreak,
                addr,
                format!("formula differs from the copies around it along the {direction}"),
                Evidence::Pattern { expected: k.to_string(), found },
            );
        }
        return;
    }
}
