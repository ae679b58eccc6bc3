//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rayon::prelude::*;
use serde_json::{json, Value};
use sheetgate::config::ConfigBundle;
use sheetgate::corpus::{generate, CleanPattern, DefectRequest, SeedSpec};
use sheetgate::formula::{
    self, normalize, parse, refs_of, render, shift, BinaryOp, CellRef, Expr, NameRef, RangeRef, RefCoord, RefItem,
    UnaryOp,
};
use sheetgate::gate::{
    default_questionnaire, run_gates, score_impact, score_likelihood, Answer, AnswerSet, Exposure, GateThresholds,
    ImpactAssessment, ImpactBand, ImpactThresholds, Questionnaire, Stage, Verdict,
};
use sheetgate::graph::build_graph;
use sheetgate::inspection::{inspect, Evidence, Finding, RuleConfig, RuleId};
use sheetgate::pipeline::{analyse, full_report, inspect_report, scope_report};
use sheetgate::report::to_machine;
use sheetgate::scoping::{formula_classes, sheet_metrics, SheetMetrics};
use sheetgate::setup::SetupKind;
use sheetgate::workbook::{load_canonical, load_path, CellValue, Scalar, Workbook};
use sheetgate::CellPos;

type Outcome = Result<String, String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn findings(wb: &Workbook) -> Vec<Finding> {
    let g = build_graph(wb);
    let classes: Vec<_> = (0..wb.sheets().len()).map(|i| formula_classes(wb, i)).collect();
    inspect(wb, &g, &classes, &RuleConfig::default())
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

// ---------------------------------------------------------------- 1

fn catalog_ids(section: &str) -> Vec<String> {
    let text = fs::read_to_string(root().join("docs/rule-catalog.md")).expect("catalog document");
    let mut current = String::new();
    let mut out = Vec::new();
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("## ") {
            current = h.trim().to_string();
            continue;
        }
        let cells: Vec<&str> = line.trim().trim_matches('|').split('|').map(str::trim).collect();
        if current == section && line.starts_with('|') && cells.len() == 3 && cells[1] != "id" && !cells[1].starts_with("---") {
            out.push(cells[1].to_string());
        }
    }
    out
}

fn catalog_coverage() -> Outcome {
    let rules = catalog_ids("Inspection rules");
    let setup = catalog_ids("Set-up checks");
    let implemented_rules: BTreeSet<String> = RuleId::ALL.iter().map(|r| r.as_str().to_string()).collect();
    let implemented_setup: BTreeSet<String> = SetupKind::ALL
        .iter()
        .map(|k| serde_json::to_value(k).unwrap().as_str().unwrap().to_string())
        .collect();
    for (listed, implemented, what) in [(&rules, &implemented_rules, "rule"), (&setup, &implemented_setup, "set-up")] {
        let unique: BTreeSet<String> = listed.iter().cloned().collect();
        ensure(unique.len() == listed.len(), || format!("{what} id mapped twice"))?;
        let missing: Vec<_> = implemented.difference(&unique).collect();
        let extra: Vec<_> = unique.difference(implemented).collect();
        ensure(missing.is_empty() && extra.is_empty(), || {
            format!("{what} table differs: unmapped {missing:?}, unknown {extra:?}")
        })?;
    }
    Ok(format!("{} rule rows, {} set-up rows, bijective", rules.len(), setup.len()))
}

// ---------------------------------------------------------------- 2, 3

fn seeded_spec(seed: u64, defects: Vec<DefectRequest>) -> SeedSpec {
    SeedSpec {
        rng_seed: seed,
        id: None,
        rows: 14,
        cols: 14,
        blocks: 4,
        clean_pattern: if seed % 2 == 0 { CleanPattern::Chain } else { CleanPattern::Ratio },
        defects,
    }
}

fn seeded_recall() -> Outcome {
    let start = Instant::now();
    let rules: Vec<RuleId> = RuleId::defect_rules().collect();
    ensure(rules.len() == 15, || format!("{} defect-capable rules", rules.len()))?;
    let seeds: Vec<u64> = (0..24).collect();
    let per_seed: Vec<Result<(usize, Vec<String>, BTreeMap<RuleId, usize>), String>> = seeds
        .par_iter()
        .map(|&seed| {
            let defects = rules.iter().map(|r| DefectRequest { rule_id: *r, count: 1 }).collect();
            let g = generate(&seeded_spec(seed, defects)).map_err(|e| format!("seed {seed}: {e}"))?;
            let wb = load_canonical(&g.canonical).map_err(|e| format!("seed {seed}: {e}"))?;
            let got: BTreeSet<(RuleId, usize, CellPos)> =
                findings(&wb).iter().map(|f| (f.rule_id, f.cell.sheet, f.cell.pos())).collect();
            let mut missed = Vec::new();
            let mut per_rule = BTreeMap::new();
            for d in &g.truth.defects {
                *per_rule.entry(d.rule_id).or_insert(0) += 1;
                let sheet = wb.sheet_index(&d.sheet).expect("planted sheet exists");
                if !got.contains(&(d.rule_id, sheet, d.cell)) {
                    missed.push(format!("seed {seed} {} {}!{}", d.rule_id, d.sheet, d.cell));
                }
            }
            Ok((g.truth.defects.len(), missed, per_rule))
        })
        .collect();
    let mut planted = 0;
    let mut missed = Vec::new();
    let mut per_rule: BTreeMap<RuleId, usize> = BTreeMap::new();
    for r in per_seed {
        let (n, m, pr) = r?;
        planted += n;
        missed.extend(m);
        for (k, v) in pr {
            *per_rule.entry(k).or_insert(0) += v;
        }
    }
    let elapsed = start.elapsed();
    ensure(planted >= 200, || format!("only {planted} planted"))?;
    ensure(per_rule.len() == 15 && per_rule.values().all(|&n| n >= 10), || format!("per-rule plants {per_rule:?}"))?;
    ensure(missed.is_empty(), || format!("recall {}/{planted}; missed {:?}", planted - missed.len(), missed))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "{planted} plants over {} seeds, min {} per rule, recall 1.0, {elapsed:.1?}",
        seeds.len(),
        per_rule.values().min().unwrap()
    ))
}

fn clean_precision() -> Outcome {
    let seeds: Vec<u64> = (100..124).collect();
    let bad: Vec<String> = seeds
        .par_iter()
        .flat_map(|&seed| {
            let spec = SeedSpec {
                rows: 20 + (seed % 7) as u32,
                cols: 8 + (seed % 9) as u32,
                blocks: 1 + (seed % 3) as u32,
                ..seeded_spec(seed, vec![])
            };
            let g = generate(&spec).expect("clean spec generates");
            findings(&g.workbook)
                .into_iter()
                .filter(|f| f.rule_id.is_defect_rule())
                .map(|f| format!("seed {seed}: {} at {}", f.rule_id, f.cell.a1()))
                .collect::<Vec<_>>()
        })
        .collect();
    ensure(bad.is_empty(), || format!("{} defect findings: {:?}", bad.len(), &bad[..bad.len().min(5)]))?;
    Ok(format!("{} clean workbooks, 0 defect findings", seeds.len()))
}

// ---------------------------------------------------------------- 4

fn micro_cases() -> Outcome {
    let wb = load_canonical(
        r#"{"format": 1, "sheets": [{"name": "S", "cells": {
            "A1": {"n": 1}, "A2": {"n": 2}, "A3": {"n": 3}, "A4": {"n": 4}, "A5": {"n": 5}, "A6": {"n": 6}, "A7": {"n": 7},
            "B1": {"n": 1}, "B2": {"n": 2}, "B3": {"n": 3}, "B4": {"n": 4}, "B5": {"n": 5}, "B6": {"n": 6}, "B7": {"n": 7},
            "B8": {"n": 8}, "B9": {"n": 9},
            "C2": {"f": "=B2*17.5%"},
            "C3": {"f": "=SUM(A1:B7)"},
            "C4": {"f": "=SUM(A1:A7)"},
            "C5": {"f": "=NPV(0.08,B2:B9)"},
            "C6": {"f": "=5+5+7"},
            "D1": {"s": "1234"}
        }}]}"#,
    )
    .map_err(|e| e.to_string())?;
    let fs = findings(&wb);
    let has = |rule: RuleId, a1: &str| fs.iter().any(|f| f.rule_id == rule && f.cell.a1() == a1);
    let literal = fs.iter().any(|f| {
        f.rule_id == RuleId::ConstInFormula
            && f.cell.a1() == "C2"
            && matches!(&f.evidence, Evidence::Literal { text, .. } if text == "17.5")
    });
    let checks = [
        ("=B2*17.5% -> CONST_IN_FORMULA (17.5)", literal),
        ("=SUM(A1:B7) -> BLOCK_REF", has(RuleId::BlockRef, "C3")),
        ("=SUM(A1:A7) -> no BLOCK_REF", !has(RuleId::BlockRef, "C4")),
        ("=NPV(0.08,B2:B9) -> HIGH_RISK_FUNCTION", has(RuleId::HighRiskFunction, "C5")),
        ("=5+5+7 -> NO_PRECEDENT", has(RuleId::NoPrecedent, "C6")),
        ("\"1234\" -> TEXT_NUMBER", has(RuleId::TextNumber, "D1")),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    ensure(failed.is_empty(), || format!("failed: {failed:?}"))?;
    Ok(format!("{} cases", checks.len()))
}

// ---------------------------------------------------------------- 5

#[derive(Clone, Copy, Debug)]
struct Bounds {
    rows: (u32, u32),
    cols: (u32, u32),
    absolute: bool,
}

const FULL: Bounds = Bounds { rows: (1, formula::MAX_ROW), cols: (1, formula::MAX_COL), absolute: false };

fn coord(b: Bounds) -> impl Strategy<Value = RefCoord> {
    (b.rows.0..=b.rows.1, b.cols.0..=b.cols.1, any::<bool>(), any::<bool>()).prop_map(move |(row, col, ra, ca)| RefCoord {
        row,
        col,
        row_abs: b.absolute || ra,
        col_abs: b.absolute || ca,
    })
}

fn qualifier() -> impl Strategy<Value = (Option<String>, Option<String>)> {
    let q = |s: &str, w: Option<&str>| (Some(s.to_string()), w.map(str::to_string));
    prop_oneof![
        6 => Just((None, None)),
        1 => Just(q("Data", None)),
        1 => Just(q("My Sheet", None)),
        1 => Just(q("It's", None)),
        1 => Just(q("Rates", Some("Book.xlsx"))),
        1 => Just(q("Q 1", Some("Other Book.xlsx"))),
    ]
}

const ERRORS: [&str; 7] = ["#REF!", "#DIV/0!", "#VALUE!", "#NAME?", "#N/A", "#NUM!", "#NULL!"];
const NAMES: [&str; 5] = ["Rate", "Growth", "Tax_Rate", "OUTPUT_Total", "fx.usd"];
const FUNCS: [&str; 9] = ["SUM", "IF", "NPV", "PI", "MAX", "VLOOKUP", "ROUND", "AND", "INDEX"];

fn leaf(b: Bounds) -> BoxedStrategy<Expr> {
    prop_oneof![
        1 => (0u32..100_000, proptest::option::of(0u32..1000), proptest::option::of(-20i32..20)).prop_map(|(i, f, e)| {
            let mut t = i.to_string();
            if let Some(f) = f {
                t = format!("{t}.{f}");
            }
            if let Some(e) = e {
                t = format!("{t}E{e}");
            }
            Expr::number(&t)
        }),
        1 => "[a-zA-Z \"]{0,6}".prop_map(Expr::Text),
        1 => any::<bool>().prop_map(Expr::Bool),
        1 => proptest::sample::select(&ERRORS[..]).prop_map(|e| Expr::Error(e.parse().unwrap())),
        3 => (qualifier(), coord(b)).prop_map(|((sheet, workbook), coord)| Expr::Cell(CellRef { coord, sheet, workbook })),
        2 => (qualifier(), coord(b), coord(b)).prop_map(|((sheet, workbook), s, e)| {
            Expr::Range(RangeRef {
                start: CellRef { coord: s, sheet: sheet.clone(), workbook: workbook.clone() },
                end: CellRef { coord: e, sheet, workbook },
            })
        }),
        1 => (proptest::sample::select(&NAMES[..]), any::<bool>()).prop_map(|(n, ext)| {
            Expr::Name(NameRef { name: n.to_string(), workbook: ext.then(|| "1".to_string()) })
        }),
    ]
    .boxed()
}

fn expr(b: Bounds) -> impl Strategy<Value = Expr> {
    leaf(b).prop_recursive(5, 48, 4, |inner| {
        prop_oneof![
            1 => (proptest::sample::select(&FUNCS[..]), proptest::collection::vec(inner.clone(), 0..4))
                .prop_map(|(n, args)| Expr::func(n, args)),
            3 => (proptest::sample::select(BinaryOp::ALL.to_vec()), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            1 => (any::<bool>(), inner.clone())
                .prop_map(|(neg, e)| Expr::unary(if neg { UnaryOp::Minus } else { UnaryOp::Plus }, e)),
            1 => inner.clone().prop_map(|e| Expr::Percent(Box::new(e))),
            1 => inner.prop_map(|e| Expr::Paren(Box::new(e))),
        ]
    })
}

fn round_trips(e: &Expr) -> Result<(), String> {
    let text = render(e);
    let back = parse(&text).map_err(|err| format!("{text}: {err}"))?;
    if back.strip_parens() == e.strip_parens() {
        Ok(())
    } else {
        Err(format!("{text} reparsed differently"))
    }
}

fn suite_formulas() -> Vec<String> {
    let mut out: Vec<String> = [
        "=B2*17.5%", "=SUM(A1:B7)", "=SUM(A1:A7)", "=NPV(0.08,B2:B9)", "=5+5+7", "=+5+5", "=5+5",
        "=IF(A1>0,\"ok\",\"\")", "=2+3*4", "=2+(3*4)", "=-2^-2", "='My Sheet'!$A$1+'It''s'!B2",
        "='[Other Book.xlsx]Q 1'!A1:B2", "=[1]!Rate*2", "=A1&\" \"&B1", "=ROUND(A1/3,2)", "=(((A1)))",
        "=VLOOKUP(A1,Rates,2,FALSE)", "=#REF!+1", "=50%%", "=1E-3*A1", "=.5+5.",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for entry in fs::read_dir(root().join("fixtures")).expect("fixtures") {
        let p = entry.unwrap().path();
        if let Ok(wb) = load_path(&p) {
            out.extend(wb.formula_cells().map(|(_, f)| f.source.clone()));
        }
    }
    for seed in 0..4 {
        let defects = RuleId::ALL.iter().map(|r| DefectRequest { rule_id: *r, count: 1 }).collect();
        let g = generate(&seeded_spec(seed, defects)).unwrap();
        out.extend(g.workbook.formula_cells().map(|(_, f)| f.source.clone()));
    }
    out.sort();
    out.dedup();
    out
}

fn parser_properties() -> Outcome {
    let start = Instant::now();
    let suite = suite_formulas();
    let mut parsed = 0;
    for src in &suite {
        if let Ok(e) = parse(src) {
            parsed += 1;
            round_trips(&e)?;
        }
    }
    let p = |s: &str| parse(s).unwrap().strip_parens();
    ensure(p("=2+3*4") == p("=2+(3*4)"), || "precedence of * over +".into())?;

    runner(1000).run(&expr(FULL), |e| round_trips(&e).map_err(TestCaseError::fail)).map_err(|e| e.to_string())?;

    let inner = Bounds { rows: (60, 5000), cols: (60, 2000), absolute: false };
    let triple = (expr(inner), 60u32..5000, 60u32..2000, -50i64..1000, -50i64..1000);
    runner(1000)
        .run(&triple, |(e, hr, hc, dr, dc)| {
            let host = CellPos::new(hr, hc);
            let moved = shift(&e, dr, dc).ok_or_else(|| TestCaseError::fail("shift left the sheet"))?;
            let to = CellPos::new((i64::from(hr) + dr) as u32, (i64::from(hc) + dc) as u32);
            prop_assert_eq!(normalize(&moved, to), normalize(&e, host));
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let abs = Bounds { absolute: true, ..FULL };
    runner(1000)
        .run(&(expr(abs), 1u32..=formula::MAX_ROW, 1u32..=formula::MAX_COL), |(e, r, c)| {
            prop_assert_eq!(normalize(&e, CellPos::new(r, c)), normalize(&e, CellPos::new(1, 1)));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "{parsed}/{} suite formulas round-trip; 1000 generated round-trips; 1000 translation triples; 1000 absolute checks; {elapsed:.1?}",
        suite.len()
    ))
}

// ---------------------------------------------------------------- 6

/// Equality key for copies: parentheses and unary plus do not matter.
fn strip(e: &Expr) -> Expr {
    match e {
        Expr::Paren(x) => strip(x),
        Expr::Unary { op: UnaryOp::Plus, operand } => strip(operand),
        Expr::Unary { op, operand } => Expr::unary(*op, strip(operand)),
        Expr::Binary { op, lhs, rhs } => Expr::binary(*op, strip(lhs), strip(rhs)),
        Expr::Percent(x) => Expr::Percent(Box::new(strip(x))),
        Expr::Func { name, args } => Expr::Func { name: name.clone(), args: args.iter().map(strip).collect() },
        leaf => leaf.clone(),
    }
}

fn looks_numeric(text: &str) -> bool {
    let t = text.trim();
    let t = t.strip_prefix(['+', '-']).unwrap_or(t);
    let t = t.strip_suffix('%').unwrap_or(t);
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], Some(&t[i + 1..])),
        None => (t, None),
    };
    let mut parts = mantissa.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next().unwrap_or("");
    let digits = |s: &str| s.chars().all(|c| c.is_ascii_digit());
    let mantissa_ok = digits(int) && digits(frac) && !(int.is_empty() && frac.is_empty());
    let exponent_ok = exponent.is_none_or(|x| {
        let x = x.strip_prefix(['+', '-']).unwrap_or(x);
        !x.is_empty() && digits(x)
    });
    mantissa_ok && exponent_ok
}

fn brute_force_metrics(wb: &Workbook, sheet: usize) -> SheetMetrics {
    let mut m = SheetMetrics::default();
    let s = &wb.sheets()[sheet];
    let mut cells: Vec<(CellPos, &CellValue)> = s.cells().collect();
    cells.sort_by_key(|(p, _)| (p.row, p.col));
    let mut reps: Vec<(CellPos, Expr, u64)> = Vec::new();
    for (pos, v) in &cells {
        match v {
            CellValue::Number(_) => m.number_count += 1,
            CellValue::Text(t) if !looks_numeric(t) => m.label_count += 1,
            CellValue::Bool(_) => m.boolean_count += 1,
            CellValue::Error(_) => m.error_count += 1,
            CellValue::Formula(f) => {
                m.formula_count += 1;
                if matches!(f.cached, Some(Scalar::Error(_))) {
                    m.error_count += 1;
                }
                let Some(ast) = f.ast() else {
                    m.unique_formula_count += 1;
                    continue;
                };
                let me = strip(ast);
                let found = reps.iter_mut().find(|(at, rep, _)| {
                    let dr = i64::from(pos.row) - i64::from(at.row);
                    let dc = i64::from(pos.col) - i64::from(at.col);
                    shift(rep, dr, dc).is_some_and(|moved| strip(&moved) == me)
                });
                match found {
                    Some(r) => r.2 += 1,
                    None => reps.push((*pos, ast.clone(), 1)),
                }
            }
            _ => {}
        }
    }
    for (_, _, n) in &reps {
        if *n == 1 {
            m.unique_formula_count += 1;
        } else {
            m.original_formula_count += 1;
            m.copy_count += n - 1;
        }
    }
    let mut other_sheets = BTreeSet::new();
    let mut books = BTreeSet::new();
    for (pos, v) in &cells {
        let Some(ast) = v.as_formula().and_then(|f| f.ast()) else { continue };
        let mut note = |sheet_q: Option<&str>, book: Option<&str>| match (sheet_q, book) {
            (_, Some(b)) => {
                let name = b
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| wb.link_records().get(i.wrapping_sub(1)).cloned())
                    .unwrap_or_else(|| b.to_string());
                books.insert((*pos, name));
            }
            (Some(sq), None) => {
                if let Some(i) = wb.sheets().iter().position(|x| x.name.eq_ignore_ascii_case(sq)) {
                    if i != sheet {
                        other_sheets.insert((*pos, i));
                    }
                }
            }
            _ => {}
        };
        for r in refs_of(ast) {
            match r {
                RefItem::Cell(c) => note(c.sheet.as_deref(), c.workbook.as_deref()),
                RefItem::Range(rr) => note(rr.start.sheet.as_deref(), rr.start.workbook.as_deref()),
                RefItem::Name(n) => {
                    if let Some(b) = &n.workbook {
                        note(None, Some(b));
                        continue;
                    }
                    let Some((_, def)) = wb.defined_name(&n.name) else { continue };
                    let Ok(d) = parse(&format!("={}", def.trim_start_matches('='))) else { continue };
                    for ir in refs_of(&d) {
                        match ir {
                            RefItem::Cell(c) => note(c.sheet.as_deref(), c.workbook.as_deref()),
                            RefItem::Range(rr) => note(rr.start.sheet.as_deref(), rr.start.workbook.as_deref()),
                            RefItem::Name(_) => {}
                        }
                    }
                }
            }
        }
    }
    m.inter_sheet_link_count = other_sheets.len() as u64;
    m.external_ref_count = books.len() as u64;
    m
}

fn scoping_oracle() -> Outcome {
    let mut books: Vec<(String, Workbook)> = Vec::new();
    for entry in fs::read_dir(root().join("fixtures")).expect("fixtures") {
        let p = entry.unwrap().path();
        if let Ok(wb) = load_path(&p) {
            books.push((p.file_name().unwrap().to_string_lossy().into_owned(), wb));
        }
    }
    books.sort_by(|a, b| a.0.cmp(&b.0));
    for seed in 0..12u64 {
        let rules = RuleId::ALL;
        let defects = (0..5)
            .map(|k| DefectRequest { rule_id: rules[(seed as usize * 5 + k) % rules.len()], count: 1 })
            .collect();
        let spec = SeedSpec { rows: 8, cols: 10, blocks: 3, ..seeded_spec(seed, defects) };
        let g = generate(&spec).map_err(|e| e.to_string())?;
        books.push((format!("generated seed {seed}"), g.workbook));
    }
    let mut checked = 0;
    let mut cells_seen = 0;
    for (name, wb) in &books {
        let cells: usize = wb.sheets().iter().map(|s| s.cells().count()).sum();
        if cells > 1000 {
            continue;
        }
        cells_seen += cells;
        let g = build_graph(wb);
        for i in 0..wb.sheets().len() {
            let got = sheet_metrics(wb, i, &g);
            let want = brute_force_metrics(wb, i);
            ensure(got == want, || format!("{name} sheet {i}: got {got:?}, oracle {want:?}"))?;
            ensure(got.formula_count == got.unique_formula_count + got.original_formula_count + got.copy_count, || {
                format!("{name} sheet {i}: class identity broken")
            })?;
        }
        checked += 1;
    }
    ensure(checked >= 5, || format!("only {checked} workbooks checked"))?;
    Ok(format!("{checked} workbooks ({cells_seen} cells) match the brute-force census"))
}

// ---------------------------------------------------------------- 7

fn weighted(q: &Questionnaire, cat_w: &[f64], q_w: &[f64]) -> Questionnaire {
    let mut q = q.clone();
    let mut k = 0;
    for (ci, c) in q.categories.iter_mut().enumerate() {
        c.weight = cat_w[ci % cat_w.len()];
        for x in &mut c.questions {
            x.weight = q_w[k % q_w.len()];
            k += 1;
        }
    }
    q
}

fn answers_from(q: &Questionnaire, scores: &[Option<u8>]) -> AnswerSet {
    let mut a = AnswerSet::default();
    for (id, s) in q.question_ids().zip(scores) {
        if let Some(s) = s {
            a.answers.insert(id.to_string(), Answer { score: *s, note: String::new() });
        }
    }
    a
}

fn exposure() -> impl Strategy<Value = Exposure> {
    prop_oneof![Just(Exposure::None), Just(Exposure::Minor), Just(Exposure::Major)]
}

fn band() -> impl Strategy<Value = ImpactBand> {
    proptest::sample::select(ImpactBand::ALL.to_vec())
}

fn gate_properties() -> Outcome {
    let base = default_questionnaire();
    let n = base.question_count();
    let weights = (
        proptest::collection::vec(0.01f64..50.0, 7),
        proptest::collection::vec(0.01f64..50.0, n),
        proptest::collection::vec(proptest::option::weighted(0.9, 0u8..=4), n),
        0..n,
        1u8..=4,
    );
    runner(1000)
        .run(&weights, |(cw, qw, scores, i, bump)| {
            let q = weighted(&base, &cw, &qw);
            let l = score_likelihood(&q, &answers_from(&q, &scores)).unwrap();
            prop_assert!((0.0..=1.0).contains(&l));
            prop_assert_eq!(score_likelihood(&q, &AnswerSet::uniform(&q, 0)).unwrap(), 0.0);
            prop_assert_eq!(score_likelihood(&q, &AnswerSet::uniform(&q, 4)).unwrap(), 1.0);
            let mut more = scores.clone();
            let current = more[i].unwrap_or(4);
            more[i] = Some((current + bump).min(4));
            let l2 = score_likelihood(&q, &answers_from(&q, &more)).unwrap();
            prop_assert!(l2 >= l, "{} -> {}", l, l2);
            Ok(())
        })
        .map_err(|e| format!("likelihood: {e}"))?;

    let t = ImpactThresholds::default();
    let impacts = (0.0f64..5e6, 1u64..50, exposure(), exposure(), 0.0f64..5e6, 0u64..50, exposure(), exposure());
    runner(1000)
        .run(&impacts, |(amount, uses, reg, rep, more_amount, more_uses, reg2, rep2)| {
            let a = ImpactAssessment { amount_at_risk: amount, uses_per_period: uses, regulatory: reg, reputational: rep };
            let b0 = score_impact(&a, &t).unwrap();
            let bigger = ImpactAssessment { amount_at_risk: amount + more_amount, ..a.clone() };
            prop_assert!(score_impact(&bigger, &t).unwrap() >= b0);
            let more = ImpactAssessment { uses_per_period: uses + more_uses, ..a.clone() };
            prop_assert!(score_impact(&more, &t).unwrap() >= b0);
            let worse = ImpactAssessment { regulatory: reg.max(reg2), reputational: rep.max(rep2), ..a.clone() };
            prop_assert!(score_impact(&worse, &t).unwrap() >= b0);
            Ok(())
        })
        .map_err(|e| format!("impact: {e}"))?;

    let gates = (band(), 0.0f64..=1.0, 0.0f64..1e7, proptest::option::of(0.0f64..1e5), band(), 0.0f64..=1.0, 0.0f64..500.0);
    runner(1000)
        .run(&gates, |(b, l, amount, effort, tb, tr, tv)| {
            let th = GateThresholds { impact_band: tb, risk_score: tr, value_per_minute: tv };
            let d = run_gates(b, l, amount, effort, &th);
            let stops = d.iter().filter(|x| x.verdict == Verdict::Stop).count();
            prop_assert!(stops <= 1);
            if stops == 1 {
                prop_assert_eq!(d.last().unwrap().verdict, Verdict::Stop);
            }
            let stages: Vec<Stage> = d.iter().map(|x| x.stage).collect();
            let order = [Stage::ImpactGate, Stage::LikelihoodGate, Stage::TestingGate];
            prop_assert_eq!(&stages[..], &order[..stages.len()]);
            let impact_go = b >= tb;
            let risk = l * f64::from(b.value()) / 4.0;
            let expected_len = if !impact_go {
                1
            } else if risk < tr {
                2
            } else if effort.is_some() {
                3
            } else {
                2
            };
            prop_assert_eq!(d.len(), expected_len);
            if let (3, Some(e)) = (d.len(), effort) {
                let go = amount / e.max(1.0) >= tv;
                prop_assert_eq!(d[2].verdict == Verdict::Go, go);
            }
            Ok(())
        })
        .map_err(|e| format!("gates: {e}"))?;
    Ok("likelihood bounds/extremes/monotonicity, impact monotonicity, stop short-circuit: 1000 cases each".into())
}

// ---------------------------------------------------------------- 8

fn dual_encoding() -> Outcome {
    let xlsx = load_path(&root().join("fixtures/dual.xlsx")).map_err(|e| e.to_string())?;
    let canon = load_path(&root().join("fixtures/dual.sgwb")).map_err(|e| e.to_string())?;
    let cfg = ConfigBundle::default();
    let answers = AnswerSet::uniform(&cfg.questionnaire, 2);
    let impact = ImpactAssessment { amount_at_risk: 2_000_000.0, ..Default::default() };
    let strip_id = |mut r: sheetgate::report::Report| {
        r.workbook = None;
        to_machine(&r)
    };
    let pairs = [
        ("metrics", strip_id(scope_report(&xlsx, &cfg)), strip_id(scope_report(&canon, &cfg))),
        ("findings", strip_id(inspect_report(&xlsx, &cfg)), strip_id(inspect_report(&canon, &cfg))),
        (
            "decisions",
            strip_id(full_report(&xlsx, &answers, &impact, &cfg).map_err(|e| e.to_string())?),
            strip_id(full_report(&canon, &answers, &impact, &cfg).map_err(|e| e.to_string())?),
        ),
    ];
    for (what, a, b) in &pairs {
        ensure(a == b, || format!("{what} differ"))?;
    }
    let a = analyse(&canon, &cfg);
    let n = inspect(&canon, &a.graph, &a.classes, &cfg.rules).len();
    ensure(n >= 8, || format!("fixture too quiet: {n} findings"))?;
    let full = full_report(&canon, &answers, &impact, &cfg).unwrap();
    ensure(full.decisions.len() == 3 && full.findings.is_some(), || "fixture does not reach inspection".into())?;
    Ok(format!("OOXML and canonical twins agree on metrics, {n} findings and 3 decisions"))
}

// ---------------------------------------------------------------- 9

fn sheetgate(args: &[&str]) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_sheetgate")).args(args).output().map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
    }
    Ok(o.stdout)
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect()
}

fn determinism_and_scale() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let specs: Vec<Value> = (0..100)
        .map(|s| {
            json!({"rng_seed": 1000 + s, "rows": 250, "cols": 13, "blocks": 4,
                   "clean_pattern": if s % 2 == 0 { "chain" } else { "ratio" },
                   "defects": [{"rule_id": "CONST_IN_FORMULA", "count": 2}, {"rule_id": "PATTERN_BREAK", "count": 2},
                               {"rule_id": "TEXT_NUMBER", "count": 1}, {"rule_id": "BLANK_REF", "count": 1}]})
        })
        .collect();
    let spec = dir.join("spec.json");
    fs::write(&spec, serde_json::to_string(&specs).unwrap()).unwrap();
    let wbs = dir.join("workbooks");
    sheetgate(&["generate", spec.to_str().unwrap(), wbs.to_str().unwrap()])?;
    let answers = AnswerSet::uniform(&default_questionnaire(), 2);
    let a = dir.join("answers.json");
    fs::write(&a, serde_json::to_string(&answers).unwrap()).unwrap();
    let i = dir.join("impact.json");
    fs::write(&i, r#"{"amount_at_risk": 5000000}"#).unwrap();

    let triage = |jobs: &str, out: &Path| {
        sheetgate(&[
            "--format", "machine", "--out", out.to_str().unwrap(), "triage", wbs.to_str().unwrap(),
            "--answers", a.to_str().unwrap(), "--impact", i.to_str().unwrap(), "--jobs", jobs,
        ])
    };
    let start = Instant::now();
    let first = triage("0", &dir.join("run0"))?;
    let elapsed = start.elapsed();
    let report: Value = serde_json::from_slice(&first).map_err(|e| e.to_string())?;
    let entries = report["entries"].as_array().cloned().unwrap_or_default();
    ensure(entries.len() == 100, || format!("{} entries", entries.len()))?;
    let formulas: Vec<u64> = entries.iter().map(|e| e["formula_count"].as_u64().unwrap_or(0)).collect();
    let min = *formulas.iter().min().unwrap();
    ensure(min >= 9000, || format!("smallest workbook has {min} formulas; not every workbook was fully assessed"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("triage took {elapsed:.1?}"))?;

    let expected_files = dir_contents(&dir.join("run0"));
    for (n, jobs) in [(1, "1"), (2, "3"), (3, "0")] {
        let out = dir.join(format!("run{n}"));
        let again = triage(jobs, &out)?;
        ensure(again == first, || format!("stdout differs with --jobs {jobs}"))?;
        ensure(dir_contents(&out) == expected_files, || format!("output files differ with --jobs {jobs}"))?;
    }
    let total: u64 = formulas.iter().sum();
    Ok(format!(
        "100 workbooks, {total} formulas, triage {elapsed:.1?}; identical across reruns and --jobs 1/3/auto"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("catalog coverage", catalog_coverage),
        ("seeded recall", seeded_recall),
        ("clean precision", clean_precision),
        ("micro-cases", micro_cases),
        ("parser properties", parser_properties),
        ("scoping oracle", scoping_oracle),
        ("gate properties", gate_properties),
        ("dual encoding", dual_encoding),
        ("determinism and scale", determinism_and_scale),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
