//! End-to-end runs: per-stage reports for one workbook and portfolio triage.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{parse_document, ConfigBundle};
use crate::gate::{
    cleared_for_inspection, risk_score, run_gates, score_impact, score_likelihood, AnswerSet, GateError,
    ImpactAssessment, ImpactBand, Questionnaire, Verdict,
};
use crate::graph::{build_graph_with_cap, DepGraph};
use crate::inspection::inspect;
use crate::report::{
    to_machine, EntryStatus, ImpactEcho, QuestionnaireEcho, Report, ReportFinding, TriageEntry, TriageReport,
    DivergenceReport,
};
use crate::scoping::{compare_sheets, estimate_effort, formula_classes, workbook_metrics, FormulaClasses};
use crate::setup::assess_setup;
use crate::workbook::{load_path, Workbook};

pub struct Analysis {
    pub graph: DepGraph,
    pub classes: Vec<FormulaClasses>,
}

pub fn analyse(wb: &Workbook, cfg: &ConfigBundle) -> Analysis {
    Analysis {
        graph: build_graph_with_cap(wb, cfg.range_cap),
        classes: (0..wb.sheets().len()).map(|i| formula_classes(wb, i)).collect(),
    }
}

fn add_scope(r: &mut Report, wb: &Workbook, a: &Analysis, cfg: &ConfigBundle) {
    let metrics = workbook_metrics(wb, &a.graph);
    r.effort = Some(estimate_effort(&metrics, &cfg.effort));
    r.metrics = Some(metrics);
    r.setup_findings = Some(assess_setup(wb, &a.graph, &cfg.setup_severities));
}

fn add_inspection(r: &mut Report, wb: &Workbook, a: &Analysis, cfg: &ConfigBundle) {
    let findings = inspect(wb, &a.graph, &a.classes, &cfg.rules);
    r.findings = Some(findings.iter().map(|f| ReportFinding::from_finding(wb, f)).collect());
}

pub fn scope_report(wb: &Workbook, cfg: &ConfigBundle) -> Report {
    let a = analyse(wb, cfg);
    let mut r = Report::new("scope");
    r.workbook = Some(wb.id.clone());
    add_scope(&mut r, wb, &a, cfg);
    r
}

pub fn inspect_report(wb: &Workbook, cfg: &ConfigBundle) -> Report {
    let a = analyse(wb, cfg);
    let mut r = Report::new("inspect");
    r.workbook = Some(wb.id.clone());
    add_inspection(&mut r, wb, &a, cfg);
    r
}

pub fn compare_report(wb: &Workbook, a: &str, b: &str) -> Result<Report, String> {
    let ia = wb.sheet_index(a).ok_or_else(|| format!("no sheet named {a:?}"))?;
    let ib = wb.sheet_index(b).ok_or_else(|| format!("no sheet named {b:?}"))?;
    let mut r = Report::new("compare");
    r.workbook = Some(wb.id.clone());
    r.comparison = Some(DivergenceReport {
        sheet_a: wb.sheets()[ia].name.clone(),
        sheet_b: wb.sheets()[ib].name.clone(),
        divergences: compare_sheets(wb, ia, ib),
    });
    Ok(r)
}

struct Overall {
    likelihood: f64,
    band: ImpactBand,
    effective: f64,
}

fn overall(
    q: &Questionnaire,
    answers: &AnswerSet,
    impact: &ImpactAssessment,
    cfg: &ConfigBundle,
    r: &mut Report,
) -> Result<Overall, GateError> {
    let likelihood = score_likelihood(q, answers)?;
    let band = score_impact(impact, &cfg.impact_thresholds)?;
    r.questionnaire = Some(QuestionnaireEcho::new(q, answers, likelihood));
    r.impact = Some(ImpactEcho::new(impact, band));
    Ok(Overall { likelihood, band, effective: impact.effective_amount() })
}

/// The two overall gates, without looking at any workbook.
pub fn assess_report(
    q: &Questionnaire,
    answers: &AnswerSet,
    impact: &ImpactAssessment,
    cfg: &ConfigBundle,
) -> Result<Report, GateError> {
    let mut r = Report::new("assess");
    let o = overall(q, answers, impact, cfg, &mut r)?;
    r.decisions = run_gates(o.band, o.likelihood, o.effective, None, &cfg.gates);
    Ok(r)
}

/// Every stage for one workbook, honouring each stop/go decision.
pub fn full_report(
    wb: &Workbook,
    answers: &AnswerSet,
    impact: &ImpactAssessment,
    cfg: &ConfigBundle,
) -> Result<Report, GateError> {
    let mut r = Report::new("triage");
    r.workbook = Some(wb.id.clone());
    let o = overall(&cfg.questionnaire, answers, impact, cfg, &mut r)?;
    let early = run_gates(o.band, o.likelihood, o.effective, None, &cfg.gates);
    if early.iter().any(|d| d.verdict == Verdict::Stop) {
        r.decisions = early;
        return Ok(r);
    }
    let a = analyse(wb, cfg);
    add_scope(&mut r, wb, &a, cfg);
    let minutes = r.effort.as_ref().map(|e| e.minutes);
    r.decisions = run_gates(o.band, o.likelihood, o.effective, minutes, &cfg.gates);
    if cleared_for_inspection(&r.decisions) {
        add_inspection(&mut r, wb, &a, cfg);
    }
    Ok(r)
}

pub const WORKBOOK_EXTENSIONS: [&str; 3] = ["sgwb", "xlsx", "xlsm"];

fn is_workbook(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| WORKBOOK_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        && !p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("~$"))
}

/// Workbook files under `dir`, recursively, as (relative `/` path, full path),
/// sorted by relative path.
pub fn discover(dir: &Path) -> std::io::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if is_workbook(&p) {
                let rel = p
                    .strip_prefix(dir)
                    .unwrap_or(&p)
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join("/");
                out.push((rel, p));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Sidecar files next to a workbook: `<stem>.answers.json`, `<stem>.impact.json`.
pub fn sidecar(path: &Path, kind: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{kind}.json"))
}

fn load_sidecar<T: serde::de::DeserializeOwned + Clone>(path: &Path, kind: &str, fallback: &T) -> Result<T, String> {
    let p = sidecar(path, kind);
    if !p.exists() {
        return Ok(fallback.clone());
    }
    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let text = std::fs::read_to_string(&p).map_err(|e| format!("{name}: {e}"))?;
    parse_document(&text).map_err(|e| format!("{name}: {e}"))
}

#[derive(Debug, Clone)]
pub struct TriageOptions {
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
    pub answers: AnswerSet,
    pub impact: ImpactAssessment,
}

impl Default for TriageOptions {
    fn default() -> Self {
        TriageOptions {
            jobs: 0,
            answers: AnswerSet::default(),
            impact: ImpactAssessment::default(),
        }
    }
}

pub struct TriageOutcome {
    pub report: TriageReport,
    /// (relative path, machine report) for every workbook that loaded.
    pub assessments: Vec<(String, String)>,
}

fn triage_one(rel: &str, path: &Path, cfg: &ConfigBundle, opts: &TriageOptions) -> (TriageEntry, Option<String>) {
    let mut entry = TriageEntry {
        rank: 0,
        path: rel.to_string(),
        status: EntryStatus::Error,
        error: None,
        risk_score: None,
        likelihood: None,
        impact_band: None,
        effective_amount: None,
        stopped_at: None,
        effort_minutes: None,
        formula_count: None,
        setup_finding_count: None,
        finding_counts: None,
    };
    let run = || -> Result<Report, String> {
        let answers = load_sidecar(path, "answers", &opts.answers)?;
        let impact = load_sidecar(path, "impact", &opts.impact)?;
        let wb = load_path(path).map_err(|e| e.to_string())?;
        full_report(&wb, &answers, &impact, cfg).map_err(|e| e.to_string())
    };
    match run() {
        Err(e) => {
            entry.error = Some(e);
            (entry, None)
        }
        Ok(r) => {
            let q = r.questionnaire.as_ref().expect("full report echoes the questionnaire");
            let i = r.impact.as_ref().expect("full report echoes the impact");
            entry.status = EntryStatus::Ok;
            entry.likelihood = Some(q.likelihood);
            entry.impact_band = Some(i.band);
            entry.effective_amount = Some(i.effective_amount);
            entry.risk_score = Some(risk_score(i.band, q.likelihood));
            entry.stopped_at = r.stopped_at();
            entry.effort_minutes = r.effort.as_ref().map(|e| e.minutes);
            entry.formula_count = r.metrics.as_ref().map(|m| m.totals.formula_count);
            entry.setup_finding_count = r.setup_findings.as_ref().map(Vec::len);
            entry.finding_counts = r.findings.as_ref().map(|fs| {
                let mut m = BTreeMap::new();
                for f in fs {
                    *m.entry(f.rule_id).or_insert(0) += 1;
                }
                m
            });
            (entry, Some(to_machine(&r)))
        }
    }
}

/// Ranking order: loaded workbooks by risk score, then effective amount,
/// both descending, then path; failed workbooks last, by path.
fn rank_order(a: &TriageEntry, b: &TriageEntry) -> Ordering {
    let key = |e: &TriageEntry| (e.status == EntryStatus::Error, e.risk_score, e.effective_amount);
    let (ea, ra, aa) = key(a);
    let (eb, rb, ab) = key(b);
    ea.cmp(&eb)
        .then_with(|| rb.unwrap_or(0.0).total_cmp(&ra.unwrap_or(0.0)))
        .then_with(|| ab.unwrap_or(0.0).total_cmp(&aa.unwrap_or(0.0)))
        .then_with(|| a.path.cmp(&b.path))
}

pub fn triage(dir: &Path, cfg: &ConfigBundle, opts: &TriageOptions) -> std::io::Result<TriageOutcome> {
    let files = discover(dir)?;
    let work = || -> Vec<(TriageEntry, Option<String>)> {
        files
            .par_iter()
            .map(|(rel, path)| triage_one(rel, path, cfg, opts))
            .collect()
    };
    let results = if opts.jobs == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(std::io::Error::other)?
            .install(work)
    };
    let mut assessments = Vec::new();
    let mut entries = Vec::with_capacity(results.len());
    for (e, report) in results {
        if let Some(r) = report {
            assessments.push((e.path.clone(), r));
        }
        entries.push(e);
    }
    entries.sort_by(rank_order);
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(TriageOutcome { report: TriageReport::new(entries), assessments })
}

/// File name for a per-workbook report inside the output directory.
pub fn assessment_file_name(rel: &str) -> String {
    format!("{}.assessment.json", rel.replace('/', "__"))
}
