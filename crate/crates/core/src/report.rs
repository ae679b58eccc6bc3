//! Report documents and their text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::address::CellPos;
use crate::gate::{
    AnswerSet, Exposure, GateDecision, ImpactAssessment, ImpactBand, Questionnaire, Stage, Verdict,
};
use crate::inspection::{Evidence, Finding, RuleId};
use crate::scoping::{Divergence, EffortEstimate, WorkbookMetrics};
use crate::setup::SetupFinding;
use crate::severity::Severity;
use crate::workbook::Workbook;

pub const REPORT_SCHEMA: &str = "sheetgate-report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

impl Default for Tool {
    fn default() -> Self {
        Tool { name: "sheetgate".into(), version: env!("CARGO_PKG_VERSION").into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireEcho {
    pub version: u32,
    pub likelihood: f64,
    /// Score used for every question, including defaults for unanswered ones.
    pub scores: BTreeMap<String, u8>,
    pub unanswered: Vec<String>,
}

impl QuestionnaireEcho {
    pub fn new(q: &Questionnaire, a: &AnswerSet, likelihood: f64) -> Self {
        QuestionnaireEcho {
            version: q.version,
            likelihood,
            scores: q.question_ids().map(|id| (id.to_string(), a.score(id))).collect(),
            unanswered: q
                .question_ids()
                .filter(|id| !a.answers.contains_key(*id))
                .map(str::to_string)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactEcho {
    pub amount_at_risk: f64,
    pub uses_per_period: u64,
    pub regulatory: Exposure,
    pub reputational: Exposure,
    pub effective_amount: f64,
    pub band: ImpactBand,
}

impl ImpactEcho {
    pub fn new(i: &ImpactAssessment, band: ImpactBand) -> Self {
        ImpactEcho {
            amount_at_risk: i.amount_at_risk,
            uses_per_period: i.uses_per_period,
            regulatory: i.regulatory,
            reputational: i.reputational,
            effective_amount: i.effective_amount(),
            band,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFinding {
    pub rule_id: RuleId,
    pub severity: Severity,
    pub sheet: String,
    pub cell: CellPos,
    pub message: String,
    pub evidence: Evidence,
}

impl ReportFinding {
    pub fn from_finding(wb: &Workbook, f: &Finding) -> Self {
        ReportFinding {
            rule_id: f.rule_id,
            severity: f.severity,
            sheet: wb.sheets()[f.cell.sheet].name.clone(),
            cell: f.cell.pos(),
            message: f.message.clone(),
            evidence: f.evidence.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub sheet_a: String,
    pub sheet_b: String,
    pub divergences: Vec<Divergence>,
}

/// Output of the single-workbook and questionnaire commands. Sections that a
/// command does not produce are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub schema_version: u32,
    pub tool: Tool,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workbook: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questionnaire: Option<QuestionnaireEcho>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impact: Option<ImpactEcho>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<GateDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<WorkbookMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effort: Option<EffortEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup_findings: Option<Vec<SetupFinding>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub findings: Option<Vec<ReportFinding>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<DivergenceReport>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            schema: REPORT_SCHEMA.into(),
            schema_version: REPORT_SCHEMA_VERSION,
            tool: Tool::default(),
            command: command.into(),
            workbook: None,
            questionnaire: None,
            impact: None,
            decisions: Vec::new(),
            metrics: None,
            effort: None,
            setup_findings: None,
            findings: None,
            comparison: None,
        }
    }

    pub fn stopped_at(&self) -> Option<Stage> {
        self.decisions
            .iter()
            .find(|d| d.verdict == Verdict::Stop)
            .map(|d| d.stage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageEntry {
    pub rank: usize,
    /// Path relative to the triaged directory, `/`-separated.
    pub path: String,
    pub status: EntryStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impact_band: Option<ImpactBand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_amount: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped_at: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effort_minutes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup_finding_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finding_counts: Option<BTreeMap<RuleId, usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageReport {
    pub schema: String,
    pub schema_version: u32,
    pub tool: Tool,
    pub command: String,
    pub entries: Vec<TriageEntry>,
}

impl TriageReport {
    pub fn new(entries: Vec<TriageEntry>) -> Self {
        TriageReport {
            schema: REPORT_SCHEMA.into(),
            schema_version: REPORT_SCHEMA_VERSION,
            tool: Tool::default(),
            command: "triage".into(),
            entries,
        }
    }
}

pub fn to_machine<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("report serializes");
    s.push('\n');
    s
}

fn num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.4}")
    }
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i + 1 == cells.len() {
                s.push_str(c);
            } else {
                let _ = write!(s, "{c:<w$}  ");
            }
        }
        s.trim_end().to_string()
    };
    let _ = writeln!(out, "{}", line(header.to_vec()));
    let _ = writeln!(
        out,
        "{}",
        line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect())
    );
    for r in rows {
        let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
    }
}

fn decision_rows(ds: &[GateDecision]) -> Vec<Vec<String>> {
    ds.iter()
        .map(|d| vec![format!("{:?}", d.stage), format!("{:?}", d.verdict), d.rationale.clone()])
        .collect()
}

pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sheetgate {} {}", r.tool.version, r.command);
    if let Some(w) = &r.workbook {
        let _ = writeln!(out, "workbook: {w}");
    }
    if let Some(q) = &r.questionnaire {
        let _ = writeln!(
            out,
            "\nlikelihood: {} ({} of {} questions unanswered, scored as worst)",
            num(q.likelihood),
            q.unanswered.len(),
            q.scores.len()
        );
    }
    if let Some(i) = &r.impact {
        let _ = writeln!(
            out,
            "impact: {} x {} uses = {} -> {}",
            num(i.amount_at_risk),
            i.uses_per_period,
            num(i.effective_amount),
            i.band
        );
    }
    if !r.decisions.is_empty() {
        out.push('\n');
        table(&mut out, &["stage", "verdict", "rationale"], &decision_rows(&r.decisions));
    }
    if let Some(m) = &r.metrics {
        out.push('\n');
        let rows: Vec<Vec<String>> = m
            .sheets
            .iter()
            .map(|s| (s.sheet.clone(), &s.metrics))
            .chain(std::iter::once(("TOTAL".to_string(), &m.totals)))
            .map(|(name, x)| {
                vec![
                    name,
                    x.formula_count.to_string(),
                    x.unique_formula_count.to_string(),
                    x.original_formula_count.to_string(),
                    x.copy_count.to_string(),
                    x.number_count.to_string(),
                    x.label_count.to_string(),
                    x.error_count.to_string(),
                    x.inter_sheet_link_count.to_string(),
                    x.external_ref_count.to_string(),
                ]
            })
            .collect();
        table(
            &mut out,
            &["sheet", "formulas", "unique", "original", "copies", "numbers", "labels", "errors", "sheet links", "external"],
            &rows,
        );
        if !m.external_workbooks.is_empty() {
            let _ = writeln!(out, "external workbooks: {}", m.external_workbooks.join(", "));
        }
    }
    if let Some(e) = &r.effort {
        let parts: Vec<String> = e.breakdown.iter().map(|(k, v)| format!("{k} {}", num(*v))).collect();
        let _ = writeln!(out, "\nestimated inspection effort: {} min ({})", num(e.minutes), parts.join(", "));
    }
    if let Some(s) = &r.setup_findings {
        let _ = writeln!(out, "\nset-up findings: {}", s.len());
        if !s.is_empty() {
            let rows: Vec<Vec<String>> = s
                .iter()
                .map(|f| {
                    vec![
                        f.kind.as_str().to_string(),
                        f.severity.to_string(),
                        f.sheet.clone().unwrap_or_default(),
                        f.detail.clone(),
                    ]
                })
                .collect();
            table(&mut out, &["kind", "severity", "sheet", "detail"], &rows);
        }
    }
    if let Some(fs) = &r.findings {
        let _ = writeln!(out, "\ninspection findings: {}", fs.len());
        if !fs.is_empty() {
            let rows: Vec<Vec<String>> = fs
                .iter()
                .map(|f| {
                    vec![
                        format!("{}!{}", f.sheet, f.cell),
                        f.rule_id.to_string(),
                        f.severity.to_string(),
                        f.message.clone(),
                    ]
                })
                .collect();
            table(&mut out, &["cell", "rule", "severity", "message"], &rows);
        }
    }
    if let Some(c) = &r.comparison {
        let _ = writeln!(out, "\n{} vs {}: {} divergences", c.sheet_a, c.sheet_b, c.divergences.len());
        if !c.divergences.is_empty() {
            let rows: Vec<Vec<String>> = c
                .divergences
                .iter()
                .map(|d| vec![d.cell.to_string(), format!("{:?}", d.kind)])
                .collect();
            table(&mut out, &["cell", "divergence"], &rows);
        }
    }
    out
}

pub fn render_triage_text(t: &TriageReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sheetgate {} triage: {} workbooks", t.tool.version, t.entries.len());
    if t.entries.is_empty() {
        return out;
    }
    out.push('\n');
    let rows: Vec<Vec<String>> = t
        .entries
        .iter()
        .map(|e| {
            let status = match (&e.error, e.stopped_at) {
                (Some(err), _) => format!("error: {err}"),
                (None, Some(stage)) => format!("stop at {stage:?}"),
                (None, None) => "inspected".to_string(),
            };
            vec![
                e.rank.to_string(),
                e.path.clone(),
                e.risk_score.map(num).unwrap_or_default(),
                e.impact_band.map(|b| b.to_string()).unwrap_or_default(),
                e.effective_amount.map(num).unwrap_or_default(),
                e.finding_counts
                    .as_ref()
                    .map(|c| c.values().sum::<usize>().to_string())
                    .unwrap_or_default(),
                status,
            ]
        })
        .collect();
    table(&mut out, &["rank", "path", "risk", "impact", "amount", "findings", "status"], &rows);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedFile {
    pub id: String,
    pub workbook: String,
    pub truth: String,
    pub planted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateReport {
    pub schema: String,
    pub schema_version: u32,
    pub tool: Tool,
    pub command: String,
    pub generated: Vec<GeneratedFile>,
}

impl GenerateReport {
    pub fn new(generated: Vec<GeneratedFile>) -> Self {
        GenerateReport {
            schema: REPORT_SCHEMA.into(),
            schema_version: REPORT_SCHEMA_VERSION,
            tool: Tool::default(),
            command: "generate".into(),
            generated,
        }
    }
}
