//! Questionnaire scoring, impact banding and the three stop/go gates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub const MAX_SCORE: u8 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub id: String,
    pub text: String,
    #[serde(default = "unit")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Category {
    pub id: String,
    pub title: String,
    #[serde(default = "unit")]
    pub weight: f64,
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Questionnaire {
    pub version: u32,
    pub categories: Vec<Category>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GateError {
    #[error("answer for unknown question {0:?}")]
    UnknownQuestion(String),
    #[error("score {score} for {id} is outside 0..={MAX_SCORE}")]
    ScoreOutOfRange { id: String, score: u8 },
    #[error("invalid questionnaire: {0}")]
    Questionnaire(String),
    #[error("invalid impact assessment: {0}")]
    Impact(String),
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
}

fn positive(w: f64) -> bool {
    w.is_finite() && w > 0.0
}

impl Questionnaire {
    pub fn validate(&self) -> Result<(), GateError> {
        let bad = |m: String| Err(GateError::Questionnaire(m));
        if self.categories.is_empty() {
            return bad("no categories".into());
        }
        let mut ids = BTreeSet::new();
        for c in &self.categories {
            if !ids.insert(c.id.as_str()) {
                return bad(format!("duplicate id {}", c.id));
            }
            if !positive(c.weight) {
                return bad(format!("category {} weight must be positive", c.id));
            }
            if c.questions.is_empty() {
                return bad(format!("category {} has no questions", c.id));
            }
            for q in &c.questions {
                if !ids.insert(q.id.as_str()) {
                    return bad(format!("duplicate id {}", q.id));
                }
                if !positive(q.weight) {
                    return bad(format!("question {} weight must be positive", q.id));
                }
            }
        }
        Ok(())
    }

    pub fn question_ids(&self) -> impl Iterator<Item = &str> {
        self.categories
            .iter()
            .flat_map(|c| c.questions.iter().map(|q| q.id.as_str()))
    }

    pub fn question_count(&self) -> usize {
        self.categories.iter().map(|c| c.questions.len()).sum()
    }
}

const DEFAULT_QUESTIONNAIRE: &str = include_str!("../data/questionnaire.json");

pub fn default_questionnaire() -> Questionnaire {
    serde_json::from_str(DEFAULT_QUESTIONNAIRE).expect("bundled questionnaire is valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Answer {
    pub score: u8,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerSet {
    pub answers: BTreeMap<String, Answer>,
}

impl AnswerSet {
    pub fn uniform(q: &Questionnaire, score: u8) -> Self {
        AnswerSet {
            answers: q
                .question_ids()
                .map(|id| (id.to_string(), Answer { score, note: String::new() }))
                .collect(),
        }
    }

    /// Score used for a question; missing answers count as the worst score.
    pub fn score(&self, id: &str) -> u8 {
        self.answers.get(id).map_or(MAX_SCORE, |a| a.score)
    }

    pub fn validate(&self, q: &Questionnaire) -> Result<(), GateError> {
        let known: BTreeSet<&str> = q.question_ids().collect();
        for (id, a) in &self.answers {
            if !known.contains(id.as_str()) {
                return Err(GateError::UnknownQuestion(id.clone()));
            }
            if a.score > MAX_SCORE {
                return Err(GateError::ScoreOutOfRange { id: id.clone(), score: a.score });
            }
        }
        Ok(())
    }
}

/// Weighted mean of per-category weighted means, scaled to [0, 1].
pub fn score_likelihood(q: &Questionnaire, a: &AnswerSet) -> Result<f64, GateError> {
    q.validate()?;
    a.validate(q)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for c in &q.categories {
        let qw: f64 = c.questions.iter().map(|x| x.weight).sum();
        let s: f64 = c
            .questions
            .iter()
            .map(|x| x.weight * f64::from(a.score(&x.id)))
            .sum();
        // Mean first, so that all-max answers give exactly 1.
        num += c.weight * (s / qw / f64::from(MAX_SCORE));
        den += c.weight;
    }
    Ok((num / den).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Exposure {
    #[default]
    None,
    Minor,
    Major,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactAssessment {
    pub amount_at_risk: f64,
    #[serde(default = "one")]
    pub uses_per_period: u64,
    #[serde(default)]
    pub regulatory: Exposure,
    #[serde(default)]
    pub reputational: Exposure,
}

fn one() -> u64 {
    1
}

impl Default for ImpactAssessment {
    fn default() -> Self {
        ImpactAssessment {
            amount_at_risk: 0.0,
            uses_per_period: 1,
            regulatory: Exposure::None,
            reputational: Exposure::None,
        }
    }
}

impl ImpactAssessment {
    pub fn validate(&self) -> Result<(), GateError> {
        if !self.amount_at_risk.is_finite() || self.amount_at_risk < 0.0 {
            return Err(GateError::Impact("amount_at_risk must be a non-negative number".into()));
        }
        if self.uses_per_period < 1 {
            return Err(GateError::Impact("uses_per_period must be at least 1".into()));
        }
        Ok(())
    }

    pub fn effective_amount(&self) -> f64 {
        self.amount_at_risk * self.uses_per_period as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ImpactBand {
    Low,
    Medium,
    High,
    Critical,
}

impl ImpactBand {
    pub const ALL: [ImpactBand; 4] = [ImpactBand::Low, ImpactBand::Medium, ImpactBand::High, ImpactBand::Critical];

    pub fn value(self) -> u8 {
        self as u8 + 1
    }

    pub fn raised(self) -> ImpactBand {
        match self {
            ImpactBand::Low => ImpactBand::Medium,
            ImpactBand::Medium => ImpactBand::High,
            _ => ImpactBand::Critical,
        }
    }
}

impl fmt::Display for ImpactBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Lower bounds (inclusive) of the Medium, High and Critical bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpactThresholds {
    pub medium: f64,
    pub high: f64,
    pub critical: f64,
}

impl Default for ImpactThresholds {
    fn default() -> Self {
        ImpactThresholds { medium: 10_000.0, high: 100_000.0, critical: 1_000_000.0 }
    }
}

impl ImpactThresholds {
    pub fn validate(&self) -> Result<(), GateError> {
        let ok = [self.medium, self.high, self.critical].iter().all(|v| v.is_finite())
            && 0.0 <= self.medium
            && self.medium <= self.high
            && self.high <= self.critical;
        if ok {
            Ok(())
        } else {
            Err(GateError::Thresholds("impact bounds must be finite and non-decreasing".into()))
        }
    }
}

pub fn score_impact(i: &ImpactAssessment, t: &ImpactThresholds) -> Result<ImpactBand, GateError> {
    i.validate()?;
    t.validate()?;
    let amount = i.effective_amount();
    let band = if amount >= t.critical {
        ImpactBand::Critical
    } else if amount >= t.high {
        ImpactBand::High
    } else if amount >= t.medium {
        ImpactBand::Medium
    } else {
        ImpactBand::Low
    };
    if i.regulatory == Exposure::Major || i.reputational == Exposure::Major {
        Ok(band.raised())
    } else {
        Ok(band)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateThresholds {
    /// Lowest band that passes the impact gate.
    pub impact_band: ImpactBand,
    pub risk_score: f64,
    /// Effective amount per estimated minute of inspection effort.
    pub value_per_minute: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        GateThresholds { impact_band: ImpactBand::Medium, risk_score: 0.25, value_per_minute: 50.0 }
    }
}

impl GateThresholds {
    pub fn validate(&self) -> Result<(), GateError> {
        if !(0.0..=1.0).contains(&self.risk_score) {
            return Err(GateError::Thresholds("risk_score must lie in [0, 1]".into()));
        }
        if !self.value_per_minute.is_finite() || self.value_per_minute < 0.0 {
            return Err(GateError::Thresholds("value_per_minute must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    ImpactGate,
    LikelihoodGate,
    TestingGate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Go,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateScores {
    pub impact_band: ImpactBand,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub likelihood: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risk_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effort_minutes: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub stage: Stage,
    pub verdict: Verdict,
    pub scores: GateScores,
    pub rationale: String,
}

fn verdict(go: bool) -> Verdict {
    if go {
        Verdict::Go
    } else {
        Verdict::Stop
    }
}

pub fn risk_score(band: ImpactBand, likelihood: f64) -> f64 {
    likelihood * f64::from(band.value()) / 4.0
}

pub fn gate_impact(band: ImpactBand, t: &GateThresholds) -> GateDecision {
    let go = band >= t.impact_band;
    GateDecision {
        stage: Stage::ImpactGate,
        verdict: verdict(go),
        scores: GateScores { impact_band: band, likelihood: None, risk_score: None, effort_minutes: None },
        rationale: format!(
            "impact band {band} {} threshold {}",
            if go { "meets" } else { "is below" },
            t.impact_band
        ),
    }
}

pub fn gate_likelihood(band: ImpactBand, likelihood: f64, t: &GateThresholds) -> GateDecision {
    let r = risk_score(band, likelihood);
    let go = r >= t.risk_score;
    GateDecision {
        stage: Stage::LikelihoodGate,
        verdict: verdict(go),
        scores: GateScores {
            impact_band: band,
            likelihood: Some(likelihood),
            risk_score: Some(r),
            effort_minutes: None,
        },
        rationale: format!(
            "risk score {r:.4} = likelihood {likelihood:.4} x band {}/4; threshold {}",
            band.value(),
            t.risk_score
        ),
    }
}

pub fn gate_testing(
    band: ImpactBand,
    likelihood: f64,
    effective_amount: f64,
    effort_minutes: f64,
    t: &GateThresholds,
) -> GateDecision {
    let r = risk_score(band, likelihood);
    let ratio = effective_amount / effort_minutes.max(1.0);
    let go = r >= t.risk_score && ratio >= t.value_per_minute;
    GateDecision {
        stage: Stage::TestingGate,
        verdict: verdict(go),
        scores: GateScores {
            impact_band: band,
            likelihood: Some(likelihood),
            risk_score: Some(r),
            effort_minutes: Some(effort_minutes),
        },
        rationale: format!(
            "risk score {r:.4} vs threshold {}; amount {effective_amount} / effort {effort_minutes} min = {ratio:.2} per minute vs floor {}",
            t.risk_score, t.value_per_minute
        ),
    }
}

/// Run the gates in order, stopping at the first Stop. The testing gate is
/// only reached when an effort estimate is supplied.
pub fn run_gates(
    band: ImpactBand,
    likelihood: f64,
    effective_amount: f64,
    effort_minutes: Option<f64>,
    t: &GateThresholds,
) -> Vec<GateDecision> {
    let mut out = vec![gate_impact(band, t)];
    if out[0].verdict == Verdict::Stop {
        return out;
    }
    let l = gate_likelihood(band, likelihood, t);
    let stop = l.verdict == Verdict::Stop;
    out.push(l);
    if stop {
        return out;
    }
    if let Some(e) = effort_minutes {
        out.push(gate_testing(band, likelihood, effective_amount, e, t));
    }
    out
}

/// True when every recorded gate said Go and the testing gate was reached.
pub fn cleared_for_inspection(decisions: &[GateDecision]) -> bool {
    decisions.iter().all(|d| d.verdict == Verdict::Go)
        && decisions.last().is_some_and(|d| d.stage == Stage::TestingGate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impact(amount: f64, uses: u64) -> ImpactAssessment {
        ImpactAssessment { amount_at_risk: amount, uses_per_period: uses, ..Default::default() }
    }

    #[test]
    fn default_questionnaire_shape() {
        let q = default_questionnaire();
        q.validate().unwrap();
        let counts: Vec<(&str, usize)> = q.categories.iter().map(|c| (c.id.as_str(), c.questions.len())).collect();
        assert_eq!(
            counts,
            vec![("ORG", 2), ("DOM", 3), ("SPEC", 5), ("TEST", 5), ("DOC", 7), ("CPLX", 4), ("DATA", 4)]
        );
        assert_eq!(q.question_count(), 30);
        assert!(q.categories.iter().all(|c| c.weight == 1.0 && c.questions.iter().all(|x| x.weight == 1.0)));
    }

    #[test]
    fn likelihood_extremes_and_missing() {
        let q = default_questionnaire();
        assert_eq!(score_likelihood(&q, &AnswerSet::uniform(&q, 0)).unwrap(), 0.0);
        assert_eq!(score_likelihood(&q, &AnswerSet::uniform(&q, 4)).unwrap(), 1.0);
        assert_eq!(score_likelihood(&q, &AnswerSet::default()).unwrap(), 1.0);
        let mut a = AnswerSet::default();
        a.answers.insert("NOPE-1".into(), Answer { score: 0, note: String::new() });
        assert_eq!(score_likelihood(&q, &a), Err(GateError::UnknownQuestion("NOPE-1".into())));
        let mut a = AnswerSet::default();
        a.answers.insert("ORG-1".into(), Answer { score: 5, note: String::new() });
        assert!(matches!(score_likelihood(&q, &a), Err(GateError::ScoreOutOfRange { .. })));
    }

    #[test]
    fn impact_bands() {
        let t = ImpactThresholds::default();
        assert_eq!(score_impact(&impact(0.0, 1), &t).unwrap(), ImpactBand::Low);
        assert_eq!(score_impact(&impact(50_000.0, 1), &t).unwrap(), ImpactBand::Medium);
        assert_eq!(score_impact(&impact(5_000.0, 40), &t).unwrap(), ImpactBand::High);
        assert_eq!(score_impact(&impact(10_000.0, 1), &t).unwrap(), ImpactBand::Medium);
        assert_eq!(score_impact(&impact(9_999.99, 1), &t).unwrap(), ImpactBand::Low);
        let major = ImpactAssessment { regulatory: Exposure::Major, ..impact(0.0, 1) };
        assert_eq!(score_impact(&major, &t).unwrap(), ImpactBand::Medium);
        let capped = ImpactAssessment { reputational: Exposure::Major, ..impact(5e6, 1) };
        assert_eq!(score_impact(&capped, &t).unwrap(), ImpactBand::Critical);
        assert!(score_impact(&impact(-1.0, 1), &t).is_err());
        assert!(score_impact(&impact(1.0, 0), &t).is_err());
    }

    #[test]
    fn gates() {
        let t = GateThresholds::default();
        assert_eq!(gate_impact(ImpactBand::Low, &t).verdict, Verdict::Stop);
        assert_eq!(gate_impact(ImpactBand::Medium, &t).verdict, Verdict::Go);
        assert_eq!(gate_likelihood(ImpactBand::Critical, 0.0, &t).verdict, Verdict::Stop);
        assert_eq!(gate_likelihood(ImpactBand::Medium, 0.5, &t).verdict, Verdict::Go);
        let d = gate_testing(ImpactBand::High, 1.0, 200_000.0, 20.5, &t);
        assert_eq!(d.verdict, Verdict::Go);
        assert!(gate_testing(ImpactBand::High, 1.0, 10.0, 0.0, &t).verdict == Verdict::Stop);
        assert!(gate_testing(ImpactBand::High, 1.0, 50.0, 0.0, &t).verdict == Verdict::Go);
        assert_eq!(gate_testing(ImpactBand::Low, 0.1, 1e9, 1.0, &t).verdict, Verdict::Stop);
    }

    #[test]
    fn short_circuit() {
        let t = GateThresholds::default();
        assert_eq!(run_gates(ImpactBand::Low, 1.0, 0.0, Some(1.0), &t).len(), 1);
        assert_eq!(run_gates(ImpactBand::High, 0.0, 1e6, Some(1.0), &t).len(), 2);
        let all = run_gates(ImpactBand::High, 1.0, 1e6, Some(1.0), &t);
        assert_eq!(all.len(), 3);
        assert!(cleared_for_inspection(&all));
        assert!(!cleared_for_inspection(&run_gates(ImpactBand::High, 1.0, 1e6, None, &t)));
    }
}
