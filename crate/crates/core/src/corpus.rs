//! Synthetic workbooks with planted defects and a ground-truth manifest.
//!
//! Layout of the generated `Model` sheet, per block:
//!
//! ```text
//! row t        A: "Block n"  B..: column headers
//! rows t+1..   A: item label  B, C: inputs  D..L: copied formulas
//! row t+n+1    A: "Total"     B..L: SUM over the data rows (named OUTPUT_n)
//! ```
//!
//! Column L+1 is an empty gutter, L+2 is scratch space and L+3 is a hidden
//! helper column. A single input on the `Inputs` sheet is named `Growth`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::a1::col_to_letters;
use crate::address::CellPos;
use crate::inspection::RuleId;
use crate::workbook::{save_canonical, CellValue, Features, Sheet, Workbook, WorkbookSettings};
use crate::formula::ErrorKind;

pub const MAX_COLS: u32 = 200;
pub const MAX_ROWS: u32 = 100_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanPattern {
    /// Running total down each column.
    #[default]
    Chain,
    /// Each row scales the row above plus an input.
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectRequest {
    pub rule_id: RuleId,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    pub rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Data rows per block.
    pub rows: u32,
    /// Last model column, counting the label and two input columns.
    pub cols: u32,
    #[serde(default = "one")]
    pub blocks: u32,
    #[serde(default)]
    pub clean_pattern: CleanPattern,
    #[serde(default)]
    pub defects: Vec<DefectRequest>,
}

fn one() -> u32 {
    1
}

impl SeedSpec {
    pub fn clean(rng_seed: u64, rows: u32, cols: u32) -> Self {
        SeedSpec {
            rng_seed,
            id: None,
            rows,
            cols,
            blocks: 1,
            clean_pattern: CleanPattern::Chain,
            defects: Vec::new(),
        }
    }

    pub fn workbook_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| format!("gen-{}", self.rng_seed))
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        let bad = |m: String| Err(GenerateError::InvalidSpec(m));
        if !(4..=MAX_COLS).contains(&self.cols) {
            return bad(format!("cols must be between 4 and {MAX_COLS}"));
        }
        if self.rows < 1 || u64::from(self.rows + 3) * u64::from(self.blocks) > u64::from(MAX_ROWS) {
            return bad(format!("rows x blocks must fit within {MAX_ROWS} sheet rows"));
        }
        if self.blocks < 1 {
            return bad("blocks must be at least 1".into());
        }
        if let Some(id) = &self.id {
            if id.is_empty() || id.contains(['/', '\\']) {
                return bad(format!("id {id:?} is not usable as a file stem"));
            }
        }
        for d in &self.defects {
            if d.count < 1 {
                return bad(format!("count for {} must be at least 1", d.rule_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerateError {
    #[error("invalid seed spec: {0}")]
    InvalidSpec(String),
    #[error("cannot plant {rule}: {reason}")]
    Unplantable { rule: RuleId, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlantedDefect {
    pub sheet: String,
    pub cell: CellPos,
    pub rule_id: RuleId,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub workbook: String,
    pub rng_seed: u64,
    pub defects: Vec<PlantedDefect>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub workbook: Workbook,
    pub canonical: String,
    pub truth: GroundTruth,
}

const MODEL: &str = "Model";
const INPUTS: &str = "Inputs";
const GROWTH: &str = "Growth";
const LITERALS: [&str; 5] = ["1.175", "0.2", "12", "365", "2.5"];

/// Where a defect kind can be planted.
#[derive(Clone, Copy, PartialEq)]
enum Site {
    /// First or last data row of a formula column.
    EdgeFormula,
    /// Data row with copies of the same formula directly above and below.
    MidFormula,
    Label,
    Input,
    Scratch,
}

fn site_of(rule: RuleId) -> Site {
    use RuleId::*;
    match rule {
        PatternBreak | FormulaOverwrite => Site::MidFormula,
        ErrorCell => Site::Label,
        TextNumber => Site::Input,
        UnusedInput | NoDependents => Site::Scratch,
        _ => Site::EdgeFormula,
    }
}

struct Layout {
    rows: u32,
    cols: u32,
    blocks: u32,
}

impl Layout {
    fn top(&self, b: u32) -> u32 {
        1 + b * (self.rows + 3)
    }
    fn first(&self, b: u32) -> u32 {
        self.top(b) + 1
    }
    fn last(&self, b: u32) -> u32 {
        self.top(b) + self.rows
    }
    fn total(&self, b: u32) -> u32 {
        self.last(b) + 1
    }
    fn gutter(&self) -> u32 {
        self.cols + 1
    }
    fn scratch(&self) -> u32 {
        self.cols + 2
    }
    fn helper(&self) -> u32 {
        self.cols + 3
    }

    /// (block, row, col) candidates for a site kind, in a fixed order.
    fn sites(&self, site: Site, rule: RuleId) -> Vec<(u32, u32, u32)> {
        let mut out = Vec::new();
        for b in 0..self.blocks {
            let (f, l) = (self.first(b), self.last(b));
            match site {
                Site::EdgeFormula => {
                    if rule == RuleId::BlockRef && self.rows < 2 {
                        continue;
                    }
                    let rows: Vec<u32> = if f == l { vec![f] } else { vec![f, l] };
                    for r in rows {
                        for c in 4..=self.cols {
                            out.push((b, r, c));
                        }
                    }
                }
                Site::MidFormula => {
                    for r in (f + 2)..l {
                        for c in 4..=self.cols {
                            out.push((b, r, c));
                        }
                    }
                }
                Site::Label => out.extend((f..=l).map(|r| (b, r, 1))),
                Site::Input => {
                    for r in f..=l {
                        out.push((b, r, 2));
                        out.push((b, r, 3));
                    }
                }
                Site::Scratch => out.extend((f..=l).map(|r| (b, r, self.scratch()))),
            }
        }
        out
    }
}

/// Pieces of a data-row formula: `prev` is the cell above in the same
/// column, `input` the row's input term and `growth` the scaling term.
struct Parts {
    prev: Option<String>,
    input: String,
    growth: String,
}

fn assemble(pattern: CleanPattern, p: &Parts) -> String {
    match (&p.prev, pattern) {
        (None, _) => format!("={}*{}", p.input, p.growth),
        (Some(prev), CleanPattern::Chain) => format!("={prev}+{}*{}", p.input, p.growth),
        (Some(prev), CleanPattern::Ratio) => format!("=({prev}+{})*{}", p.input, p.growth),
    }
}

fn input_col(pattern: CleanPattern) -> &'static str {
    match pattern {
        CleanPattern::Chain => "B",
        CleanPattern::Ratio => "C",
    }
}

fn clean_parts(pattern: CleanPattern, col: u32, row: u32, first: u32) -> Parts {
    Parts {
        prev: (row > first).then(|| format!("{}{}", col_to_letters(col), row - 1)),
        input: format!("{}{row}", input_col(pattern)),
        growth: GROWTH.to_string(),
    }
}

pub fn generate(spec: &SeedSpec) -> Result<Generated, GenerateError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let lay = Layout { rows: spec.rows, cols: spec.cols, blocks: spec.blocks };
    let pattern = spec.clean_pattern;

    let mut model = Sheet::new(MODEL);
    let mut names = BTreeMap::new();
    let last_letters = col_to_letters(lay.cols);
    for b in 0..lay.blocks {
        let (top, f, l, t) = (lay.top(b), lay.first(b), lay.last(b), lay.total(b));
        model.set(CellPos::new(top, 1), CellValue::Text(format!("Block {}", b + 1)));
        for c in 2..=lay.cols {
            let kind = if c <= 3 { "Input" } else { "Calc" };
            model.set(CellPos::new(top, c), CellValue::Text(format!("{kind} {}", col_to_letters(c))));
        }
        for r in f..=l {
            model.set(CellPos::new(r, 1), CellValue::Text(format!("Item {}", r - f + 1)));
            for c in 2..=3 {
                let v = rng.random_range(10..1000) as f64;
                model.set(CellPos::new(r, c), CellValue::Number(v));
            }
            for c in 4..=lay.cols {
                let src = assemble(pattern, &clean_parts(pattern, c, r, f));
                model.set(CellPos::new(r, c), CellValue::formula(&src));
            }
        }
        model.set(CellPos::new(t, 1), CellValue::Text("Total".into()));
        for c in 2..=lay.cols {
            let x = col_to_letters(c);
            model.set(CellPos::new(t, c), CellValue::formula(&format!("=SUM({x}{f}:{x}{l})")));
        }
        names.insert(format!("OUTPUT_{}", b + 1), format!("{MODEL}!$B${t}:${last_letters}${t}"));
    }
    model.hidden_cols.insert(lay.helper());

    let mut inputs = Sheet::new(INPUTS);
    inputs.set(CellPos::new(1, 1), CellValue::Text(GROWTH.into()));
    let growth = f64::from(rng.random_range(1..20u32)) / 100.0;
    inputs.set(CellPos::new(1, 2), CellValue::Number(growth));
    names.insert(GROWTH.to_string(), format!("{INPUTS}!$B$1"));

    let mut planted: Vec<PlantedDefect> = Vec::new();
    let mut taken: Vec<(u32, u32)> = Vec::new();
    for req in &spec.defects {
        let site = site_of(req.rule_id);
        let mut candidates = lay.sites(site, req.rule_id);
        candidates.shuffle(&mut rng);
        let mut need = req.count;
        for (b, r, c) in candidates {
            if need == 0 {
                break;
            }
            if taken.iter().any(|&(tr, tc)| tr.abs_diff(r) < 3 && tc.abs_diff(c) < 3) {
                continue;
            }
            let detail = plant(&mut model, &lay, pattern, req.rule_id, b, r, c, &mut rng);
            taken.push((r, c));
            planted.push(PlantedDefect {
                sheet: MODEL.to_string(),
                cell: CellPos::new(r, c),
                rule_id: req.rule_id,
                detail,
            });
            need -= 1;
        }
        if need > 0 {
            return Err(GenerateError::Unplantable {
                rule: req.rule_id,
                reason: format!("{need} of {} instances have no free site on this grid", req.count),
            });
        }
    }
    planted.sort();

    let id = spec.workbook_id();
    let workbook = Workbook::from_parts(
        id.clone(),
        vec![model, inputs],
        names,
        Vec::new(),
        WorkbookSettings::default(),
        Features::default(),
    )
    .expect("generated parts are valid");
    let canonical = save_canonical(&workbook);
    Ok(Generated {
        workbook,
        canonical,
        truth: GroundTruth { workbook: id, rng_seed: spec.rng_seed, defects: planted },
    })
}

#[allow(clippy::too_many_arguments)]
fn plant(
    model: &mut Sheet,
    lay: &Layout,
    pattern: CleanPattern,
    rule: RuleId,
    block: u32,
    r: u32,
    c: u32,
    rng: &mut ChaCha8Rng,
) -> String {
    use RuleId::*;
    let pos = CellPos::new(r, c);
    let (f, l) = (lay.first(block), lay.last(block));
    let mut parts = clean_parts(pattern, c, r, f);
    let set_formula = |model: &mut Sheet, parts: &Parts| {
        let src = assemble(pattern, parts);
        model.set(pos, CellValue::formula(&src));
        src
    };
    match rule {
        ErrorCell => {
            model.set(pos, CellValue::Error(ErrorKind::NA));
            "label replaced by #N/A".into()
        }
        TextNumber => {
            let n = match model.get(pos) {
                Some(CellValue::Number(n)) => *n,
                _ => 0.0,
            };
            let text = format!("{n}");
            model.set(pos, CellValue::Text(text.clone()));
            format!("input stored as text {text:?}")
        }
        UnusedInput => {
            let v = rng.random_range(10..1000) as f64;
            model.set(pos, CellValue::Number(v));
            format!("stray number {v}")
        }
        NoDependents => {
            let src = format!("={}{r}*{GROWTH}", input_col(pattern));
            model.set(pos, CellValue::formula(&src));
            format!("unused formula {src}")
        }
        FormulaOverwrite => {
            let v = rng.random_range(10..1000) as f64;
            model.set(pos, CellValue::Number(v));
            format!("copy replaced by number {v}")
        }
        PatternBreak => {
            parts.input = match pattern {
                CleanPattern::Chain => format!("C{r}"),
                CleanPattern::Ratio => format!("B{r}"),
            };
            set_formula(model, &parts)
        }
        ConstInFormula => {
            let lit = LITERALS[rng.random_range(0..LITERALS.len())];
            parts.growth = format!("{GROWTH}*{lit}");
            set_formula(model, &parts)
        }
        AbsRef => {
            parts.input = format!("${}", parts.input);
            set_formula(model, &parts)
        }
        NamedRangeLookup => {
            parts.growth = format!("INDEX({GROWTH},1)");
            set_formula(model, &parts)
        }
        ErrorRef => {
            parts.growth = "Growht".into();
            set_formula(model, &parts)
        }
        BlankRef => {
            parts.growth = format!("{GROWTH}+{}{r}", col_to_letters(lay.gutter()));
            set_formula(model, &parts)
        }
        HiddenRef => {
            let h = CellPos::new(r, lay.helper());
            if model.get(h).is_none() {
                let v = rng.random_range(10..1000) as f64;
                model.set(h, CellValue::Number(v));
            }
            parts.growth = format!("{GROWTH}+{}{r}", col_to_letters(lay.helper()));
            set_formula(model, &parts)
        }
        ExternalLink => {
            parts.growth = format!("[Rates.xlsx]{INPUTS}!B1");
            set_formula(model, &parts)
        }
        HighRiskFunction => {
            parts.input = format!("NPV({GROWTH},B{r}:C{r})");
            set_formula(model, &parts)
        }
        BlockRef => {
            let (a, b) = if r == f { (r, r + 1) } else { (r - 1, r) };
            debug_assert!(b <= l);
            parts.input = format!("SUM(B{a}:C{b})");
            set_formula(model, &parts)
        }
        NoPrecedent => {
            model.set(pos, CellValue::formula("=1+1"));
            "=1+1".into()
        }
        UnparsedFormula => {
            model.set(pos, CellValue::formula("={1,2}"));
            "={1,2}".into()
        }
    }
}
