//! Reader for the OOXML spreadsheet container. Only the parts the analysis
//! needs are read; everything else in the package is ignored.

use std::collections::{BTreeMap, HashMap};
use std::io::{Cursor, Read};

use quick_xml::events::Event;
use quick_xml::{Reader, XmlVersion};
use zip::ZipArchive;

use super::model::*;
use super::WorkbookError;
use crate::address::CellPos;
use crate::formula::{self, ErrorKind, MAX_COL, MAX_ROW};

/// A small element tree. Sheets are loaded whole, which keeps the readers
/// below declarative.
#[derive(Debug, Default)]
struct Node {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<Node>,
    text: String,
}

impl Node {
    fn attr(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn flag(&self, key: &str) -> Option<bool> {
        self.attr(key).map(|v| v == "1" || v.eq_ignore_ascii_case("true"))
    }

    fn child(&self, name: &str) -> Option<&Node> {
        self.children.iter().find(|c| c.name == name)
    }

    fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Node> + 'a {
        self.children.iter().filter(move |c| c.name == name)
    }

    /// Concatenated text of every `t` element below this node, skipping
    /// phonetic runs.
    fn rich_text(&self) -> String {
        fn collect(n: &Node, out: &mut String) {
            for c in &n.children {
                match c.name.as_str() {
                    "t" => out.push_str(&c.text),
                    "rPh" | "phoneticPr" => {}
                    _ => collect(c, out),
                }
            }
        }
        let mut out = String::new();
        collect(self, &mut out);
        out
    }
}

fn malformed(part: &str, message: impl ToString) -> WorkbookError {
    WorkbookError::MalformedXml {
        part: part.to_string(),
        message: message.to_string(),
    }
}

fn local(name: &str) -> &str {
    name.rsplit(':').next().unwrap_or(name)
}

fn resolve_entity(name: &str) -> Option<char> {
    match name {
        "amp" => Some('&'),
        "lt" => Some('<'),
        "gt" => Some('>'),
        "quot" => Some('"'),
        "apos" => Some('\''),
        _ => None,
    }
}

fn parse_xml(part: &str, text: &str) -> Result<Node, WorkbookError> {
    let mut reader = Reader::from_str(text);
    let mut stack: Vec<Node> = vec![Node::default()];
    let open = |e: &quick_xml::events::BytesStart<'_>| -> Result<Node, WorkbookError> {
        let mut node = Node {
            name: local(e.name().0).to_string(),
            ..Node::default()
        };
        for a in e.attributes() {
            let a = a.map_err(|err| malformed(part, err))?;
            let v = a
                .normalized_value(XmlVersion::Implicit1_0)
                .map_err(|err| malformed(part, err))?;
            node.attrs.push((local(a.key.0).to_string(), v.into_owned()));
        }
        Ok(node)
    };
    loop {
        let ev = reader.read_event().map_err(|e| {
            malformed(part, format!("{e} at byte {}", reader.error_position()))
        })?;
        match ev {
            Event::Start(e) => stack.push(open(&e)?),
            Event::Empty(e) => {
                let node = open(&e)?;
                stack.last_mut().expect("root").children.push(node);
            }
            Event::End(_) => {
                if stack.len() < 2 {
                    return Err(malformed(part, "unbalanced end tag"));
                }
                let node = stack.pop().expect("checked");
                stack.last_mut().expect("root").children.push(node);
            }
            Event::Text(t) => stack.last_mut().expect("root").text.push_str(&t.xml10_content()),
            Event::CData(t) => stack.last_mut().expect("root").text.push_str(&t),
            Event::GeneralRef(r) => {
                let c = match r.resolve_char_ref().map_err(|e| malformed(part, e))? {
                    Some(c) => c,
                    None => resolve_entity(&r)
                        .ok_or_else(|| malformed(part, format!("unknown entity &{};", &*r)))?,
                };
                stack.last_mut().expect("root").text.push(c);
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if stack.len() != 1 {
        return Err(malformed(part, "unexpected end of document"));
    }
    let root = stack.pop().expect("root");
    root.children
        .into_iter()
        .next()
        .ok_or_else(|| malformed(part, "no root element"))
}

struct Package {
    zip: ZipArchive<Cursor<Vec<u8>>>,
}

impl Package {
    fn names(&self) -> Vec<String> {
        self.zip.file_names().filter_map(|n| n.ok().map(|n| n.into_owned())).collect()
    }

    fn read(&mut self, name: &str) -> Result<Option<Node>, WorkbookError> {
        let Ok(mut f) = self.zip.by_name(name) else {
            return Ok(None);
        };
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)
            .map_err(|e| malformed(name, format!("cannot decompress: {e}")))?;
        let text = String::from_utf8(bytes).map_err(|_| malformed(name, "part is not UTF-8"))?;
        let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
        parse_xml(name, text).map(Some)
    }

    fn require(&mut self, name: &str) -> Result<Node, WorkbookError> {
        self.read(name)?
            .ok_or_else(|| WorkbookError::MissingPart(name.to_string()))
    }

    /// Relationship id → (type suffix, resolved target) for `part`.
    fn rels(&mut self, part: &str) -> Result<HashMap<String, (String, String)>, WorkbookError> {
        let (dir, file) = match part.rfind('/') {
            Some(i) => (&part[..i + 1], &part[i + 1..]),
            None => ("", part),
        };
        let rels_name = format!("{dir}_rels/{file}.rels");
        let mut out = HashMap::new();
        let Some(root) = self.read(&rels_name)? else {
            return Ok(out);
        };
        for r in root.children_named("Relationship") {
            let (Some(id), Some(target)) = (r.attr("Id"), r.attr("Target")) else {
                continue;
            };
            let kind = r.attr("Type").unwrap_or("").rsplit('/').next().unwrap_or("");
            let resolved = if r.attr("TargetMode") == Some("External") {
                target.to_string()
            } else {
                join_part(dir, target)
            };
            out.insert(id.to_string(), (kind.to_string(), resolved));
        }
        Ok(out)
    }
}

fn join_part(dir: &str, target: &str) -> String {
    let full = match target.strip_prefix('/') {
        Some(abs) => abs.to_string(),
        None => format!("{dir}{target}"),
    };
    let mut parts: Vec<&str> = Vec::new();
    for seg in full.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            s => parts.push(s),
        }
    }
    parts.join("/")
}

/// File name of an external link target, e.g. `file:///C:/x/Other.xlsx` →
/// `Other.xlsx`.
fn link_file_name(target: &str) -> String {
    target
        .rsplit(['/', '\\'])
        .next()
        .unwrap_or(target)
        .replace("%20", " ")
}

/// Load an OOXML workbook from its container bytes.
pub fn load_workbook_file(bytes: &[u8]) -> Result<Workbook, WorkbookError> {
    let zip = ZipArchive::new(Cursor::new(bytes.to_vec()))
        .map_err(|e| WorkbookError::NotAZip(e.to_string()))?;
    let mut pkg = Package { zip };

    let root_rels = pkg.rels("")?;
    let wb_part = root_rels
        .values()
        .find(|(kind, _)| kind == "officeDocument")
        .map(|(_, t)| t.clone())
        .unwrap_or_else(|| "xl/workbook.xml".to_string());
    let wb_xml = pkg.require(&wb_part)?;
    let wb_rels = pkg.rels(&wb_part)?;

    let mut settings = WorkbookSettings::default();
    if let Some(calc) = wb_xml.child("calcPr") {
        if calc.attr("calcMode") == Some("manual") {
            settings.calc_mode = CalcMode::Manual;
        }
        if let Some(v) = calc.flag("calcOnSave") {
            settings.recalc_before_save = v;
        }
        settings.iteration_enabled = calc.flag("iterate").unwrap_or(false);
        if let Some(n) = calc.attr("iterateCount").and_then(|v| v.parse().ok()) {
            settings.max_iterations = n;
        }
        if settings.iteration_enabled && settings.max_iterations == 0 {
            settings.max_iterations = 1;
        }
    }

    let mut names = BTreeMap::new();
    if let Some(dn) = wb_xml.child("definedNames") {
        for n in dn.children_named("definedName") {
            let Some(name) = n.attr("name") else { continue };
            if n.attr("localSheetId").is_some()
                || name.starts_with("_xlnm.")
                || !formula::is_name_token(name)
            {
                continue;
            }
            names.insert(name.to_string(), n.text.trim().to_string());
        }
    }

    let mut link_records = Vec::new();
    if let Some(ext) = wb_xml.child("externalReferences") {
        for r in ext.children_named("externalReference") {
            let Some((_, part)) = r.attr("id").and_then(|id| wb_rels.get(id)).cloned() else {
                continue;
            };
            let target = pkg
                .rels(&part)?
                .into_values()
                .find(|(kind, _)| kind == "externalLinkPath")
                .map(|(_, t)| link_file_name(&t));
            if let Some(t) = target {
                link_records.push(t);
            }
        }
    }

    let shared = match wb_rels.values().find(|(k, _)| k == "sharedStrings") {
        Some((_, part)) => {
            let part = part.clone();
            match pkg.read(&part)? {
                Some(root) => root.children_named("si").map(Node::rich_text).collect(),
                None => Vec::new(),
            }
        }
        None => Vec::new(),
    };

    let mut features = Features::default();
    for name in pkg.names() {
        let lower = name.to_ascii_lowercase();
        if lower.ends_with("vbaproject.bin") {
            features.has_vba = true;
        }
        if lower.starts_with("xl/pivottables/") || lower.starts_with("xl/pivotcache/") {
            features.has_pivot_tables = true;
        }
    }

    let mut sheets = Vec::new();
    if let Some(list) = wb_xml.child("sheets") {
        for s in list.children_named("sheet") {
            let name = s
                .attr("name")
                .ok_or_else(|| malformed(&wb_part, "sheet without a name"))?;
            let (kind, part) = s
                .attr("id")
                .and_then(|id| wb_rels.get(id))
                .cloned()
                .ok_or_else(|| WorkbookError::MissingPart(format!("sheet {name:?}")))?;
            // Chart sheets and dialog sheets have no cells to audit.
            if kind != "worksheet" {
                continue;
            }
            let xml = pkg.require(&part)?;
            let mut sheet = read_sheet(name, &part, &xml, &shared, &mut features)?;
            sheet.hidden = matches!(s.attr("state"), Some("hidden") | Some("veryHidden"));
            sheets.push(sheet);
        }
    }

    Workbook::from_parts(String::new(), sheets, names, link_records, settings, features)
}

/// Parse an A1 reference whose coordinates may exceed the format limits.
fn loose_a1(text: &str) -> Option<(u64, u64)> {
    let text = text.replace('$', "");
    let split = text.find(|c: char| c.is_ascii_digit())?;
    let (letters, digits) = text.split_at(split);
    if letters.is_empty() || !letters.chars().all(|c| c.is_ascii_alphabetic()) || letters.len() > 7 {
        return None;
    }
    let col = letters
        .chars()
        .fold(0u64, |acc, c| acc * 26 + (c.to_ascii_uppercase() as u64 - 'A' as u64 + 1));
    let row = digits.parse().ok()?;
    Some((row, col))
}

fn read_sheet(
    name: &str,
    part: &str,
    xml: &Node,
    shared: &[String],
    features: &mut Features,
) -> Result<Sheet, WorkbookError> {
    let mut sheet = Sheet::new(name);

    if let Some(dim) = xml.child("dimension").and_then(|d| d.attr("ref")) {
        let end = dim.rsplit(':').next().unwrap_or(dim);
        if let Some((row, col)) = loose_a1(end) {
            if row > MAX_ROW as u64 || col > MAX_COL as u64 {
                return Err(WorkbookError::DimensionTooLarge {
                    sheet: name.to_string(),
                    dimension: dim.to_string(),
                });
            }
        }
    }
    sheet.protected = xml
        .child("sheetProtection")
        .and_then(|p| p.flag("sheet"))
        .unwrap_or(false);
    if xml.child("scenarios").is_some() {
        features.has_scenarios = true;
    }
    if xml.child("dataConsolidate").is_some() {
        features.has_data_consolidation = true;
    }
    if let Some(cols) = xml.child("cols") {
        for c in cols.children_named("col") {
            if c.flag("hidden") != Some(true) {
                continue;
            }
            let min: u32 = c.attr("min").and_then(|v| v.parse().ok()).unwrap_or(0);
            let max: u32 = c.attr("max").and_then(|v| v.parse().ok()).unwrap_or(min);
            if min == 0 || max < min || max > MAX_COL {
                return Err(malformed(part, format!("bad hidden column span {min}..{max}")));
            }
            sheet.hidden_cols.extend(min..=max);
        }
    }

    // Shared formula masters: si → (anchor, parsed master or raw text).
    let mut masters: HashMap<String, (CellPos, Result<formula::Expr, String>)> = HashMap::new();
    let Some(data) = xml.child("sheetData") else {
        return Ok(sheet);
    };
    let mut next_row = 1u32;
    for row in data.children_named("row") {
        let r: u32 = match row.attr("r") {
            Some(v) => v
                .parse()
                .ok()
                .filter(|r| (1..=MAX_ROW).contains(r))
                .ok_or_else(|| malformed(part, format!("bad row number {v:?}")))?,
            None => next_row,
        };
        next_row = r + 1;
        if row.flag("hidden") == Some(true) {
            sheet.hidden_rows.insert(r);
        }
        let mut next_col = 1u32;
        for c in row.children_named("c") {
            let pos = match c.attr("r") {
                Some(a) => CellPos::parse(a)
                    .ok_or_else(|| malformed(part, format!("bad cell reference {a:?}")))?,
                None => CellPos::new(r, next_col),
            };
            next_col = pos.col + 1;
            let value = read_cell(c, pos, part, shared, &mut masters)?;
            sheet.set(pos, value);
        }
    }
    Ok(sheet)
}

fn read_scalar(c: &Node, part: &str, shared: &[String]) -> Result<Scalar, WorkbookError> {
    let v = c.child("v").map(|v| v.text.as_str());
    let kind = c.attr("t").unwrap_or("n");
    Ok(match kind {
        "inlineStr" => match c.child("is") {
            Some(is) => Scalar::Text(is.rich_text()),
            None => Scalar::Text(v.unwrap_or("").to_string()),
        },
        _ if v.is_none() => Scalar::Blank,
        "s" => {
            let idx: usize = v
                .unwrap()
                .trim()
                .parse()
                .map_err(|_| malformed(part, "bad shared string index"))?;
            let s = shared
                .get(idx)
                .ok_or_else(|| malformed(part, format!("shared string {idx} out of range")))?;
            Scalar::Text(s.clone())
        }
        "str" | "d" => Scalar::Text(v.unwrap().to_string()),
        "b" => Scalar::Bool(v.unwrap().trim() == "1"),
        "e" => match v.unwrap().trim().parse::<ErrorKind>() {
            Ok(k) => Scalar::Error(k),
            Err(_) => Scalar::Text(v.unwrap().to_string()),
        },
        _ => {
            let t = v.unwrap().trim();
            if t.is_empty() {
                Scalar::Blank
            } else {
                let n: f64 = t
                    .parse()
                    .ok()
                    .filter(|n: &f64| n.is_finite())
                    .ok_or_else(|| malformed(part, format!("bad number {t:?}")))?;
                Scalar::Number(n)
            }
        }
    })
}

fn read_cell(
    c: &Node,
    pos: CellPos,
    part: &str,
    shared: &[String],
    masters: &mut HashMap<String, (CellPos, Result<formula::Expr, String>)>,
) -> Result<CellValue, WorkbookError> {
    let scalar = read_scalar(c, part, shared)?;
    let Some(f) = c.child("f") else {
        return Ok(scalar.into());
    };
    let cached = (scalar != Scalar::Blank).then_some(scalar.clone());
    let text = f.text.trim();
    let source = match f.attr("t") {
        Some("dataTable") => return Ok(scalar.into()),
        Some("shared") => {
            let si = f.attr("si").unwrap_or("").to_string();
            if !text.is_empty() {
                let src = format!("={text}");
                let parsed = formula::parse(&src).map_err(|_| src.clone());
                masters.insert(si, (pos, parsed));
                src
            } else {
                let (anchor, master) = masters
                    .get(&si)
                    .ok_or_else(|| malformed(part, format!("shared formula {si:?} used before its master")))?;
                match master {
                    Ok(ast) => {
                        let dr = pos.row as i64 - anchor.row as i64;
                        let dc = pos.col as i64 - anchor.col as i64;
                        match formula::shift(ast, dr, dc) {
                            Some(moved) => formula::render(&moved),
                            None => "=#REF!".to_string(),
                        }
                    }
                    Err(raw) => raw.clone(),
                }
            }
        }
        _ => {
            if text.is_empty() {
                return Ok(scalar.into());
            }
            format!("={text}")
        }
    };
    Ok(CellValue::Formula(Box::new(Formula::new(&source, cached))))
}
