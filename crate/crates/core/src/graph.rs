//! Direct precedent/dependent edges between cells.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::Serialize;

use crate::address::{CellAddress, CellPos};
use crate::formula::{self, CellRef, Expr, RangeRef, RefItem};
use crate::workbook::{resolve_link_index, CellValue, Workbook};

pub const DEFAULT_RANGE_CAP: u64 = 4096;

/// A rectangle on one sheet, inclusive on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RangeNode {
    pub sheet: usize,
    pub top: u32,
    pub left: u32,
    pub bottom: u32,
    pub right: u32,
}

impl RangeNode {
    pub fn contains(&self, a: CellAddress) -> bool {
        a.sheet == self.sheet
            && (self.top..=self.bottom).contains(&a.row)
            && (self.left..=self.right).contains(&a.col)
    }

    pub fn area(&self) -> u64 {
        u64::from(self.bottom - self.top + 1) * u64::from(self.right - self.left + 1)
    }

    /// Members in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = CellAddress> + '_ {
        (self.top..=self.bottom)
            .flat_map(move |r| (self.left..=self.right).map(move |c| CellAddress::new(self.sheet, r, c)))
    }

    pub fn a1(&self) -> String {
        format!(
            "{}:{}",
            CellPos::new(self.top, self.left),
            CellPos::new(self.bottom, self.right)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Cell { cell: CellAddress },
    /// A range above the expansion cap, kept whole.
    Range { range: RangeNode },
    External {
        workbook: String,
        sheet: Option<String>,
        reference: String,
    },
    /// A name that does not resolve, a name nested in a name, or a
    /// reference to a sheet the workbook does not have.
    Dangling { text: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CrossLinks {
    /// Distinct (formula cell, other sheet) pairs.
    pub inter_sheet: Vec<(CellAddress, usize)>,
    /// Distinct (formula cell, external workbook) pairs.
    pub external: Vec<(CellAddress, String)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlankPrecedents {
    pub cells: Vec<CellAddress>,
    /// Ranges too large to enumerate.
    pub too_large: Vec<RangeNode>,
}

#[derive(Debug, Clone)]
pub struct DepGraph {
    range_cap: u64,
    precedents: BTreeMap<CellAddress, Vec<Target>>,
    reverse: HashMap<CellAddress, Vec<CellAddress>>,
    large: Vec<(RangeNode, CellAddress)>,
    empty: Vec<Target>,
}

pub fn build_graph(wb: &Workbook) -> DepGraph {
    build_graph_with_cap(wb, DEFAULT_RANGE_CAP)
}

pub fn build_graph_with_cap(wb: &Workbook, range_cap: u64) -> DepGraph {
    let resolver = Resolver::new(wb, range_cap);
    let mut precedents = BTreeMap::new();
    let mut reverse: HashMap<CellAddress, Vec<CellAddress>> = HashMap::new();
    let mut large = Vec::new();
    for (addr, f) in wb.formula_cells() {
        let Some(ast) = f.ast() else { continue };
        let targets = resolver.targets(ast, addr.sheet);
        for t in &targets {
            match t {
                Target::Cell { cell } => reverse.entry(*cell).or_default().push(addr),
                Target::Range { range } => large.push((*range, addr)),
                _ => {}
            }
        }
        precedents.insert(addr, targets);
    }
    for deps in reverse.values_mut() {
        deps.sort_unstable();
        deps.dedup();
    }
    DepGraph {
        range_cap,
        precedents,
        reverse,
        large,
        empty: Vec::new(),
    }
}

struct Resolver<'w> {
    wb: &'w Workbook,
    cap: u64,
}

impl<'w> Resolver<'w> {
    fn new(wb: &'w Workbook, cap: u64) -> Self {
        Resolver { wb, cap }
    }

    fn targets(&self, ast: &Expr, host_sheet: usize) -> Vec<Target> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut push = |t: Target| {
            if seen.insert(t.clone()) {
                out.push(t);
            }
        };
        for r in formula::refs_of(ast) {
            match r {
                RefItem::Cell(c) => self.cell(c, host_sheet, &mut push),
                RefItem::Range(rr) => self.range(rr, host_sheet, &mut push),
                RefItem::Name(n) => {
                    if let Some(book) = &n.workbook {
                        push(Target::External {
                            workbook: resolve_link_index(book, self.wb.link_records()),
                            sheet: None,
                            reference: n.name.clone(),
                        });
                        continue;
                    }
                    let Some((_, text)) = self.wb.defined_name(&n.name) else {
                        push(Target::Dangling { text: n.name.clone() });
                        continue;
                    };
                    let def = text.strip_prefix('=').unwrap_or(text);
                    let Ok(def_ast) = formula::parse(&format!("={def}")) else {
                        push(Target::Dangling { text: n.name.clone() });
                        continue;
                    };
                    let inner = formula::refs_of(&def_ast);
                    if inner.is_empty() && matches!(def_ast.strip_parens(), Expr::Error(_)) {
                        push(Target::Dangling { text: n.name.clone() });
                        continue;
                    }
                    for ir in inner {
                        match ir {
                            RefItem::Cell(c) => self.cell(c, host_sheet, &mut push),
                            RefItem::Range(rr) => self.range(rr, host_sheet, &mut push),
                            RefItem::Name(nested) => push(Target::Dangling {
                                text: format!("{}>{}", n.name, nested.name),
                            }),
                        }
                    }
                }
            }
        }
        out
    }

    /// Resolve a sheet qualifier to an index, or to the external/dangling
    /// target the reference denotes instead.
    fn sheet_of(&self, sheet: Option<&str>, book: Option<&str>, host: usize, text: String) -> Result<usize, Target> {
        if let Some(b) = book {
            return Err(Target::External {
                workbook: resolve_link_index(b, self.wb.link_records()),
                sheet: sheet.map(str::to_string),
                reference: text,
            });
        }
        match sheet {
            None => Ok(host),
            Some(s) => self.wb.sheet_index(s).ok_or_else(|| Target::Dangling {
                text: format!("{s}!{text}"),
            }),
        }
    }

    fn cell(&self, c: &CellRef, host: usize, push: &mut impl FnMut(Target)) {
        let text = c.coord.to_string();
        match self.sheet_of(c.sheet.as_deref(), c.workbook.as_deref(), host, text) {
            Ok(sheet) => push(Target::Cell {
                cell: CellAddress::new(sheet, c.coord.row, c.coord.col),
            }),
            Err(t) => push(t),
        }
    }

    fn range(&self, r: &RangeRef, host: usize, push: &mut impl FnMut(Target)) {
        let text = format!("{}:{}", r.start.coord, r.end.coord);
        match self.sheet_of(r.sheet(), r.workbook(), host, text) {
            Ok(sheet) => {
                let (top, left, bottom, right) = r.bounds();
                let node = RangeNode { sheet, top, left, bottom, right };
                if node.area() <= self.cap {
                    for cell in node.cells() {
                        push(Target::Cell { cell });
                    }
                } else {
                    push(Target::Range { range: node });
                }
            }
            Err(t) => push(t),
        }
    }
}

impl DepGraph {
    pub fn range_cap(&self) -> u64 {
        self.range_cap
    }

    /// Formula cells with a parsed AST, in address order.
    pub fn formula_cells(&self) -> impl Iterator<Item = CellAddress> + '_ {
        self.precedents.keys().copied()
    }

    pub fn has_entry(&self, addr: CellAddress) -> bool {
        self.precedents.contains_key(&addr)
    }

    /// Resolved targets of the formula at `addr` in source order; empty for
    /// non-formula cells.
    pub fn precedents(&self, addr: CellAddress) -> &[Target] {
        self.precedents.get(&addr).unwrap_or(&self.empty)
    }

    /// Formula cells that reference `addr` directly, sorted.
    pub fn dependents(&self, addr: CellAddress) -> Vec<CellAddress> {
        let mut out = self.reverse.get(&addr).cloned().unwrap_or_default();
        let before = out.len();
        out.extend(
            self.large
                .iter()
                .filter(|(r, _)| r.contains(addr))
                .map(|(_, from)| *from),
        );
        if out.len() != before {
            out.sort_unstable();
            out.dedup();
        }
        out
    }

    pub fn has_dependents(&self, addr: CellAddress) -> bool {
        self.reverse.contains_key(&addr) || self.large.iter().any(|(r, _)| r.contains(addr))
    }

    pub fn blank_precedents(&self, wb: &Workbook, addr: CellAddress) -> BlankPrecedents {
        let mut out = BlankPrecedents::default();
        for t in self.precedents(addr) {
            match t {
                Target::Cell { cell } => {
                    if wb.value(*cell).is_blank() {
                        out.cells.push(*cell);
                    }
                }
                Target::Range { range } => out.too_large.push(*range),
                _ => {}
            }
        }
        out
    }

    /// Strongly connected components of size two or more, plus self-loops.
    /// Members are sorted; cycles are ordered by their smallest member.
    pub fn cycles(&self, wb: &Workbook) -> Vec<Vec<CellAddress>> {
        let nodes: Vec<CellAddress> = self.precedents.keys().copied().collect();
        let index: HashMap<CellAddress, usize> =
            nodes.iter().enumerate().map(|(i, a)| (*a, i)).collect();
        let mut self_loop = vec![false; nodes.len()];
        let adj: Vec<Vec<usize>> = nodes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let mut next = Vec::new();
                for t in self.precedents(*a) {
                    match t {
                        Target::Cell { cell } => {
                            if let Some(&j) = index.get(cell) {
                                next.push(j);
                            }
                        }
                        Target::Range { range } => {
                            if let Some(sheet) = wb.sheet(range.sheet) {
                                for (pos, v) in sheet.cells_in(range.top, range.left, range.bottom, range.right) {
                                    if v.as_formula().is_some() {
                                        if let Some(&j) = index.get(&CellAddress::at(range.sheet, pos)) {
                                            next.push(j);
                                        }
                                    }
                                }
                            }
                        }
                        _ => {}
                    }
                }
                if next.contains(&i) {
                    self_loop[i] = true;
                }
                next
            })
            .collect();

        let mut out: Vec<Vec<CellAddress>> = tarjan(&adj)
            .into_iter()
            .filter(|c| c.len() > 1 || self_loop[c[0]])
            .map(|c| {
                let mut members: Vec<CellAddress> = c.into_iter().map(|i| nodes[i]).collect();
                members.sort_unstable();
                members
            })
            .collect();
        out.sort();
        out
    }

    pub fn cross_links(&self) -> CrossLinks {
        let mut inter = BTreeSet::new();
        let mut ext = BTreeSet::new();
        for (from, targets) in &self.precedents {
            for t in targets {
                match t {
                    Target::Cell { cell } if cell.sheet != from.sheet => {
                        inter.insert((*from, cell.sheet));
                    }
                    Target::Range { range } if range.sheet != from.sheet => {
                        inter.insert((*from, range.sheet));
                    }
                    Target::External { workbook, .. } => {
                        ext.insert((*from, workbook.clone()));
                    }
                    _ => {}
                }
            }
        }
        CrossLinks {
            inter_sheet: inter.into_iter().collect(),
            external: ext.into_iter().collect(),
        }
    }

    /// True when the target covers `addr`.
    pub fn covers(target: &Target, addr: CellAddress) -> bool {
        match target {
            Target::Cell { cell } => *cell == addr,
            Target::Range { range } => range.contains(addr),
            _ => false,
        }
    }
}

/// Iterative Tarjan; returns components in completion order.
fn tarjan(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0;
    let mut work: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        work.push((root, 0));
        while let Some(&mut (v, ref mut next)) = work.last_mut() {
            if *next == 0 {
                index[v] = counter;
                low[v] = counter;
                counter += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = adj[v].get(*next) {
                *next += 1;
                if index[w] == UNSEEN {
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("on stack");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comps.push(comp);
            }
        }
    }
    comps
}

/// Value-level helper shared by inspection: does `target` touch a hidden sheet,
/// row or column?
pub fn touches_hidden(wb: &Workbook, target: &Target) -> bool {
    match target {
        Target::Cell { cell } => wb
            .sheet(cell.sheet)
            .is_some_and(|s| s.hidden || s.is_hidden_pos(cell.pos())),
        Target::Range { range } => wb.sheet(range.sheet).is_some_and(|s| {
            s.hidden
                || s.hidden_rows.range(range.top..=range.bottom).next().is_some()
                || s.hidden_cols.range(range.left..=range.right).next().is_some()
        }),
        _ => false,
    }
}

/// True when the value at `target` is (or caches) an error.
pub fn target_has_error(wb: &Workbook, target: &Target) -> bool {
    match target {
        Target::Cell { cell } => wb.value(*cell).error_kind().is_some(),
        Target::Range { range } => wb.sheet(range.sheet).is_some_and(|s| {
            s.cells_in(range.top, range.left, range.bottom, range.right)
                .any(|(_, v): (CellPos, &CellValue)| v.error_kind().is_some())
        }),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workbook::load_canonical;

    fn book(cells: &str) -> Workbook {
        load_canonical(&format!(
            r##"{{"format": 1, "names": {{"Rate": "S!$A$1", "Nested": "Rate*2", "Bad": "#REF!"}},
                "sheets": [{{"name": "S", "cells": {{{cells}}}}}, {{"name": "T", "cells": {{}}}}]}}"##
        ))
        .unwrap()
    }

    fn a(s: &str) -> CellAddress {
        CellAddress::from_a1(0, s).unwrap()
    }

    #[test]
    fn direct_edges() {
        let w = book(r#""B2": {"f": "=A1+1"}, "A3": {"n": 1}"#);
        let g = build_graph(&w);
        assert_eq!(g.precedents(a("B2")), &[Target::Cell { cell: a("A1") }]);
        assert_eq!(g.dependents(a("A1")), vec![a("B2")]);
        assert!(g.precedents(a("A3")).is_empty());
        assert!(g.dependents(a("A3")).is_empty());
        assert_eq!(g.blank_precedents(&w, a("B2")).cells, vec![a("A1")]);
    }

    #[test]
    fn chain_is_direct_only() {
        let w = book(r#""A1": {"n": 1}, "B1": {"f": "=A1"}, "C1": {"f": "=B1"}"#);
        let g = build_graph(&w);
        assert_eq!(g.dependents(a("A1")), vec![a("B1")]);
        assert!(g.cycles(&w).is_empty());
    }

    #[test]
    fn range_membership() {
        let w = book(r#""C1": {"f": "=SUM(A1:B7)"}"#);
        let g = build_graph(&w);
        assert_eq!(g.precedents(a("C1")).len(), 14);
        for r in 1..=7 {
            for c in 1..=2 {
                assert_eq!(g.dependents(CellAddress::new(0, r, c)), vec![a("C1")]);
            }
        }
        assert!(g.dependents(a("A8")).is_empty());
        let small = build_graph_with_cap(&w, 10);
        assert_eq!(
            small.precedents(a("C1")),
            &[Target::Range { range: RangeNode { sheet: 0, top: 1, left: 1, bottom: 7, right: 2 } }]
        );
        assert_eq!(small.dependents(a("B7")), vec![a("C1")]);
        assert_eq!(small.blank_precedents(&w, a("C1")).too_large.len(), 1);
    }

    #[test]
    fn names_resolve_one_level() {
        let w = book(r#""B1": {"f": "=Rate*2"}, "B2": {"f": "=Nested+1"}, "B3": {"f": "=Nope+Bad"}"#);
        let g = build_graph(&w);
        assert_eq!(g.precedents(a("B1")), &[Target::Cell { cell: a("A1") }]);
        assert_eq!(g.precedents(a("B2")), &[Target::Dangling { text: "Nested>Rate".into() }]);
        assert_eq!(
            g.precedents(a("B3")),
            &[Target::Dangling { text: "Nope".into() }, Target::Dangling { text: "Bad".into() }]
        );
    }

    #[test]
    fn links() {
        let w = book(r#""A1": {"f": "=T!A1+T!B2+[Other.xlsx]Sheet1!A1"}, "A2": {"f": "=Missing!A1"}"#);
        let g = build_graph(&w);
        let l = g.cross_links();
        assert_eq!(l.inter_sheet, vec![(a("A1"), 1)]);
        assert_eq!(l.external, vec![(a("A1"), "Other.xlsx".to_string())]);
        assert_eq!(
            g.precedents(a("A2")),
            &[Target::Dangling { text: "Missing!A1".into() }]
        );
        let empty = book("");
        assert_eq!(build_graph(&empty).cross_links(), CrossLinks::default());
    }

    #[test]
    fn cycles_found() {
        let w = book(r#""A1": {"f": "=B1"}, "B1": {"f": "=A1"}, "C5": {"f": "=C5"}, "D1": {"f": "=A1"}"#);
        let g = build_graph(&w);
        assert_eq!(g.cycles(&w), vec![vec![a("A1"), a("B1")], vec![a("C5")]]);
    }

    #[test]
    fn long_chain_does_not_overflow() {
        let cells: Vec<String> = (2..=20000)
            .map(|r| format!(r#""A{r}": {{"f": "=A{}"}}"#, r - 1))
            .collect();
        let w = book(&format!(r#""A1": {{"f": "=A20000"}}, {}"#, cells.join(",")));
        let g = build_graph(&w);
        let c = g.cycles(&w);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].len(), 20000);
    }
}
