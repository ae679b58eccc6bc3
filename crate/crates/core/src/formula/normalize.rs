use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::render::{write_expr, RefStyle};
use crate::address::CellPos;

/// Host-relative canonical key of a formula. Two cells hold copies of the same
/// formula exactly when their keys are equal.
///
/// Relative axes are written as offsets from the host (`R[-1]C[0]`), absolute
/// axes as coordinates (`R1C1`). Parentheses that precedence makes redundant and
/// unary plus are dropped, so `=+5+5` and `=5+5` share a key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedFormula(String);

impl NormalizedFormula {
    /// Key for a formula that could not be parsed. The host is part of the
    /// key, so such formulas never share a class.
    pub fn raw(source: &str, host: CellPos) -> Self {
        NormalizedFormula(format!("RAW@{host}:{source}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NormalizedFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn normalize(expr: &Expr, host: CellPos) -> NormalizedFormula {
    let canonical = canonicalize(expr);
    let mut out = String::new();
    write_expr(
        &mut out,
        &canonical,
        0,
        RefStyle::Relative {
            row: host.row,
            col: host.col,
        },
    );
    NormalizedFormula(out)
}

fn canonicalize(expr: &Expr) -> Expr {
    expr.map_children(&|e| match e {
        Expr::Paren(inner) => Some(canonicalize(inner)),
        Expr::Unary {
            op: UnaryOp::Plus,
            operand,
        } => Some(canonicalize(operand)),
        _ => None,
    })
}

/// Moves every relative axis by (drow, dcol), as copying the formula would.
/// Returns `None` when a shifted reference falls off the sheet.
pub fn shift(expr: &Expr, drow: i64, dcol: i64) -> Option<Expr> {
    let shift_coord = |c: RefCoord| -> Option<RefCoord> {
        let mut out = c;
        if !c.row_abs {
            let r = i64::from(c.row) + drow;
            if !(1..=i64::from(MAX_ROW)).contains(&r) {
                return None;
            }
            out.row = r as u32;
        }
        if !c.col_abs {
            let k = i64::from(c.col) + dcol;
            if !(1..=i64::from(MAX_COL)).contains(&k) {
                return None;
            }
            out.col = k as u32;
        }
        Some(out)
    };
    Some(match expr {
        Expr::Cell(c) => Expr::Cell(CellRef {
            coord: shift_coord(c.coord)?,
            ..c.clone()
        }),
        Expr::Range(r) => Expr::Range(RangeRef {
            start: CellRef {
                coord: shift_coord(r.start.coord)?,
                ..r.start.clone()
            },
            end: CellRef {
                coord: shift_coord(r.end.coord)?,
                ..r.end.clone()
            },
        }),
        Expr::Func { name, args } => Expr::Func {
            name: name.clone(),
            args: args
                .iter()
                .map(|a| shift(a, drow, dcol))
                .collect::<Option<Vec<_>>>()?,
        },
        Expr::Binary { op, lhs, rhs } => Expr::binary(
            *op,
            shift(lhs, drow, dcol)?,
            shift(rhs, drow, dcol)?,
        ),
        Expr::Unary { op, operand } => Expr::unary(*op, shift(operand, drow, dcol)?),
        Expr::Percent(inner) => Expr::Percent(Box::new(shift(inner, drow, dcol)?)),
        Expr::Paren(inner) => Expr::Paren(Box::new(shift(inner, drow, dcol)?)),
        leaf => leaf.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;

    fn key(src: &str, host: &str) -> String {
        normalize(&parse(src).unwrap(), CellPos::parse(host).unwrap())
            .as_str()
            .to_string()
    }

    #[test]
    fn relative_offsets() {
        assert_eq!(key("=A1", "B2"), "R[-1]C[-1]");
        assert_eq!(key("=A1", "A1"), "R[0]C[0]");
        assert_eq!(key("=C5", "A1"), "R[4]C[2]");
        assert_eq!(key("=$A1+A$1", "B2"), "R[-1]C1+R1C[-1]");
    }

    #[test]
    fn absolute_is_host_independent() {
        assert_eq!(key("=$A$1", "B2"), key("=$A$1", "Z99"));
        assert_eq!(key("=$A$1", "B2"), "R1C1");
    }

    #[test]
    fn copies_share_a_key() {
        assert_eq!(key("=A1+B1", "C1"), key("=B1+C1", "D1"));
        assert_eq!(key("=A1", "B1"), key("=A2", "B2"));
        assert_ne!(key("=A1", "B1"), key("=A1", "B2"));
    }

    #[test]
    fn unary_plus_and_parens_dropped() {
        assert_eq!(key("=+5+5", "A1"), key("=5+5", "A1"));
        assert_eq!(key("=(A1)+((2))", "B1"), key("=A1+2", "B1"));
        assert_ne!(key("=-5+5", "A1"), key("=5+5", "A1"));
        assert_eq!(key("=(1+2)*3", "A1"), "(1+2)*3");
    }

    #[test]
    fn qualifiers_and_names_pass_through() {
        assert_eq!(key("=Data!B2*Rate", "C3"), "Data!R[-1]C[-1]*Rate");
        assert_eq!(key("=SUM(B1:B3)", "B4"), "SUM(R[-3]C[0]:R[-1]C[0])");
    }

    #[test]
    fn shift_moves_only_relative_axes() {
        let e = parse("=A1+$B$2+C$3").unwrap();
        let s = shift(&e, 2, 1).unwrap();
        assert_eq!(crate::formula::render(&s), "=B3+$B$2+D$3");
        assert!(shift(&e, -1, 0).is_none());
    }
}
