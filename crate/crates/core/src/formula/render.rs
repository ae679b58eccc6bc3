use std::fmt::Write;

use super::ast::*;
use crate::a1;

/// How cell coordinates are written out.
#[derive(Clone, Copy)]
pub(crate) enum RefStyle {
    A1,
    /// Offsets relative to the host cell (row, col).
    Relative { row: u32, col: u32 },
}

/// Canonical A1 text with a leading `=`.
pub fn render(expr: &Expr) -> String {
    let mut out = String::from("=");
    write_expr(&mut out, expr, 0, RefStyle::A1);
    out
}

pub(crate) fn write_expr(out: &mut String, expr: &Expr, min_prec: u8, style: RefStyle) {
    let wrap = expr.precedence() < min_prec;
    if wrap {
        out.push('(');
    }
    match expr {
        Expr::Number(n) => out.push_str(&n.text),
        Expr::Text(s) => {
            out.push('"');
            out.push_str(&s.replace('"', "\"\""));
            out.push('"');
        }
        Expr::Bool(b) => out.push_str(if *b { "TRUE" } else { "FALSE" }),
        Expr::Error(k) => out.push_str(k.as_str()),
        Expr::Cell(c) => {
            write_qualifier(out, c.sheet.as_deref(), c.workbook.as_deref());
            write_coord(out, c.coord, style);
        }
        Expr::Range(r) => {
            write_qualifier(out, r.sheet(), r.workbook());
            write_coord(out, r.start.coord, style);
            out.push(':');
            write_coord(out, r.end.coord, style);
        }
        Expr::Name(n) => {
            if let Some(book) = &n.workbook {
                let _ = write!(out, "[{book}]!");
            }
            out.push_str(&n.name);
        }
        Expr::Func { name, args } => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_expr(out, a, 0, style);
            }
            out.push(')');
        }
        Expr::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            write_expr(out, lhs, p, style);
            out.push_str(op.symbol());
            write_expr(out, rhs, p + 1, style);
        }
        Expr::Unary { op, operand } => {
            out.push_str(op.symbol());
            write_expr(out, operand, prec::UNARY, style);
        }
        Expr::Percent(inner) => {
            write_expr(out, inner, prec::PERCENT, style);
            out.push('%');
        }
        Expr::Paren(inner) => {
            out.push('(');
            write_expr(out, inner, 0, style);
            out.push(')');
        }
    }
    if wrap {
        out.push(')');
    }
}

fn write_coord(out: &mut String, c: RefCoord, style: RefStyle) {
    match style {
        RefStyle::A1 => {
            let _ = write!(out, "{c}");
        }
        RefStyle::Relative { row, col } => {
            if c.row_abs {
                let _ = write!(out, "R{}", c.row);
            } else {
                let _ = write!(out, "R[{}]", i64::from(c.row) - i64::from(row));
            }
            if c.col_abs {
                let _ = write!(out, "C{}", c.col);
            } else {
                let _ = write!(out, "C[{}]", i64::from(c.col) - i64::from(col));
            }
        }
    }
}

fn write_qualifier(out: &mut String, sheet: Option<&str>, workbook: Option<&str>) {
    match (sheet, workbook) {
        (None, None) => {}
        (Some(s), None) if !sheet_needs_quotes(s) => {
            let _ = write!(out, "{s}!");
        }
        (Some(s), None) => {
            let _ = write!(out, "'{}'!", s.replace('\'', "''"));
        }
        (Some(s), Some(b)) if !sheet_needs_quotes(s) && !b.contains(['\'', ']']) => {
            let _ = write!(out, "[{b}]{s}!");
        }
        (Some(s), Some(b)) => {
            let _ = write!(out, "'[{}]{}'!", b.replace('\'', "''"), s.replace('\'', "''"));
        }
        (None, Some(b)) => {
            let _ = write!(out, "[{b}]!");
        }
    }
}

/// Unquoted sheet names must be plain identifiers that cannot be mistaken for
/// a reference or boolean.
pub fn sheet_needs_quotes(name: &str) -> bool {
    let mut chars = name.chars();
    let plain = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    !plain
        || a1::parse_coord(name).is_some()
        || a1::letters_to_col(name).is_some()
        || name.eq_ignore_ascii_case("TRUE")
        || name.eq_ignore_ascii_case("FALSE")
        || !super::parser::is_name_token(name)
}
