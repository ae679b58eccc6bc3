use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Largest row index a worksheet can address.
pub const MAX_ROW: u32 = 1 << 20;
/// Largest column index a worksheet can address.
pub const MAX_COL: u32 = 1 << 14;

/// Error values a cell or literal can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorKind {
    Ref,
    Div0,
    Value,
    Name,
    NA,
    Num,
    Null,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 7] = [
        ErrorKind::Ref,
        ErrorKind::Div0,
        ErrorKind::Value,
        ErrorKind::Name,
        ErrorKind::NA,
        ErrorKind::Num,
        ErrorKind::Null,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Ref => "#REF!",
            ErrorKind::Div0 => "#DIV/0!",
            ErrorKind::Value => "#VALUE!",
            ErrorKind::Name => "#NAME?",
            ErrorKind::NA => "#N/A",
            ErrorKind::Num => "#NUM!",
            ErrorKind::Null => "#NULL!",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

/// One A1 coordinate with per-axis absoluteness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RefCoord {
    pub row: u32,
    pub col: u32,
    pub row_abs: bool,
    pub col_abs: bool,
}

impl RefCoord {
    pub fn relative(row: u32, col: u32) -> Self {
        RefCoord {
            row,
            col,
            row_abs: false,
            col_abs: false,
        }
    }

    pub fn absolute(row: u32, col: u32) -> Self {
        RefCoord {
            row,
            col,
            row_abs: true,
            col_abs: true,
        }
    }

    pub fn has_absolute_axis(&self) -> bool {
        self.row_abs || self.col_abs
    }
}

impl fmt::Display for RefCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.col_abs {
            f.write_str("$")?;
        }
        f.write_str(&crate::a1::col_to_letters(self.col))?;
        if self.row_abs {
            f.write_str("$")?;
        }
        write!(f, "{}", self.row)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellRef {
    pub coord: RefCoord,
    pub sheet: Option<String>,
    pub workbook: Option<String>,
}

impl CellRef {
    pub fn local(coord: RefCoord) -> Self {
        CellRef {
            coord,
            sheet: None,
            workbook: None,
        }
    }
}

/// A rectangular block. Both endpoints carry the same qualifiers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RangeRef {
    pub start: CellRef,
    pub end: CellRef,
}

impl RangeRef {
    pub fn sheet(&self) -> Option<&str> {
        self.start.sheet.as_deref()
    }

    pub fn workbook(&self) -> Option<&str> {
        self.start.workbook.as_deref()
    }

    /// (top, left, bottom, right), normalized so that top <= bottom and left <= right.
    pub fn bounds(&self) -> (u32, u32, u32, u32) {
        let (a, b) = (self.start.coord, self.end.coord);
        (
            a.row.min(b.row),
            a.col.min(b.col),
            a.row.max(b.row),
            a.col.max(b.col),
        )
    }

    pub fn height(&self) -> u32 {
        let (t, _, b, _) = self.bounds();
        b - t + 1
    }

    pub fn width(&self) -> u32 {
        let (_, l, _, r) = self.bounds();
        r - l + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NameRef {
    pub name: String,
    pub workbook: Option<String>,
}

/// A numeric literal as written, plus its parsed value.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberLit {
    pub text: String,
    pub value: f64,
}

impl NumberLit {
    pub fn new(text: impl Into<String>) -> Option<Self> {
        let text = text.into();
        let value: f64 = text.parse().ok()?;
        value.is_finite().then_some(NumberLit { text, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Concat,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 12] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Pow,
        BinaryOp::Concat,
        BinaryOp::Eq,
        BinaryOp::Ne,
        BinaryOp::Lt,
        BinaryOp::Le,
        BinaryOp::Gt,
        BinaryOp::Ge,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Concat => "&",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Eq
            | BinaryOp::Ne
            | BinaryOp::Lt
            | BinaryOp::Le
            | BinaryOp::Gt
            | BinaryOp::Ge => prec::COMPARE,
            BinaryOp::Concat => prec::CONCAT,
            BinaryOp::Add | BinaryOp::Sub => prec::ADD,
            BinaryOp::Mul | BinaryOp::Div => prec::MUL,
            BinaryOp::Pow => prec::POW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Plus,
    Minus,
}

impl UnaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Plus => "+",
            UnaryOp::Minus => "-",
        }
    }
}

pub(crate) mod prec {
    pub const COMPARE: u8 = 1;
    pub const CONCAT: u8 = 2;
    pub const ADD: u8 = 3;
    pub const MUL: u8 = 4;
    pub const POW: u8 = 5;
    pub const UNARY: u8 = 6;
    pub const PERCENT: u8 = 7;
    pub const PRIMARY: u8 = 8;
}

/// Parsed formula tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(NumberLit),
    Text(String),
    Bool(bool),
    Error(ErrorKind),
    Cell(CellRef),
    Range(RangeRef),
    Name(NameRef),
    /// Function names are stored uppercase.
    Func {
        name: String,
        args: Vec<Expr>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    Percent(Box<Expr>),
    Paren(Box<Expr>),
}

impl Expr {
    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn unary(op: UnaryOp, operand: Expr) -> Expr {
        Expr::Unary {
            op,
            operand: Box::new(operand),
        }
    }

    pub fn func(name: &str, args: Vec<Expr>) -> Expr {
        Expr::Func {
            name: name.to_ascii_uppercase(),
            args,
        }
    }

    pub fn number(text: &str) -> Expr {
        Expr::Number(NumberLit::new(text).expect("valid numeric literal"))
    }

    pub(crate) fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Unary { .. } => prec::UNARY,
            Expr::Percent(_) => prec::PERCENT,
            _ => prec::PRIMARY,
        }
    }

    /// Copy of the tree with every `Paren` node removed.
    pub fn strip_parens(&self) -> Expr {
        self.map_children(&|e| match e {
            Expr::Paren(inner) => Some(inner.strip_parens()),
            _ => None,
        })
    }

    /// Rebuild the tree bottom-up; `f` may replace a node before recursion.
    pub(crate) fn map_children(&self, f: &dyn Fn(&Expr) -> Option<Expr>) -> Expr {
        if let Some(replaced) = f(self) {
            return replaced;
        }
        match self {
            Expr::Func { name, args } => Expr::Func {
                name: name.clone(),
                args: args.iter().map(|a| a.map_children(f)).collect(),
            },
            Expr::Binary { op, lhs, rhs } => Expr::Binary {
                op: *op,
                lhs: Box::new(lhs.map_children(f)),
                rhs: Box::new(rhs.map_children(f)),
            },
            Expr::Unary { op, operand } => Expr::Unary {
                op: *op,
                operand: Box::new(operand.map_children(f)),
            },
            Expr::Percent(inner) => Expr::Percent(Box::new(inner.map_children(f))),
            Expr::Paren(inner) => Expr::Paren(Box::new(inner.map_children(f))),
            leaf => leaf.clone(),
        }
    }

    /// Pre-order visit in source order.
    pub fn walk<'a>(&'a self, visit: &mut dyn FnMut(&'a Expr)) {
        visit(self);
        match self {
            Expr::Func { args, .. } => args.iter().for_each(|a| a.walk(visit)),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.walk(visit);
                rhs.walk(visit);
            }
            Expr::Unary { operand: inner, .. } | Expr::Percent(inner) | Expr::Paren(inner) => {
                inner.walk(visit)
            }
            _ => {}
        }
    }
}
