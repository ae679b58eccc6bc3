use std::fmt;

use super::ast::*;

/// A reference-bearing node, borrowed from the tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefItem<'a> {
    Cell(&'a CellRef),
    Range(&'a RangeRef),
    Name(&'a NameRef),
}

pub fn refs_of(expr: &Expr) -> Vec<RefItem<'_>> {
    let mut out = Vec::new();
    expr.walk(&mut |e| match e {
        Expr::Cell(c) => out.push(RefItem::Cell(c)),
        Expr::Range(r) => out.push(RefItem::Range(r)),
        Expr::Name(n) => out.push(RefItem::Name(n)),
        _ => {}
    });
    out
}

/// Called function names, uppercase, in source order (repeats kept).
pub fn functions_of(expr: &Expr) -> Vec<&str> {
    let mut out = Vec::new();
    expr.walk(&mut |e| {
        if let Expr::Func { name, .. } = e {
            out.push(name.as_str());
        }
    });
    out
}

/// One step on the path from the root to a literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathStep {
    /// Argument `index` (1-based) of the named function.
    Arg { func: String, index: usize },
    Binary(BinaryOp),
    Negate,
    Percent,
}

impl fmt::Display for PathStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathStep::Arg { func, index } => write!(f, "{func}#{index}"),
            PathStep::Binary(op) => f.write_str(op.symbol()),
            PathStep::Negate => f.write_str("neg"),
            PathStep::Percent => f.write_str("%"),
        }
    }
}

/// A numeric literal found in a formula. A unary minus directly over a
/// number is folded into the constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Constant {
    pub text: String,
    pub value: f64,
    pub path: Vec<PathStep>,
}

impl Constant {
    pub fn path_string(&self) -> String {
        self.path
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("/")
    }
}

pub fn constants_of(expr: &Expr) -> Vec<Constant> {
    let mut out = Vec::new();
    collect_constants(expr, &mut Vec::new(), &mut out);
    out
}

fn collect_constants(expr: &Expr, path: &mut Vec<PathStep>, out: &mut Vec<Constant>) {
    match expr {
        Expr::Number(n) => out.push(Constant {
            text: n.text.clone(),
            value: n.value,
            path: path.clone(),
        }),
        Expr::Unary {
            op: UnaryOp::Minus,
            operand,
        } if matches!(**operand, Expr::Number(_)) => {
            let Expr::Number(n) = &**operand else { unreachable!() };
            out.push(Constant {
                text: format!("-{}", n.text),
                value: -n.value,
                path: path.clone(),
            });
        }
        Expr::Unary { op, operand } => {
            let pushed = *op == UnaryOp::Minus;
            if pushed {
                path.push(PathStep::Negate);
            }
            collect_constants(operand, path, out);
            if pushed {
                path.pop();
            }
        }
        Expr::Percent(inner) => {
            path.push(PathStep::Percent);
            collect_constants(inner, path, out);
            path.pop();
        }
        Expr::Paren(inner) => collect_constants(inner, path, out),
        Expr::Binary { op, lhs, rhs } => {
            path.push(PathStep::Binary(*op));
            collect_constants(lhs, path, out);
            collect_constants(rhs, path, out);
            path.pop();
        }
        Expr::Func { name, args } => {
            for (i, a) in args.iter().enumerate() {
                path.push(PathStep::Arg {
                    func: name.clone(),
                    index: i + 1,
                });
                collect_constants(a, path, out);
                path.pop();
            }
        }
        _ => {}
    }
}
