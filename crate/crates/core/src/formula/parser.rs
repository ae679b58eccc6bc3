//! Tokenizer and recursive-descent parser for the supported formula subset.
//!
//! Precedence, loosest first: comparisons, `&`, `+ -`, `* /`, `^`, unary `+ -`,
//! postfix `%`. All binary operators associate to the left. Constructs outside
//! the subset (array literals, union and intersection operators, 3-D sheet spans,
//! whole-row/column references, sheet-scoped names) are reported as
//! [`FormulaError::Unsupported`] rather than as syntax errors.

use thiserror::Error;

use super::ast::*;
use crate::a1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unsupported construct: {0}")]
    Unsupported(String),
}

fn syntax(offset: usize, expected: impl Into<String>) -> FormulaError {
    FormulaError::Syntax {
        offset,
        expected: expected.into(),
    }
}

fn unsupported(what: &str) -> FormulaError {
    FormulaError::Unsupported(what.to_string())
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Str(String),
    Err(ErrorKind),
    Word(String),
    Quoted(String),
    Book(String),
    Bang,
    Colon,
    Comma,
    LParen,
    RParen,
    LBrace,
    RBrace,
    At,
    Percent,
    Op(BinaryOp),
    End,
}

impl Tok {
    fn starts_operand(&self) -> bool {
        matches!(
            self,
            Tok::Num(_)
                | Tok::Str(_)
                | Tok::Err(_)
                | Tok::Word(_)
                | Tok::Quoted(_)
                | Tok::Book(_)
                | Tok::LParen
                | Tok::LBrace
        )
    }
}

fn is_word_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '\\' || c == '$'
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '\\' | '?')
}

/// Length in bytes of the numeric literal at the start of `s`, if any.
fn scan_number(s: &str) -> Option<usize> {
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let int_digits = i;
    let mut frac_digits = 0;
    if i < b.len() && b[i] == b'.' {
        let mut j = i + 1;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        frac_digits = j - i - 1;
        if int_digits > 0 || frac_digits > 0 {
            i = j;
        }
    }
    if int_digits == 0 && frac_digits == 0 {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let exp_start = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_start {
            i = j;
        }
    }
    Some(i)
}

/// True when `text`, trimmed, reads as a numeric literal (optional sign, optional
/// trailing percent). Used to spot numbers stored as text.
pub fn is_numeric_text(text: &str) -> bool {
    let t = text.trim();
    let t = t.strip_prefix(['+', '-']).unwrap_or(t);
    let t = t.strip_suffix('%').unwrap_or(t);
    matches!(scan_number(t), Some(n) if n == t.len())
}

fn lex(src: &str, base: usize) -> Result<Vec<(Tok, usize)>, FormulaError> {
    let mut toks = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        let at = base + i;
        let rest = &src[i..];
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && scan_number(rest).is_some()) {
            let n = scan_number(rest).ok_or_else(|| syntax(at, "number"))?;
            toks.push((Tok::Num(rest[..n].to_string()), at));
            advance(&mut chars, i + n);
            continue;
        }
        if is_word_start(c) {
            let n = rest
                .char_indices()
                .find(|&(_, ch)| !is_word_char(ch))
                .map_or(rest.len(), |(k, _)| k);
            toks.push((Tok::Word(rest[..n].to_string()), at));
            advance(&mut chars, i + n);
            continue;
        }
        match c {
            '"' | '\'' => {
                let (text, len) = scan_quoted(rest, c).ok_or_else(|| {
                    syntax(base + src.len(), format!("closing {c}"))
                })?;
                toks.push((if c == '"' { Tok::Str(text) } else { Tok::Quoted(text) }, at));
                advance(&mut chars, i + len);
            }
            '[' => {
                let close = rest.find(']').ok_or_else(|| syntax(base + src.len(), "']'"))?;
                toks.push((Tok::Book(rest[1..close].to_string()), at));
                advance(&mut chars, i + close + 1);
            }
            '#' => {
                let kind = ErrorKind::ALL.into_iter().find(|k| {
                    rest.len() >= k.as_str().len()
                        && rest[..k.as_str().len()].eq_ignore_ascii_case(k.as_str())
                });
                match kind {
                    Some(k) => {
                        toks.push((Tok::Err(k), at));
                        advance(&mut chars, i + k.as_str().len());
                    }
                    None if rest.starts_with("#SPILL!")
                        || rest.starts_with("#CALC!")
                        || rest.starts_with("#GETTING_DATA") =>
                    {
                        return Err(unsupported("error literal outside the supported set"));
                    }
                    None => return Err(syntax(at, "error literal")),
                }
            }
            _ => {
                let (tok, len) = match (c, rest.as_bytes().get(1)) {
                    ('<', Some(b'=')) => (Tok::Op(BinaryOp::Le), 2),
                    ('<', Some(b'>')) => (Tok::Op(BinaryOp::Ne), 2),
                    ('>', Some(b'=')) => (Tok::Op(BinaryOp::Ge), 2),
                    ('<', _) => (Tok::Op(BinaryOp::Lt), 1),
                    ('>', _) => (Tok::Op(BinaryOp::Gt), 1),
                    ('=', _) => (Tok::Op(BinaryOp::Eq), 1),
                    ('+', _) => (Tok::Op(BinaryOp::Add), 1),
                    ('-', _) => (Tok::Op(BinaryOp::Sub), 1),
                    ('*', _) => (Tok::Op(BinaryOp::Mul), 1),
                    ('/', _) => (Tok::Op(BinaryOp::Div), 1),
                    ('^', _) => (Tok::Op(BinaryOp::Pow), 1),
                    ('&', _) => (Tok::Op(BinaryOp::Concat), 1),
                    ('%', _) => (Tok::Percent, 1),
                    ('!', _) => (Tok::Bang, 1),
                    (':', _) => (Tok::Colon, 1),
                    (',', _) => (Tok::Comma, 1),
                    ('(', _) => (Tok::LParen, 1),
                    (')', _) => (Tok::RParen, 1),
                    ('{', _) => (Tok::LBrace, 1),
                    ('}', _) => (Tok::RBrace, 1),
                    ('@', _) => (Tok::At, 1),
                    _ => return Err(syntax(at, "token")),
                };
                toks.push((tok, at));
                advance(&mut chars, i + len);
            }
        }
    }
    toks.push((Tok::End, base + src.len()));
    Ok(toks)
}

fn advance(chars: &mut std::iter::Peekable<std::str::CharIndices<'_>>, to: usize) {
    while matches!(chars.peek(), Some(&(i, _)) if i < to) {
        chars.next();
    }
}

/// Reads a quoted run whose delimiter is doubled to escape it. Returns the
/// unescaped content and the byte length consumed including both quotes.
fn scan_quoted(s: &str, quote: char) -> Option<(String, usize)> {
    let mut out = String::new();
    let mut it = s.char_indices().skip(1).peekable();
    while let Some((i, c)) = it.next() {
        if c == quote {
            if matches!(it.peek(), Some(&(_, n)) if n == quote) {
                out.push(quote);
                it.next();
            } else {
                return Some((out, i + c.len_utf8()));
            }
        } else {
            out.push(c);
        }
    }
    None
}

/// Parse formula source (leading `=` optional) into an expression tree.
pub fn parse(source: &str) -> Result<Expr, FormulaError> {
    let (body, base) = match source.strip_prefix('=') {
        Some(rest) => (rest, 1),
        None => (source, 0),
    };
    let toks = lex(body, base)?;
    let mut p = Parser { toks, pos: 0 };
    let expr = p.expr()?;
    match p.peek() {
        Tok::End => Ok(expr),
        _ => Err(p.diagnose_trailing(&expr, "operator or end of formula")),
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

struct Qualifier {
    sheet: Option<String>,
    workbook: Option<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    /// Explains an unexpected token following a complete operand.
    fn diagnose_trailing(&self, prev: &Expr, expected: &str) -> FormulaError {
        match self.peek() {
            Tok::Comma => unsupported("union operator"),
            Tok::Colon => unsupported("range operator on a non-reference operand"),
            t if t.starts_operand()
                && matches!(prev, Expr::Cell(_) | Expr::Range(_) | Expr::Name(_)) =>
            {
                unsupported("intersection operator")
            }
            _ => syntax(self.offset(), expected),
        }
    }

    fn expr(&mut self) -> Result<Expr, FormulaError> {
        self.binary_level(prec::COMPARE)
    }

    fn binary_level(&mut self, level: u8) -> Result<Expr, FormulaError> {
        if level > prec::POW {
            return self.unary();
        }
        let mut lhs = self.binary_level(level + 1)?;
        loop {
            let op = match self.peek() {
                Tok::Op(op) if op.precedence() == level => *op,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.binary_level(level + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, FormulaError> {
        let op = match self.peek() {
            Tok::Op(BinaryOp::Add) => UnaryOp::Plus,
            Tok::Op(BinaryOp::Sub) => UnaryOp::Minus,
            Tok::At => return Err(unsupported("implicit intersection operator")),
            _ => return self.postfix(),
        };
        self.bump();
        Ok(Expr::unary(op, self.unary()?))
    }

    fn postfix(&mut self) -> Result<Expr, FormulaError> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::Percent {
            self.bump();
            e = Expr::Percent(Box::new(e));
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, FormulaError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(text) => {
                if *self.peek() == Tok::Colon {
                    return Err(unsupported("whole-row reference"));
                }
                NumberLit::new(text)
                    .map(Expr::Number)
                    .ok_or_else(|| syntax(at, "finite number"))
            }
            Tok::Str(s) => Ok(Expr::Text(s)),
            Tok::Err(k) => Ok(Expr::Error(k)),
            Tok::LBrace => Err(unsupported("array literal")),
            Tok::LParen => {
                let inner = self.expr()?;
                match self.peek() {
                    Tok::RParen => {
                        self.bump();
                        Ok(Expr::Paren(Box::new(inner)))
                    }
                    _ => Err(self.diagnose_trailing(&inner, "')'")),
                }
            }
            Tok::Book(book) => match self.peek().clone() {
                Tok::Bang => {
                    self.bump();
                    match self.bump() {
                        Tok::Word(w) if is_name_token(&w) => Ok(Expr::Name(NameRef {
                            name: w,
                            workbook: Some(book),
                        })),
                        _ => Err(syntax(at, "name after workbook qualifier")),
                    }
                }
                Tok::Word(w) if *self.peek_at(1) == Tok::Bang => {
                    self.bump();
                    self.bump();
                    self.qualified_reference(Qualifier {
                        sheet: Some(w),
                        workbook: Some(book),
                    })
                }
                Tok::Word(w) if is_name_token(&w) => {
                    self.bump();
                    Ok(Expr::Name(NameRef {
                        name: w,
                        workbook: Some(book),
                    }))
                }
                _ => Err(syntax(self.offset(), "sheet or name after workbook qualifier")),
            },
            Tok::Quoted(text) => {
                if *self.peek() != Tok::Bang {
                    return Err(syntax(self.offset(), "'!' after quoted sheet name"));
                }
                self.bump();
                let q = split_quoted_qualifier(&text)?;
                self.qualified_reference(q)
            }
            Tok::Word(w) => self.word(w, at),
            Tok::RParen | Tok::Comma | Tok::End => Err(syntax(at, "operand")),
            _ => Err(syntax(at, "operand")),
        }
    }

    fn word(&mut self, w: String, at: usize) -> Result<Expr, FormulaError> {
        match self.peek() {
            Tok::LParen => {
                if !is_function_name(&w) {
                    return Err(syntax(at, "function name"));
                }
                self.bump();
                let args = self.args()?;
                return Ok(Expr::func(&w, args));
            }
            Tok::Bang => {
                self.bump();
                return self.qualified_reference(Qualifier {
                    sheet: Some(w),
                    workbook: None,
                });
            }
            Tok::Colon
                if matches!(self.peek_at(1), Tok::Word(_)) && *self.peek_at(2) == Tok::Bang =>
            {
                return Err(unsupported("3-D sheet span"));
            }
            _ => {}
        }
        if let Some(coord) = a1::parse_coord(&w) {
            return self.range_tail(CellRef::local(coord), Qualifier {
                sheet: None,
                workbook: None,
            });
        }
        if w.eq_ignore_ascii_case("TRUE") || w.eq_ignore_ascii_case("FALSE") {
            return Ok(Expr::Bool(w.eq_ignore_ascii_case("TRUE")));
        }
        if *self.peek() == Tok::Colon {
            if is_column_token(&w) {
                return Err(unsupported("whole-column reference"));
            }
            return Err(unsupported("range operator on a non-reference operand"));
        }
        if !is_name_token(&w) {
            return Err(syntax(at, "reference or name"));
        }
        Ok(Expr::Name(NameRef {
            name: w,
            workbook: None,
        }))
    }

    fn args(&mut self) -> Result<Vec<Expr>, FormulaError> {
        let mut args = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(args);
        }
        loop {
            if matches!(self.peek(), Tok::Comma | Tok::RParen) {
                return Err(unsupported("empty function argument"));
            }
            let arg = self.expr()?;
            args.push(arg);
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    return Ok(args);
                }
                _ => {
                    let last = args.last().expect("pushed");
                    return Err(match self.peek() {
                        Tok::Colon => unsupported("range operator on a non-reference operand"),
                        t if t.starts_operand()
                            && matches!(last, Expr::Cell(_) | Expr::Range(_) | Expr::Name(_)) =>
                        {
                            unsupported("intersection operator")
                        }
                        _ => syntax(self.offset(), "',' or ')'"),
                    });
                }
            }
        }
    }

    fn qualified_reference(&mut self, q: Qualifier) -> Result<Expr, FormulaError> {
        let at = self.offset();
        match self.bump() {
            Tok::Word(w) => {
                if let Some(coord) = a1::parse_coord(&w) {
                    let cell = CellRef {
                        coord,
                        sheet: q.sheet.clone(),
                        workbook: q.workbook.clone(),
                    };
                    return self.range_tail(cell, q);
                }
                if is_column_token(&w) && *self.peek() == Tok::Colon {
                    return Err(unsupported("whole-column reference"));
                }
                if is_name_token(&w) {
                    return Err(unsupported("sheet-scoped name"));
                }
                Err(syntax(at, "cell reference"))
            }
            Tok::Num(_) if *self.peek() == Tok::Colon => Err(unsupported("whole-row reference")),
            Tok::Err(ErrorKind::Ref) => Ok(Expr::Error(ErrorKind::Ref)),
            _ => Err(syntax(at, "cell reference")),
        }
    }

    fn range_tail(&mut self, start: CellRef, q: Qualifier) -> Result<Expr, FormulaError> {
        if *self.peek() != Tok::Colon {
            return Ok(Expr::Cell(start));
        }
        self.bump();
        let at = self.offset();
        // An end qualifier is tolerated only when it repeats the start's.
        let end_q = match (self.peek().clone(), self.peek_at(1).clone()) {
            (Tok::Word(w), Tok::Bang) => {
                self.bump();
                self.bump();
                Some(Qualifier {
                    sheet: Some(w),
                    workbook: None,
                })
            }
            (Tok::Quoted(t), Tok::Bang) => {
                self.bump();
                self.bump();
                Some(split_quoted_qualifier(&t)?)
            }
            (Tok::Book(b), Tok::Word(w)) if *self.peek_at(2) == Tok::Bang => {
                self.bump();
                self.bump();
                self.bump();
                Some(Qualifier {
                    sheet: Some(w),
                    workbook: Some(b),
                })
            }
            _ => None,
        };
        if let Some(eq) = end_q {
            if eq.sheet != q.sheet || eq.workbook != q.workbook {
                return Err(unsupported("range spanning different sheets"));
            }
        }
        match self.bump() {
            Tok::Word(w) => match a1::parse_coord(&w) {
                Some(coord) => Ok(Expr::Range(RangeRef {
                    end: CellRef {
                        coord,
                        sheet: start.sheet.clone(),
                        workbook: start.workbook.clone(),
                    },
                    start,
                })),
                None if self.peek() == &Tok::LParen => {
                    Err(unsupported("range operator on a non-reference operand"))
                }
                None => Err(unsupported("range operator on a non-reference operand")),
            },
            Tok::LParen | Tok::Quoted(_) | Tok::Book(_) => {
                Err(unsupported("range operator on a non-reference operand"))
            }
            _ => Err(syntax(at, "cell reference after ':'")),
        }
    }
}

fn split_quoted_qualifier(text: &str) -> Result<Qualifier, FormulaError> {
    let (workbook, sheet) = match text.strip_prefix('[').and_then(|r| r.split_once(']')) {
        Some((book, sheet)) => (Some(book.to_string()), sheet.to_string()),
        None => (None, text.to_string()),
    };
    if sheet.contains(':') {
        return Err(unsupported("3-D sheet span"));
    }
    Ok(Qualifier {
        sheet: Some(sheet),
        workbook,
    })
}

fn is_function_name(w: &str) -> bool {
    let mut chars = w.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn is_column_token(w: &str) -> bool {
    let w = w.strip_prefix('$').unwrap_or(w);
    a1::letters_to_col(w).is_some()
}

/// A word usable as a defined name: not a cell address, not a boolean, no `$`.
pub fn is_name_token(w: &str) -> bool {
    let mut chars = w.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '\\')
        && w.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '\\' | '?'))
        && a1::parse_coord(w).is_none()
        && !w.eq_ignore_ascii_case("TRUE")
        && !w.eq_ignore_ascii_case("FALSE")
        && !looks_like_r1c1(w)
}

/// `R1C1`-shaped words are rejected as names by desktop spreadsheet programs.
fn looks_like_r1c1(w: &str) -> bool {
    let u = w.to_ascii_uppercase();
    let Some(rest) = u.strip_prefix('R') else {
        return u == "C" || (u.starts_with('C') && u[1..].bytes().all(|b| b.is_ascii_digit()));
    };
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    let rest = &rest[digits..];
    rest.is_empty() || (rest.starts_with('C') && rest[1..].bytes().all(|b| b.is_ascii_digit()))
}
