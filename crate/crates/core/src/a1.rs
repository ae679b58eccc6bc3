//! A1 notation helpers shared by the parser and the workbook model.

use crate::formula::{RefCoord, MAX_COL, MAX_ROW};

/// 1-based column index to letters (1 -> "A", 27 -> "AA").
pub fn col_to_letters(mut col: u32) -> String {
    debug_assert!(col >= 1);
    let mut out = Vec::new();
    while col > 0 {
        let rem = (col - 1) % 26;
        out.push(b'A' + rem as u8);
        col = (col - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Letters to 1-based column index, case-insensitive. Rejects anything past `MAX_COL`.
pub fn letters_to_col(letters: &str) -> Option<u32> {
    if letters.is_empty() || letters.len() > 3 {
        return None;
    }
    let mut col: u32 = 0;
    for b in letters.bytes() {
        if !b.is_ascii_alphabetic() {
            return None;
        }
        col = col * 26 + u32::from(b.to_ascii_uppercase() - b'A' + 1);
    }
    (col <= MAX_COL).then_some(col)
}

/// Parses `B2`, `$B$2`, `b$2` into a coordinate.
pub fn parse_coord(text: &str) -> Option<RefCoord> {
    let bytes = text.as_bytes();
    let mut i = 0;
    let col_abs = bytes.first() == Some(&b'$');
    if col_abs {
        i += 1;
    }
    let letters_start = i;
    while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
        i += 1;
    }
    let col = letters_to_col(&text[letters_start..i])?;
    let row_abs = bytes.get(i) == Some(&b'$');
    if row_abs {
        i += 1;
    }
    let digits = &text[i..];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    let row: u32 = digits.parse().ok()?;
    if row == 0 || row > MAX_ROW {
        return None;
    }
    Some(RefCoord {
        row,
        col,
        row_abs,
        col_abs,
    })
}

/// Parses a plain relative A1 address (no `$`) into (row, col).
pub fn parse_plain(text: &str) -> Option<(u32, u32)> {
    let c = parse_coord(text)?;
    (!c.has_absolute_axis()).then_some((c.row, c.col))
}

pub fn render(row: u32, col: u32) -> String {
    format!("{}{}", col_to_letters(col), row)
}
