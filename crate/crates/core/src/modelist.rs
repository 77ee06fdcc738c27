//! Parser for explicit switching sequences such as `[1,0,0];[1,1,0]`.
//!
//! Modes are bracketed lists of switch states separated by `;` or newlines.
//! Whitespace is ignored and `#` starts a comment that runs to the end of
//! the line.

use std::fmt;

use crate::converter::ModeVector;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeListError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ModeListError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ModeListError {}

/// Longest accepted switch vector.
pub const MAX_CELLS: usize = 16;

pub fn parse_mode_list(text: &str) -> std::result::Result<Vec<ModeVector>, ModeListError> {
    let mut modes: Vec<ModeVector> = Vec::new();
    let mut current: Option<Vec<u8>> = None;
    // a separator is needed between two modes
    let mut need_separator = false;
    let mut open_at = (0, 0);
    let mut expect_value = true;

    for (li, line) in text.lines().enumerate() {
        let line_no = li + 1;
        let content = line.split('#').next().unwrap_or("");
        for (ci, ch) in content.char_indices() {
            let col = ci + 1;
            let err = |message: String| ModeListError {
                line: line_no,
                column: col,
                message,
            };
            match (&mut current, ch) {
                (_, c) if c.is_whitespace() => {}
                (None, '[') => {
                    if need_separator {
                        return Err(err("expected `;` between modes".into()));
                    }
                    current = Some(Vec::new());
                    expect_value = true;
                    open_at = (line_no, col);
                }
                (None, ';') => {
                    if !need_separator {
                        return Err(err("empty entry before `;`".into()));
                    }
                    need_separator = false;
                }
                (None, c) => return Err(err(format!("unexpected `{c}` outside a mode"))),
                (Some(bits), '0' | '1') => {
                    if !expect_value {
                        return Err(err("expected `,` or `]`".into()));
                    }
                    if bits.len() == MAX_CELLS {
                        return Err(err(format!("more than {MAX_CELLS} switches in one mode")));
                    }
                    bits.push(u8::from(ch == '1'));
                    expect_value = false;
                }
                (Some(_), ',') => {
                    if expect_value {
                        return Err(err("expected a switch state (0 or 1)".into()));
                    }
                    expect_value = true;
                }
                (Some(bits), ']') => {
                    if expect_value {
                        let what = if bits.is_empty() { "empty mode" } else { "trailing `,`" };
                        return Err(err(what.into()));
                    }
                    if bits.len() < 2 {
                        return Err(err("a mode needs at least two switches".into()));
                    }
                    if let Some(first) = modes.first() {
                        if first.cells() != bits.len() {
                            return Err(err(format!(
                                "mode has {} switches, earlier modes have {}",
                                bits.len(),
                                first.cells()
                            )));
                        }
                    }
                    let mode = ModeVector::from_switches(bits).map_err(|e| err(e.to_string()))?;
                    modes.push(mode);
                    current = None;
                    need_separator = true;
                }
                (Some(_), c) => return Err(err(format!("unexpected `{c}` inside a mode"))),
            }
        }
        if current.is_none() {
            // newline separates modes too
            need_separator = false;
        }
    }
    if current.is_some() {
        return Err(ModeListError {
            line: open_at.0,
            column: open_at.1,
            message: "unterminated `[`".into(),
        });
    }
    if modes.is_empty() {
        return Err(ModeListError {
            line: 1,
            column: 1,
            message: "no modes given".into(),
        });
    }
    Ok(modes)
}
