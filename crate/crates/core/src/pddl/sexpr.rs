//! Tokenizer and s-expression reader for PDDL source text.

use std::fmt;

use super::PddlError;

/// A 1-based source position.
///
/// Spans never take part in structural equality: two declarations parsed
/// from differently formatted sources compare equal when their content does.
#[derive(Debug, Clone, Copy, Default, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    Atom { text: String, span: Span },
    List { items: Vec<SExpr>, span: Span },
}

impl SExpr {
    pub fn span(&self) -> Span {
        match self {
            SExpr::Atom { span, .. } | SExpr::List { span, .. } => *span,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom { text, .. } => Some(text),
            SExpr::List { .. } => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List { items, .. } => Some(items),
            SExpr::Atom { .. } => None,
        }
    }

    /// Head atom of a list, lowercased.
    pub fn head_keyword(&self) -> Option<String> {
        self.as_list()
            .and_then(|items| items.first())
            .and_then(SExpr::as_atom)
            .map(str::to_ascii_lowercase)
    }
}

/// Reads every top-level s-expression in `text`. `;` starts a line comment.
pub fn read_all(text: &str) -> Result<Vec<SExpr>, PddlError> {
    let mut stack: Vec<(Vec<SExpr>, Span)> = Vec::new();
    let mut top = Vec::new();
    let mut line = 1u32;
    let mut col = 0u32;
    let mut chars = text.chars().peekable();
    let mut atom = String::new();
    let mut atom_span = Span::default();

    fn flush(
        atom: &mut String,
        span: Span,
        stack: &mut [(Vec<SExpr>, Span)],
        top: &mut Vec<SExpr>,
    ) {
        if atom.is_empty() {
            return;
        }
        let node = SExpr::Atom {
            text: std::mem::take(atom),
            span,
        };
        match stack.last_mut() {
            Some((items, _)) => items.push(node),
            None => top.push(node),
        }
    }

    while let Some(c) = chars.next() {
        if c == '\n' {
            flush(&mut atom, atom_span, &mut stack, &mut top);
            line += 1;
            col = 0;
            continue;
        }
        col += 1;
        match c {
            ';' => {
                flush(&mut atom, atom_span, &mut stack, &mut top);
                while let Some(&n) = chars.peek() {
                    if n == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' => {
                flush(&mut atom, atom_span, &mut stack, &mut top);
                stack.push((Vec::new(), Span { line, col }));
            }
            ')' => {
                flush(&mut atom, atom_span, &mut stack, &mut top);
                let Some((items, span)) = stack.pop() else {
                    return Err(PddlError::Syntax {
                        line,
                        col,
                        message: "unexpected `)`".into(),
                        expected: Some("`(` or end of input".into()),
                    });
                };
                let node = SExpr::List { items, span };
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(node),
                    None => top.push(node),
                }
            }
            c if c.is_whitespace() => flush(&mut atom, atom_span, &mut stack, &mut top),
            c => {
                if atom.is_empty() {
                    atom_span = Span { line, col };
                }
                atom.push(c);
            }
        }
    }
    flush(&mut atom, atom_span, &mut stack, &mut top);
    if let Some((_, span)) = stack.last() {
        return Err(PddlError::Syntax {
            line: span.line,
            col: span.col,
            message: "unclosed `(`".into(),
            expected: Some("`)`".into()),
        });
    }
    Ok(top)
}
