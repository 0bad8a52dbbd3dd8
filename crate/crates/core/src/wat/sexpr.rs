//! S-expression reader for the WebAssembly text format.
//!
//! Handles `;;` line comments, nested `(; ... ;)` block comments, quoted
//! strings with the WAT escape set, and tracks 1-based line/column positions
//! for every node.

use super::FrontendError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SExpr {
    Atom { text: String, pos: Pos },
    Str { bytes: Vec<u8>, pos: Pos },
    List { items: Vec<SExpr>, pos: Pos },
}

impl SExpr {
    pub fn pos(&self) -> Pos {
        match self {
            SExpr::Atom { pos, .. } | SExpr::Str { pos, .. } | SExpr::List { pos, .. } => *pos,
        }
    }

    pub fn atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom { text, .. } => Some(text),
            _ => None,
        }
    }

    pub fn list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List { items, .. } => Some(items),
            _ => None,
        }
    }

    /// The leading keyword of a list form, e.g. `func` for `(func ...)`.
    pub fn head(&self) -> Option<&str> {
        self.list().and_then(|items| items.first()).and_then(SExpr::atom)
    }

    pub fn string(&self) -> Option<String> {
        match self {
            SExpr::Str { bytes, .. } => Some(String::from_utf8_lossy(bytes).into_owned()),
            _ => None,
        }
    }
}

struct Reader<'a> {
    src: &'a [u8],
    at: usize,
    line: u32,
    col: u32,
}

fn syntax(pos: Pos, msg: impl Into<String>) -> FrontendError {
    FrontendError::Syntax {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

impl<'a> Reader<'a> {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.at).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.at + 1).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.at += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) -> Result<(), FrontendError> {
        loop {
            match (self.peek(), self.peek2()) {
                (Some(c), _) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                (Some(b';'), Some(b';')) => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                (Some(b'('), Some(b';')) => {
                    let start = self.pos();
                    self.bump();
                    self.bump();
                    let mut depth = 1;
                    while depth > 0 {
                        match (self.peek(), self.peek2()) {
                            (Some(b'('), Some(b';')) => {
                                self.bump();
                                self.bump();
                                depth += 1;
                            }
                            (Some(b';'), Some(b')')) => {
                                self.bump();
                                self.bump();
                                depth -= 1;
                            }
                            (Some(_), _) => {
                                self.bump();
                            }
                            (None, _) => return Err(syntax(start, "unterminated block comment")),
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn string(&mut self) -> Result<SExpr, FrontendError> {
        let pos = self.pos();
        self.bump();
        let mut bytes = Vec::new();
        loop {
            match self.bump() {
                None => return Err(syntax(pos, "unterminated string")),
                Some(b'"') => break,
                Some(b'\\') => {
                    let esc_pos = self.pos();
                    match self.bump() {
                        Some(b'n') => bytes.push(b'\n'),
                        Some(b't') => bytes.push(b'\t'),
                        Some(b'r') => bytes.push(b'\r'),
                        Some(b'"') => bytes.push(b'"'),
                        Some(b'\'') => bytes.push(b'\''),
                        Some(b'\\') => bytes.push(b'\\'),
                        Some(h) if h.is_ascii_hexdigit() => {
                            let l = self
                                .bump()
                                .filter(u8::is_ascii_hexdigit)
                                .ok_or_else(|| syntax(esc_pos, "bad hex escape"))?;
                            let s = [h, l];
                            let s = std::str::from_utf8(&s).unwrap_or("00");
                            bytes.push(u8::from_str_radix(s, 16).unwrap_or(0));
                        }
                        _ => return Err(syntax(esc_pos, "bad string escape")),
                    }
                }
                Some(c) => bytes.push(c),
            }
        }
        Ok(SExpr::Str { bytes, pos })
    }

    fn atom(&mut self) -> SExpr {
        let pos = self.pos();
        let start = self.at;
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() || c == b'(' || c == b')' || c == b'"' || c == b';' {
                break;
            }
            self.bump();
        }
        SExpr::Atom {
            text: String::from_utf8_lossy(&self.src[start..self.at]).into_owned(),
            pos,
        }
    }

    fn expr(&mut self) -> Result<SExpr, FrontendError> {
        self.skip_trivia()?;
        match self.peek() {
            None => Err(syntax(self.pos(), "unexpected end of input")),
            Some(b'(') => {
                let pos = self.pos();
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia()?;
                    match self.peek() {
                        None => return Err(syntax(pos, "unclosed parenthesis")),
                        Some(b')') => {
                            self.bump();
                            break;
                        }
                        Some(_) => items.push(self.expr()?),
                    }
                }
                Ok(SExpr::List { items, pos })
            }
            Some(b')') => Err(syntax(self.pos(), "unexpected `)`")),
            Some(b'"') => self.string(),
            Some(_) => Ok(self.atom()),
        }
    }
}

/// Reads every top-level s-expression in `src`.
pub fn read_all(src: &str) -> Result<Vec<SExpr>, FrontendError> {
    let mut r = Reader {
        src: src.as_bytes(),
        at: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        r.skip_trivia()?;
        if r.peek().is_none() {
            return Ok(out);
        }
        out.push(r.expr()?);
    }
}
