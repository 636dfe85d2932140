use std::fmt;

use super::ParseError;

/// Location inside the parsed text; `line` and `column` are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Position {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
}

impl Position {
    /// Position of byte `offset` in `src`, clamped to the last character.
    pub fn locate(src: &str, offset: usize) -> Position {
        let offset = if src.is_empty() {
            0
        } else {
            let mut o = offset.min(src.len() - 1);
            while !src.is_char_boundary(o) {
                o -= 1;
            }
            o
        };
        let before = &src[..offset];
        let line = before.matches('\n').count() + 1;
        let column = before.rfind('\n').map_or(before.chars().count(), |nl| {
            before[nl + 1..].chars().count()
        }) + 1;
        Position {
            offset,
            line,
            column,
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Str(s) => write!(f, "'{s}'"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub offset: usize,
}

const SYMBOLS: [&str; 13] = [
    "<=", ">=", "<>", "!=", "(", ")", ",", ";", "=", "<", ">", "*", "+",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                offset: start,
            });
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let n = src[start..i].parse::<i64>().map_err(|_| ParseError::Syntax {
                pos: Position::locate(src, start),
                expected: "integer within 64-bit range".into(),
                found: src[start..i].to_string(),
            })?;
            out.push(Token {
                tok: Tok::Int(n),
                offset: start,
            });
        } else if c == b'\'' {
            i += 1;
            let mut s = String::new();
            loop {
                match src[i..].chars().next() {
                    None => {
                        return Err(ParseError::Syntax {
                            pos: Position::locate(src, start),
                            expected: "closing quote".into(),
                            found: "end of input".into(),
                        })
                    }
                    Some('\'') if bytes.get(i + 1) == Some(&b'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(ch) => {
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                offset: start,
            });
        } else if c == b'-' {
            out.push(Token {
                tok: Tok::Sym("-"),
                offset: start,
            });
            i += 1;
        } else if let Some(sym) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            out.push(Token {
                tok: Tok::Sym(sym),
                offset: start,
            });
            i += sym.len();
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(ParseError::Syntax {
                pos: Position::locate(src, start),
                expected: "a token".into(),
                found: format!("`{ch}`"),
            });
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        offset: src.len(),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_offsets() {
        let toks = tokenize("a<=-5 'it''s'").unwrap();
        let kinds: Vec<Tok> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("a".into()),
                Tok::Sym("<="),
                Tok::Sym("-"),
                Tok::Int(5),
                Tok::Str("it's".into()),
                Tok::Eof
            ]
        );
        assert_eq!(toks[4].offset, 6);
    }

    #[test]
    fn comments_are_skipped() {
        let toks = tokenize("-- hello\nX").unwrap();
        assert_eq!(toks[0].tok, Tok::Ident("X".into()));
    }

    #[test]
    fn positions_are_line_and_column() {
        let p = Position::locate("ab\ncd", 4);
        assert_eq!((p.line, p.column), (2, 2));
        assert_eq!(Position::locate("ab", 99).offset, 1);
    }
}
