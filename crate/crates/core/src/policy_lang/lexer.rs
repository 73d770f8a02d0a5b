use std::fmt;

use crate::diag::Pos;

use super::PolicyError;

pub const KEYWORDS: &[&str] = &[
    "import",
    "load_zone_conduit_model",
    "service",
    "service_group",
    "port_group",
    "zone_group",
    "policy_rule",
    "rule_group",
    "reporting_rule",
    "policy",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Keyword(&'static str),
    Ident(String),
    Int(u64),
    Str(String),
    LBrace,
    RBrace,
    Semi,
    Comma,
    Dot,
    Eq,
    Colon,
    Caret,
    Backslash,
    Minus,
    Arrow,
    BiArrow,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Keyword(k) => write!(f, "keyword `{k}`"),
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Int(v) => write!(f, "integer `{v}`"),
            TokenKind::Str(s) => write!(f, "string {s:?}"),
            TokenKind::LBrace => f.write_str("`{`"),
            TokenKind::RBrace => f.write_str("`}`"),
            TokenKind::Semi => f.write_str("`;`"),
            TokenKind::Comma => f.write_str("`,`"),
            TokenKind::Dot => f.write_str("`.`"),
            TokenKind::Eq => f.write_str("`=`"),
            TokenKind::Colon => f.write_str("`:`"),
            TokenKind::Caret => f.write_str("`^`"),
            TokenKind::Backslash => f.write_str("`\\`"),
            TokenKind::Minus => f.write_str("`-`"),
            TokenKind::Arrow => f.write_str("`->`"),
            TokenKind::BiArrow => f.write_str("`<->`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: Pos,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl Lexer<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Pos {
        Pos::new(self.line, self.col)
    }
}

fn closing_quote(open: char) -> Option<char> {
    match open {
        '"' => Some('"'),
        '\u{201c}' => Some('\u{201d}'),
        '\u{2018}' => Some('\u{2019}'),
        _ => None,
    }
}

/// Splits policy source into tokens. `//` comments run to end of line.
pub fn tokenize(text: &str) -> Result<Vec<Token>, PolicyError> {
    let mut lx = Lexer {
        chars: text.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    while let Some(c) = lx.peek() {
        let pos = lx.pos();
        if c.is_whitespace() {
            lx.bump();
            continue;
        }
        let kind = match c {
            '/' => {
                lx.bump();
                if lx.peek() != Some('/') {
                    return Err(PolicyError::lex(
                        pos,
                        "unexpected `/` (comments start with `//`)",
                    ));
                }
                while let Some(c) = lx.peek() {
                    if c == '\n' {
                        break;
                    }
                    lx.bump();
                }
                continue;
            }
            '{' => single(&mut lx, TokenKind::LBrace),
            '}' => single(&mut lx, TokenKind::RBrace),
            ';' => single(&mut lx, TokenKind::Semi),
            ',' => single(&mut lx, TokenKind::Comma),
            '.' => single(&mut lx, TokenKind::Dot),
            '=' => single(&mut lx, TokenKind::Eq),
            ':' => single(&mut lx, TokenKind::Colon),
            '^' => single(&mut lx, TokenKind::Caret),
            '\\' => single(&mut lx, TokenKind::Backslash),
            '-' => {
                lx.bump();
                if lx.peek() == Some('>') {
                    lx.bump();
                    TokenKind::Arrow
                } else {
                    TokenKind::Minus
                }
            }
            '<' => {
                lx.bump();
                if lx.bump() != Some('-') || lx.bump() != Some('>') {
                    return Err(PolicyError::lex(pos, "expected `<->`"));
                }
                TokenKind::BiArrow
            }
            '`' => {
                // ``text'' as typeset in LaTeX sources
                lx.bump();
                if lx.bump() != Some('`') {
                    return Err(PolicyError::lex(pos, "unexpected character '`'"));
                }
                let mut s = String::new();
                loop {
                    match lx.bump() {
                        None => return Err(PolicyError::lex(pos, "unterminated string")),
                        Some('\'') if lx.peek() == Some('\'') => {
                            lx.bump();
                            break;
                        }
                        Some(c) => s.push(c),
                    }
                }
                TokenKind::Str(s)
            }
            c if closing_quote(c).is_some() => {
                let close = closing_quote(c).unwrap_or('"');
                lx.bump();
                let mut s = String::new();
                loop {
                    match lx.bump() {
                        None => return Err(PolicyError::lex(pos, "unterminated string")),
                        Some(c) if c == close || (close != '"' && c == '"') => break,
                        Some('\n') => return Err(PolicyError::lex(pos, "newline in string")),
                        Some(c) => s.push(c),
                    }
                }
                TokenKind::Str(s)
            }
            c if c.is_ascii_digit() => {
                let mut v: u64 = 0;
                while let Some(d) = lx.peek().and_then(|c| c.to_digit(10)) {
                    v = v.saturating_mul(10).saturating_add(u64::from(d));
                    lx.bump();
                }
                if lx
                    .peek()
                    .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                {
                    return Err(PolicyError::lex(
                        pos,
                        "identifiers may not start with a digit",
                    ));
                }
                TokenKind::Int(v)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(c) = lx.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        lx.bump();
                    } else {
                        break;
                    }
                }
                match KEYWORDS.iter().find(|k| **k == s) {
                    Some(k) => TokenKind::Keyword(k),
                    None => TokenKind::Ident(s),
                }
            }
            other => {
                return Err(PolicyError::lex(
                    pos,
                    format!("unexpected character {other:?}"),
                ));
            }
        };
        out.push(Token { kind, pos });
    }
    Ok(out)
}

fn single(lx: &mut Lexer<'_>, kind: TokenKind) -> TokenKind {
    lx.bump();
    kind
}

#[cfg(test)]
mod tests {
    use super::*;
    use TokenKind::*;

    fn kinds(text: &str) -> Vec<TokenKind> {
        tokenize(text)
            .unwrap()
            .into_iter()
            .map(|t| t.kind)
            .collect()
    }

    fn id(s: &str) -> TokenKind {
        Ident(s.to_string())
    }

    #[test]
    fn zone_group_tokens() {
        assert_eq!(
            kinds("zone_group g { a, b }"),
            vec![
                Keyword("zone_group"),
                id("g"),
                LBrace,
                id("a"),
                Comma,
                id("b"),
                RBrace
            ]
        );
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(
            kinds("// note\nservice s {}"),
            vec![Keyword("service"), id("s"), LBrace, RBrace]
        );
    }

    #[test]
    fn dotted_attribute() {
        assert_eq!(
            kinds("tcp.dest_port=8080;"),
            vec![id("tcp"), Dot, id("dest_port"), Eq, Int(8080), Semi]
        );
    }

    #[test]
    fn operators_and_ranges() {
        assert_eq!(
            kinds("a -> b <-> c 1-2 x \\ y ^ z"),
            vec![
                id("a"),
                Arrow,
                id("b"),
                BiArrow,
                id("c"),
                Int(1),
                Minus,
                Int(2),
                id("x"),
                Backslash,
                id("y"),
                Caret,
                id("z")
            ]
        );
    }

    #[test]
    fn quote_styles_normalize() {
        for src in [
            "\"Internal Web\"",
            "``Internal Web''",
            "\u{201c}Internal Web\u{201d}",
        ] {
            assert_eq!(kinds(src), vec![Str("Internal Web".into())], "{src}");
        }
    }

    #[test]
    fn positions_are_tracked() {
        let toks = tokenize("service a {\n  protocol=tcp;\n}").unwrap();
        assert_eq!(toks[3].pos, Pos::new(2, 3));
    }

    #[test]
    fn lexical_error_carries_position() {
        let err = tokenize("service a {\n  $ }").unwrap_err();
        assert_eq!(err.pos(), Some(Pos::new(2, 3)));
    }
}
