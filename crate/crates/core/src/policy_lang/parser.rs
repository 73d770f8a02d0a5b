//! Recursive-descent parser producing a [`SourceFile`].

use crate::diag::{Pos, Span};

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::PolicyError;

struct Parser {
    toks: Vec<Token>,
    idx: usize,
    eof: Pos,
}

pub fn parse_source(text: &str) -> Result<SourceFile, PolicyError> {
    let toks = tokenize(text)?;
    let eof = end_pos(text);
    let mut p = Parser { toks, idx: 0, eof };
    let mut items = Vec::new();
    while !p.at_end() {
        items.push(p.item()?);
    }
    Ok(SourceFile { items })
}

fn end_pos(text: &str) -> Pos {
    let line = text.lines().count().max(1) as u32;
    let col = text.lines().last().map_or(0, |l| l.chars().count()) as u32 + 1;
    Pos::new(line, col)
}

impl Parser {
    fn at_end(&self) -> bool {
        self.idx >= self.toks.len()
    }

    fn peek(&self) -> Option<&TokenKind> {
        self.toks.get(self.idx).map(|t| &t.kind)
    }

    fn peek_at(&self, ahead: usize) -> Option<&TokenKind> {
        self.toks.get(self.idx + ahead).map(|t| &t.kind)
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.idx).map_or(self.eof, |t| t.pos)
    }

    fn error(&self, expected: &str) -> PolicyError {
        let found = self
            .peek()
            .map_or_else(|| "end of input".to_string(), ToString::to_string);
        PolicyError::parse(self.pos(), found, expected)
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<Pos, PolicyError> {
        let pos = self.pos();
        if self.eat(&kind) {
            Ok(pos)
        } else {
            Err(self.error(&kind.to_string()))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), PolicyError> {
        let pos = self.pos();
        match self.peek() {
            Some(TokenKind::Ident(s)) => {
                let s = s.clone();
                self.idx += 1;
                Ok((s, pos))
            }
            _ => Err(self.error("identifier")),
        }
    }

    /// Identifier segment where keywords are also allowed (`granularity.policy`).
    fn segment(&mut self) -> Result<String, PolicyError> {
        match self.peek() {
            Some(TokenKind::Ident(s)) => {
                let s = s.clone();
                self.idx += 1;
                Ok(s)
            }
            Some(TokenKind::Keyword(k)) => {
                let k = k.to_string();
                self.idx += 1;
                Ok(k)
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn dotted(&mut self) -> Result<(String, Pos), PolicyError> {
        let pos = self.pos();
        let mut name = self.segment()?;
        while self.peek() == Some(&TokenKind::Dot) {
            self.idx += 1;
            name.push('.');
            name.push_str(&self.segment()?);
        }
        Ok((name, pos))
    }

    fn reference(&mut self) -> Result<Ref, PolicyError> {
        let (name, pos) = self.dotted()?;
        Ok(Ref::new(name, pos))
    }

    fn int(&mut self) -> Result<u64, PolicyError> {
        match self.peek() {
            Some(TokenKind::Int(v)) => {
                let v = *v;
                self.idx += 1;
                Ok(v)
            }
            _ => Err(self.error("integer")),
        }
    }

    fn string(&mut self) -> Result<String, PolicyError> {
        match self.peek() {
            Some(TokenKind::Str(s)) => {
                let s = s.clone();
                self.idx += 1;
                Ok(s)
            }
            _ => Err(self.error("string")),
        }
    }

    fn item(&mut self) -> Result<Item, PolicyError> {
        let pos = self.pos();
        let kw = match self.peek() {
            Some(TokenKind::Keyword(k)) => *k,
            _ => return Err(self.error("declaration keyword")),
        };
        self.idx += 1;
        match kw {
            "import" => {
                let (path, _) = self.dotted()?;
                self.expect(TokenKind::Semi)?;
                Ok(Item::Import { path, pos })
            }
            "load_zone_conduit_model" => {
                let path = self.string()?;
                self.eat(&TokenKind::Semi);
                Ok(Item::Load { path, pos })
            }
            _ => {
                let (name, name_pos) = self.ident()?;
                self.expect(TokenKind::LBrace)?;
                let body = self.decl_body(kw)?;
                self.expect(TokenKind::RBrace)?;
                Ok(Item::Decl(Decl {
                    name,
                    pos: name_pos,
                    body,
                }))
            }
        }
    }

    fn decl_body(&mut self, kw: &str) -> Result<DeclBody, PolicyError> {
        Ok(match kw {
            "service" => DeclBody::Service(self.attrs()?),
            "reporting_rule" => DeclBody::ReportingRule(self.attrs()?),
            "service_group" => DeclBody::ServiceGroup(self.set_expr()?),
            "zone_group" => DeclBody::ZoneGroup(self.set_expr()?),
            "port_group" => DeclBody::PortGroup(self.set_expr()?),
            "policy_rule" => {
                let left = self.reference()?;
                let op = if self.eat(&TokenKind::Arrow) {
                    Operator::Unidirectional
                } else if self.eat(&TokenKind::BiArrow) {
                    Operator::Bidirectional
                } else {
                    return Err(self.error("`->` or `<->`"));
                };
                let right = self.reference()?;
                self.expect(TokenKind::Colon)?;
                let service = self.set_expr()?;
                DeclBody::PolicyRule {
                    left,
                    op,
                    right,
                    service,
                }
            }
            "rule_group" => {
                if self.peek() == Some(&TokenKind::RBrace) {
                    return Ok(DeclBody::RuleGroup(Vec::new()));
                }
                let mut refs = vec![self.reference()?];
                while self.eat(&TokenKind::Comma) {
                    refs.push(self.reference()?);
                }
                DeclBody::RuleGroup(refs)
            }
            "policy" => {
                let security = self.reference()?;
                self.expect(TokenKind::Semi)?;
                let reporting = self.reference()?;
                self.eat(&TokenKind::Semi);
                DeclBody::Policy {
                    security,
                    reporting,
                }
            }
            other => unreachable!("keyword {other} is not a declaration"),
        })
    }

    fn attrs(&mut self) -> Result<Vec<Attr>, PolicyError> {
        let mut out = Vec::new();
        while self.peek() != Some(&TokenKind::RBrace) {
            if self.at_end() {
                return Err(self.error("`}`"));
            }
            let (key, pos) = self.dotted()?;
            self.expect(TokenKind::Eq)?;
            let value = self.value()?;
            out.push(Attr {
                key,
                value,
                span: Span(pos),
            });
            if !self.eat(&TokenKind::Semi) && self.peek() != Some(&TokenKind::RBrace) {
                return Err(self.error("`;`"));
            }
        }
        Ok(out)
    }

    fn value(&mut self) -> Result<Value, PolicyError> {
        let first = self.value_item()?;
        if self.peek() != Some(&TokenKind::Comma) {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat(&TokenKind::Comma) {
            items.push(self.value_item()?);
        }
        Ok(Value::List(items))
    }

    fn value_item(&mut self) -> Result<Value, PolicyError> {
        match self.peek() {
            Some(TokenKind::Int(_)) => {
                let lo = self.int()?;
                if self.eat(&TokenKind::Minus) {
                    Ok(Value::Range(lo, self.int()?))
                } else {
                    Ok(Value::Int(lo))
                }
            }
            Some(TokenKind::Str(_)) => Ok(Value::Str(self.string()?)),
            Some(TokenKind::LBrace) => {
                self.idx += 1;
                let v = if self.block_is_attrs() {
                    Value::Block(self.attrs()?)
                } else if self.peek() == Some(&TokenKind::RBrace) {
                    Value::Set(Vec::new())
                } else {
                    match self.value()? {
                        Value::List(items) => Value::Set(items),
                        single => Value::Set(vec![single]),
                    }
                };
                self.expect(TokenKind::RBrace)?;
                Ok(v)
            }
            Some(TokenKind::Ident(_)) | Some(TokenKind::Keyword(_)) => {
                Ok(Value::Name(self.dotted()?.0))
            }
            _ => Err(self.error("value")),
        }
    }

    /// Looks ahead for `name(.name)* =` at the start of a `{` block.
    fn block_is_attrs(&self) -> bool {
        let mut k = 0;
        loop {
            match self.peek_at(k) {
                Some(TokenKind::Ident(_)) | Some(TokenKind::Keyword(_)) => k += 1,
                _ => return false,
            }
            match self.peek_at(k) {
                Some(TokenKind::Dot) => k += 1,
                Some(TokenKind::Eq) => return true,
                _ => return false,
            }
        }
    }

    fn set_expr(&mut self) -> Result<SetExpr, PolicyError> {
        let mut chains = vec![self.chain()?];
        while self.eat(&TokenKind::Comma) {
            chains.push(self.chain()?);
        }
        Ok(SetExpr { chains })
    }

    fn chain(&mut self) -> Result<Chain, PolicyError> {
        let first = self.term()?;
        let mut rest = Vec::new();
        loop {
            let op = if self.eat(&TokenKind::Caret) {
                SetOp::Intersect
            } else if self.eat(&TokenKind::Backslash) {
                SetOp::Difference
            } else {
                break;
            };
            rest.push((op, self.term()?));
        }
        Ok(Chain { first, rest })
    }

    fn term(&mut self) -> Result<Term, PolicyError> {
        match self.peek() {
            Some(TokenKind::Int(_)) => {
                let lo = self.int()?;
                let hi = if self.eat(&TokenKind::Minus) {
                    self.int()?
                } else {
                    lo
                };
                Ok(Term::Range { lo, hi })
            }
            Some(TokenKind::Ident(_)) => Ok(Term::Name(self.reference()?)),
            _ => Err(self.error("name or port range")),
        }
    }
}
