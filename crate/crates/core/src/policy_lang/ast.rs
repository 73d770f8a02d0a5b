//! Syntax tree of a single `.policyml` file, before name resolution.

use serde::{Deserialize, Serialize};

use crate::diag::{Pos, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Import { path: String, pos: Pos },
    Load { path: String, pos: Pos },
    Decl(Decl),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decl {
    pub name: String,
    pub pos: Pos,
    pub body: DeclBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeclBody {
    Service(Vec<Attr>),
    ServiceGroup(SetExpr),
    PortGroup(SetExpr),
    ZoneGroup(SetExpr),
    PolicyRule {
        left: Ref,
        op: Operator,
        right: Ref,
        service: SetExpr,
    },
    RuleGroup(Vec<Ref>),
    ReportingRule(Vec<Attr>),
    Policy {
        security: Ref,
        reporting: Ref,
    },
}

impl DeclBody {
    pub fn keyword(&self) -> &'static str {
        match self {
            DeclBody::Service(_) => "service",
            DeclBody::ServiceGroup(_) => "service_group",
            DeclBody::PortGroup(_) => "port_group",
            DeclBody::ZoneGroup(_) => "zone_group",
            DeclBody::PolicyRule { .. } => "policy_rule",
            DeclBody::RuleGroup(_) => "rule_group",
            DeclBody::ReportingRule(_) => "reporting_rule",
            DeclBody::Policy { .. } => "policy",
        }
    }
}

/// A possibly dotted name occurrence, e.g. `iana_services.http`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Ref {
    pub name: String,
    #[serde(skip)]
    pub span: Span,
}

impl Ref {
    pub fn new(name: impl Into<String>, pos: Pos) -> Self {
        Ref {
            name: name.into(),
            span: Span(pos),
        }
    }

    pub fn pos(&self) -> Pos {
        self.span.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "->")]
    Unidirectional,
    #[serde(rename = "<->")]
    Bidirectional,
}

impl Operator {
    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Unidirectional => "->",
            Operator::Bidirectional => "<->",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetOp {
    Intersect,
    Difference,
}

impl SetOp {
    pub fn symbol(self) -> &'static str {
        match self {
            SetOp::Intersect => "^",
            SetOp::Difference => "\\",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Name(Ref),
    Range { lo: u64, hi: u64 },
}

/// Terms joined by `^` and `\`, evaluated left to right.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chain {
    pub first: Term,
    pub rest: Vec<(SetOp, Term)>,
}

/// Union (`,`) of chains; `^` and `\` bind tighter than `,`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SetExpr {
    pub chains: Vec<Chain>,
}

impl SetExpr {
    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.chains
            .iter()
            .flat_map(|c| std::iter::once(&c.first).chain(c.rest.iter().map(|(_, t)| t)))
    }

    pub fn names(&self) -> impl Iterator<Item = &Ref> {
        self.terms().filter_map(|t| match t {
            Term::Name(r) => Some(r),
            Term::Range { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attr {
    pub key: String,
    pub value: Value,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Value {
    Int(u64),
    Range(u64, u64),
    Str(String),
    Name(String),
    /// Comma-separated items.
    List(Vec<Value>),
    /// `{ ... }` holding either `key=value;` pairs or a comma list.
    Block(Vec<Attr>),
    Set(Vec<Value>),
}

impl Value {
    /// Flattens `List`/`Set` nesting into scalar items.
    pub fn items(&self) -> Vec<&Value> {
        match self {
            Value::List(v) | Value::Set(v) => v.iter().flat_map(Value::items).collect(),
            other => vec![other],
        }
    }
}
