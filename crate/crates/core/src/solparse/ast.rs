use serde::{Deserialize, Serialize};

use super::lexer::TokenKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    SourceUnit,
    ContractDef,
    FunctionDef,
    ModifierDef,
    EventDef,
    StateVarDecl,
    Block,
    IfStmt,
    ForStmt,
    WhileStmt,
    ReturnStmt,
    ExprStmt,
    LocalVarDecl,
    EmitStmt,
    Call,
    MemberAccess,
    Index,
    Assign,
    BinaryOp,
    UnaryOp,
    IdentifierRef,
    Literal,
}

/// Half-open range of token indices covered by a node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        TokenSpan { start, end }
    }

    pub fn contains(&self, other: &TokenSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractKind {
    Contract,
    Library,
    Interface,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Public,
    Private,
    Internal,
    External,
}

impl Visibility {
    pub fn parse(word: &str) -> Option<Visibility> {
        match word {
            "public" => Some(Visibility::Public),
            "private" => Some(Visibility::Private),
            "internal" => Some(Visibility::Internal),
            "external" => Some(Visibility::External),
            _ => None,
        }
    }
}

/// A type as written in source, e.g. `mapping(address=>uint256)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeName {
    /// Tokens joined without whitespace.
    pub text: String,
    /// User-defined type identifiers mentioned in the type.
    pub user_types: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Param {
    pub type_name: TypeName,
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionAttrs {
    /// `None` for the fallback function and `constructor` blocks.
    pub name: Option<String>,
    pub visibility: Option<Visibility>,
    pub payable: bool,
    pub mutability: Option<String>,
    pub is_constructor: bool,
    pub modifiers: Vec<String>,
    pub params: Vec<Param>,
    pub returns: Vec<Param>,
    pub has_body: bool,
}

impl FunctionAttrs {
    /// Reachable by outside callers: public, external, or unspecified (public in 0.4).
    pub fn is_externally_reachable(&self) -> bool {
        matches!(
            self.visibility,
            None | Some(Visibility::Public) | Some(Visibility::External)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarAttrs {
    pub name: String,
    pub type_name: TypeName,
    pub visibility: Option<Visibility>,
    pub constant: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attrs {
    None,
    Contract {
        name: String,
        kind: ContractKind,
        bases: Vec<String>,
    },
    Function(FunctionAttrs),
    Modifier {
        name: String,
        params: Vec<Param>,
    },
    Event {
        name: String,
        params: Vec<Param>,
    },
    Var(VarAttrs),
    /// Which optional header parts of a `for` are present, in order
    /// init, condition, update. Children hold the present parts then the body.
    For {
        init: bool,
        condition: bool,
        update: bool,
    },
    If {
        has_else: bool,
    },
    Operator(String),
    Unary {
        op: String,
        prefix: bool,
    },
    Member(String),
    Ident(String),
    Literal {
        kind: TokenKind,
        text: String,
    },
    /// Keyword-only statement such as `break;` or `throw;`.
    Keyword(String),
    /// Region that could not be parsed, kept as raw tokens.
    Opaque,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub kind: NodeKind,
    pub span: TokenSpan,
    pub attrs: Attrs,
    pub children: Vec<AstNode>,
}

impl AstNode {
    pub fn new(kind: NodeKind, span: TokenSpan, attrs: Attrs, children: Vec<AstNode>) -> Self {
        AstNode {
            kind,
            span,
            attrs,
            children,
        }
    }

    /// Pre-order walk over this node and all descendants.
    pub fn walk(&self) -> Walk<'_> {
        Walk { stack: vec![self] }
    }

    pub fn ident(&self) -> Option<&str> {
        match &self.attrs {
            Attrs::Ident(name) if self.kind == NodeKind::IdentifierRef => Some(name),
            _ => None,
        }
    }

    pub fn member(&self) -> Option<&str> {
        match &self.attrs {
            Attrs::Member(name) if self.kind == NodeKind::MemberAccess => Some(name),
            _ => None,
        }
    }

    pub fn operator(&self) -> Option<&str> {
        match &self.attrs {
            Attrs::Operator(op) => Some(op),
            Attrs::Unary { op, .. } => Some(op),
            _ => None,
        }
    }

    pub fn function(&self) -> Option<&FunctionAttrs> {
        match &self.attrs {
            Attrs::Function(f) => Some(f),
            _ => None,
        }
    }

    pub fn contract_name(&self) -> Option<&str> {
        match &self.attrs {
            Attrs::Contract { name, .. } => Some(name),
            _ => None,
        }
    }

    pub fn is_opaque(&self) -> bool {
        matches!(self.attrs, Attrs::Opaque)
    }

    /// For a `Call`, the callee expression.
    pub fn callee(&self) -> Option<&AstNode> {
        (self.kind == NodeKind::Call).then(|| &self.children[0])
    }

    /// For a `Call`, the argument expressions.
    pub fn args(&self) -> &[AstNode] {
        if self.kind == NodeKind::Call {
            &self.children[1..]
        } else {
            &[]
        }
    }

    /// Loop condition of a `for` or `while`.
    pub fn loop_condition(&self) -> Option<&AstNode> {
        match (&self.kind, &self.attrs) {
            (NodeKind::WhileStmt, _) => self.children.first(),
            (NodeKind::ForStmt, Attrs::For { init, condition, .. }) if *condition => {
                self.children.get(usize::from(*init))
            }
            _ => None,
        }
    }

    /// Loop body of a `for` or `while`.
    pub fn loop_body(&self) -> Option<&AstNode> {
        match self.kind {
            NodeKind::WhileStmt | NodeKind::ForStmt => self.children.last(),
            _ => None,
        }
    }

    /// True if any descendant (or self) is the fused `ns.member` builtin, e.g. `msg.sender`.
    pub fn references_builtin(&self, namespace: &str, member: &str) -> bool {
        self.walk()
            .any(|n| n.member() == Some(member) && n.children.first().is_some_and(|o| o.ident() == Some(namespace)))
    }
}

pub struct Walk<'a> {
    stack: Vec<&'a AstNode>,
}

impl<'a> Iterator for Walk<'a> {
    type Item = &'a AstNode;

    fn next(&mut self) -> Option<&'a AstNode> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}
