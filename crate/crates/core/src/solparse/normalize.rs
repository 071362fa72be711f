use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ast::{AstNode, Attrs};
use super::lexer::{Token, TokenKind};
use super::tables;
use crate::corpus::Address;

pub const FUNC: &str = "FUNC";
pub const MOD: &str = "MOD";
pub const EVT: &str = "EVT";
pub const TYPE: &str = "TYPE";
pub const ID: &str = "ID";
pub const NUM: &str = "NUM";
pub const STR: &str = "STR";
pub const ADDR: &str = "ADDR";
pub const BOOL: &str = "BOOL";

/// Emits the tokens covered by `ast` in in-order sequence.
///
/// Binary nodes emit their left operand, then their own operator token, then
/// the right operand. Every other node emits its own tokens and children in
/// source order. Since a node's own tokens sit between its children, this is
/// a walk of each span with children expanded in place.
pub fn serialize_inorder(ast: &AstNode, tokens: &[Token]) -> Vec<Token> {
    let mut out = Vec::with_capacity(ast.span.end.saturating_sub(ast.span.start));
    emit(ast, tokens, &mut out);
    out
}

fn emit(node: &AstNode, tokens: &[Token], out: &mut Vec<Token>) {
    let mut cursor = node.span.start;
    for child in &node.children {
        let own_end = child.span.start.max(cursor);
        out.extend_from_slice(&tokens[cursor..own_end]);
        emit(child, tokens, out);
        cursor = cursor.max(child.span.end);
    }
    if cursor < node.span.end {
        out.extend_from_slice(&tokens[cursor..node.span.end]);
    }
}

/// Declared names by role, collected from an AST.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoleTable {
    pub functions: BTreeSet<String>,
    pub modifiers: BTreeSet<String>,
    pub events: BTreeSet<String>,
    pub types: BTreeSet<String>,
}

impl RoleTable {
    pub fn from_ast(ast: &AstNode) -> RoleTable {
        let mut roles = RoleTable::default();
        for node in ast.walk() {
            match &node.attrs {
                Attrs::Contract { name, bases, .. } => {
                    roles.types.insert(name.clone());
                    roles.add_types(bases);
                }
                Attrs::Function(f) => {
                    if let Some(name) = &f.name {
                        roles.functions.insert(name.clone());
                    }
                    for p in f.params.iter().chain(&f.returns) {
                        roles.add_types(&p.type_name.user_types);
                    }
                }
                Attrs::Modifier { name, params } => {
                    roles.modifiers.insert(name.clone());
                    for p in params {
                        roles.add_types(&p.type_name.user_types);
                    }
                }
                Attrs::Event { name, params } => {
                    roles.events.insert(name.clone());
                    for p in params {
                        roles.add_types(&p.type_name.user_types);
                    }
                }
                Attrs::Var(v) => roles.add_types(&v.type_name.user_types),
                Attrs::Unary { op, .. } if op == "new" => {
                    if let Some(target) = node.children.first().and_then(|c| c.ident()) {
                        let base = target.split('[').next().unwrap_or(target);
                        roles.add_types(&[base.to_string()]);
                    }
                }
                _ => {}
            }
        }
        roles
    }

    fn add_types(&mut self, names: &[String]) {
        for name in names {
            for part in name.split('.') {
                if !tables::is_keyword(part) {
                    self.types.insert(part.to_string());
                }
            }
        }
    }

    fn placeholder(&self, name: &str) -> &'static str {
        if self.functions.contains(name) {
            FUNC
        } else if self.modifiers.contains(name) {
            MOD
        } else if self.events.contains(name) {
            EVT
        } else if self.types.contains(name) {
            TYPE
        } else {
            ID
        }
    }
}

/// Token stream with identifiers, literals, and delimiters abstracted away.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedTokenSequence {
    pub origin: Address,
    pub tokens: Vec<String>,
}

impl NormalizedTokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Normalizes a token stream using role context from `ast`.
pub fn normalize(tokens: &[Token], ast: &AstNode) -> Vec<String> {
    normalize_with_roles(tokens, &RoleTable::from_ast(ast))
}

/// Normalization steps, in order: drop `{ } ( ) [ ] ; ,`; replace literals
/// by class placeholder; replace identifiers by role placeholder; keep
/// keywords, builtins and operators, fusing `msg.sender`-style chains.
pub fn normalize_with_roles(tokens: &[Token], roles: &RoleTable) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        let after_dot = i > 0 && tokens[i - 1].kind == TokenKind::Operator && tokens[i - 1].text == ".";
        match t.kind {
            TokenKind::Punctuation => {}
            TokenKind::NumberLiteral => out.push(NUM.to_string()),
            TokenKind::StringLiteral => out.push(STR.to_string()),
            TokenKind::AddressLiteral => out.push(ADDR.to_string()),
            TokenKind::BoolLiteral => out.push(BOOL.to_string()),
            TokenKind::Keyword | TokenKind::Operator => out.push(t.text.clone()),
            TokenKind::Builtin => {
                let fused = tables::NAMESPACES.contains(&t.text.as_str())
                    && tokens
                        .get(i + 1)
                        .is_some_and(|d| d.kind == TokenKind::Operator && d.text == ".")
                    && tokens.get(i + 2).is_some_and(|m| {
                        matches!(m.kind, TokenKind::Identifier | TokenKind::Keyword | TokenKind::Builtin)
                    });
                if fused {
                    out.push(format!("{}.{}", t.text, tokens[i + 2].text));
                    i += 3;
                    continue;
                }
                out.push(t.text.clone());
            }
            TokenKind::Identifier => {
                if after_dot && tables::is_builtin_member(&t.text) {
                    out.push(t.text.clone());
                } else {
                    out.push(roles.placeholder(&t.text).to_string());
                }
            }
        }
        i += 1;
    }
    out
}

/// Renders a normalized sequence back to source-like text, printing each
/// placeholder as a representative lexeme of its class.
pub fn render_placeholders(tokens: &[String]) -> String {
    tokens
        .iter()
        .map(|t| match t.as_str() {
            NUM => "0".to_string(),
            STR => "\"\"".to_string(),
            ADDR => format!("0x{}", "0".repeat(40)),
            BOOL => "true".to_string(),
            other => other.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A role table declaring each role placeholder under its own name.
pub fn placeholder_roles() -> RoleTable {
    RoleTable {
        functions: [FUNC.to_string()].into(),
        modifiers: [MOD.to_string()].into(),
        events: [EVT.to_string()].into(),
        types: [TYPE.to_string()].into(),
    }
}
