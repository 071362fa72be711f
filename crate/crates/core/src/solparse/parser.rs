//! Recursive-descent parser for a Solidity 0.4-era subset.
//!
//! Anything outside the subset (assembly, structs, enums, `using`, tuples,
//! 0.5+ call options) is kept as an opaque `ExprStmt` over its raw tokens.
//! Recovery skips to the next `;` at nesting depth zero, or over a whole
//! `{ ... }` group if one opens first.

use super::ast::*;
use super::lexer::{Token, TokenKind};
use super::tables;
use super::SolError;

/// Result of parsing one source file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseOutput {
    pub ast: AstNode,
    /// Number of regions replaced by opaque statements.
    pub recoveries: usize,
}

pub fn parse(tokens: &[Token]) -> Result<ParseOutput, SolError> {
    check_braces(tokens)?;
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        recoveries: 0,
    };
    let ast = p.source_unit();
    Ok(ParseOutput {
        ast,
        recoveries: p.recoveries,
    })
}

fn check_braces(tokens: &[Token]) -> Result<(), SolError> {
    let mut open: Vec<&Token> = Vec::new();
    for t in tokens.iter().filter(|t| t.kind == TokenKind::Punctuation) {
        match t.text.as_str() {
            "{" => open.push(t),
            "}" => {
                open.pop();
            }
            _ => {}
        }
    }
    match open.first() {
        Some(t) => Err(SolError::ParseFatal {
            line: t.line,
            column: t.column,
        }),
        None => Ok(()),
    }
}

/// Internal marker: the current construct is outside the grammar.
struct Stuck;

type PResult<T> = Result<T, Stuck>;

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
    recoveries: usize,
}

fn binary_precedence(op: &str) -> Option<u8> {
    Some(match op {
        "||" => 1,
        "&&" => 2,
        "==" | "!=" => 3,
        "<" | ">" | "<=" | ">=" => 4,
        "|" => 5,
        "^" => 6,
        "&" => 7,
        "<<" | ">>" | ">>>" => 8,
        "+" | "-" => 9,
        "*" | "/" | "%" => 10,
        "**" => 11,
        _ => return None,
    })
}

fn is_assign_op(op: &str) -> bool {
    matches!(
        op,
        "=" | "+=" | "-=" | "*=" | "/=" | "%=" | "|=" | "&=" | "^=" | "<<=" | ">>=" | ">>>="
    )
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, ahead: usize) -> Option<&'t Token> {
        self.toks.get(self.pos + ahead)
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.is(text))
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.at(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, text: &str) -> PResult<()> {
        if self.eat(text) {
            Ok(())
        } else {
            Err(Stuck)
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Ok(t.text.clone())
            }
            _ => Err(Stuck),
        }
    }

    fn node(&self, kind: NodeKind, start: usize, attrs: Attrs, children: Vec<AstNode>) -> AstNode {
        AstNode::new(kind, TokenSpan::new(start, self.pos), attrs, children)
    }

    fn recover_from(&mut self, start: usize) -> AstNode {
        self.pos = start;
        self.recoveries += 1;
        let mut depth = 0usize;
        while let Some(t) = self.peek() {
            if t.kind == TokenKind::Punctuation {
                match t.text.as_str() {
                    "{" if depth == 0 => {
                        self.skip_brace_group();
                        break;
                    }
                    "(" | "[" | "{" => depth += 1,
                    "}" if depth == 0 => {
                        if self.pos == start {
                            self.pos += 1;
                        }
                        break;
                    }
                    ")" | "]" | "}" => depth = depth.saturating_sub(1),
                    ";" if depth == 0 => {
                        self.pos += 1;
                        break;
                    }
                    _ => {}
                }
            }
            self.pos += 1;
        }
        self.node(NodeKind::ExprStmt, start, Attrs::Opaque, vec![])
    }

    fn skip_brace_group(&mut self) {
        let mut depth = 0usize;
        while let Some(t) = self.peek() {
            self.pos += 1;
            if t.kind == TokenKind::Punctuation {
                match t.text.as_str() {
                    "{" => depth += 1,
                    "}" => {
                        depth -= 1;
                        if depth == 0 {
                            return;
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    fn skip_balanced_parens(&mut self) -> PResult<()> {
        self.expect("(")?;
        let mut depth = 1usize;
        while let Some(t) = self.peek() {
            self.pos += 1;
            if t.is("(") {
                depth += 1;
            } else if t.is(")") {
                depth -= 1;
                if depth == 0 {
                    return Ok(());
                }
            } else if t.is("{") || t.is("}") || t.is(";") {
                return Err(Stuck);
            }
        }
        Err(Stuck)
    }

    // ---- declarations ----

    fn source_unit(&mut self) -> AstNode {
        let mut children = Vec::new();
        while self.peek().is_some() {
            let start = self.pos;
            if self.at("contract") || self.at("library") || self.at("interface") {
                match self.contract() {
                    Ok(c) => children.push(c),
                    Err(Stuck) => children.push(self.recover_from(start)),
                }
            } else {
                children.push(self.recover_from(start));
            }
        }
        AstNode::new(
            NodeKind::SourceUnit,
            TokenSpan::new(0, self.toks.len()),
            Attrs::None,
            children,
        )
    }

    fn contract(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let kind = match self.peek().map(|t| t.text.as_str()) {
            Some("contract") => ContractKind::Contract,
            Some("library") => ContractKind::Library,
            _ => ContractKind::Interface,
        };
        self.pos += 1;
        let name = self.ident()?;
        let mut bases = Vec::new();
        if self.eat("is") {
            loop {
                let mut base = self.ident()?;
                while self.at(".") {
                    self.pos += 1;
                    base.push('.');
                    base.push_str(&self.ident()?);
                }
                if self.at("(") {
                    self.skip_balanced_parens()?;
                }
                bases.push(base);
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect("{")?;
        let mut members = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(Stuck);
            }
            members.push(self.member(&name));
        }
        self.expect("}")?;
        Ok(self.node(
            NodeKind::ContractDef,
            start,
            Attrs::Contract { name, kind, bases },
            members,
        ))
    }

    fn member(&mut self, contract_name: &str) -> AstNode {
        let start = self.pos;
        let parsed = match self.peek().map(|t| t.text.as_str()) {
            Some("function") | Some("constructor") => self.function(contract_name),
            Some("modifier") => self.modifier(),
            Some("event") => self.event(),
            Some("struct") | Some("enum") | Some("using") => Err(Stuck),
            _ => self.state_var(),
        };
        parsed.unwrap_or_else(|Stuck| self.recover_from(start))
    }

    fn function(&mut self, contract_name: &str) -> PResult<AstNode> {
        let start = self.pos;
        let ctor_keyword = self.eat("constructor");
        if !ctor_keyword {
            self.expect("function")?;
        }
        let name = if ctor_keyword { None } else { self.ident().ok() };
        let params = self.params()?;
        let mut attrs = FunctionAttrs {
            is_constructor: ctor_keyword || name.as_deref() == Some(contract_name),
            name,
            visibility: None,
            payable: false,
            mutability: None,
            modifiers: Vec::new(),
            params,
            returns: Vec::new(),
            has_body: false,
        };
        let mut children = Vec::new();
        loop {
            let t = self.peek().ok_or(Stuck)?;
            match t.text.as_str() {
                w if t.kind == TokenKind::Keyword && tables::is_visibility(w) => {
                    attrs.visibility = Visibility::parse(w);
                    self.pos += 1;
                }
                "payable" => {
                    attrs.payable = true;
                    self.pos += 1;
                }
                "constant" | "view" | "pure" => {
                    attrs.mutability = Some(t.text.clone());
                    self.pos += 1;
                }
                "returns" => {
                    self.pos += 1;
                    attrs.returns = self.params()?;
                }
                "{" if t.kind == TokenKind::Punctuation => {
                    children.push(self.block()?);
                    attrs.has_body = true;
                    break;
                }
                ";" if t.kind == TokenKind::Punctuation => {
                    self.pos += 1;
                    break;
                }
                _ if t.kind == TokenKind::Identifier => {
                    let mut m = self.ident()?;
                    while self.at(".") {
                        self.pos += 1;
                        m.push('.');
                        m.push_str(&self.ident()?);
                    }
                    if self.at("(") {
                        self.skip_balanced_parens()?;
                    }
                    attrs.modifiers.push(m);
                }
                _ => return Err(Stuck),
            }
        }
        Ok(self.node(NodeKind::FunctionDef, start, Attrs::Function(attrs), children))
    }

    fn modifier(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.expect("modifier")?;
        let name = self.ident()?;
        let params = if self.at("(") { self.params()? } else { Vec::new() };
        let body = self.block()?;
        Ok(self.node(
            NodeKind::ModifierDef,
            start,
            Attrs::Modifier { name, params },
            vec![body],
        ))
    }

    fn event(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.expect("event")?;
        let name = self.ident()?;
        let params = self.params()?;
        self.eat("anonymous");
        self.expect(";")?;
        Ok(self.node(NodeKind::EventDef, start, Attrs::Event { name, params }, vec![]))
    }

    fn state_var(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let type_name = self.type_name()?;
        let mut visibility = None;
        let mut constant = false;
        loop {
            match self.peek().map(|t| t.text.as_str()) {
                Some(w @ ("public" | "private" | "internal")) => {
                    visibility = Visibility::parse(w);
                    self.pos += 1;
                }
                Some("constant") => {
                    constant = true;
                    self.pos += 1;
                }
                _ => break,
            }
        }
        let name = self.ident()?;
        let mut children = Vec::new();
        if self.eat("=") {
            children.push(self.expression()?);
        }
        self.expect(";")?;
        Ok(self.node(
            NodeKind::StateVarDecl,
            start,
            Attrs::Var(VarAttrs {
                name,
                type_name,
                visibility,
                constant,
            }),
            children,
        ))
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect("(")?;
        let mut params = Vec::new();
        if self.eat(")") {
            return Ok(params);
        }
        loop {
            let type_name = self.type_name()?;
            while matches!(
                self.peek().map(|t| t.text.as_str()),
                Some("indexed" | "memory" | "storage" | "calldata" | "payable")
            ) {
                self.pos += 1;
            }
            let name = self.ident().ok();
            params.push(Param { type_name, name });
            if self.eat(",") {
                continue;
            }
            self.expect(")")?;
            return Ok(params);
        }
    }

    fn type_name(&mut self) -> PResult<TypeName> {
        let start = self.pos;
        let mut user_types = Vec::new();
        let t = self.peek().ok_or(Stuck)?;
        if t.is("mapping") {
            self.pos += 1;
            self.expect("(")?;
            user_types.extend(self.type_name()?.user_types);
            self.expect("=>")?;
            user_types.extend(self.type_name()?.user_types);
            self.expect(")")?;
        } else if t.kind == TokenKind::Keyword && tables::is_elementary_type(&t.text) {
            self.pos += 1;
            if t.text == "address" && self.at("payable") {
                self.pos += 1;
            }
        } else if t.kind == TokenKind::Identifier {
            let mut name = self.ident()?;
            while self.at(".") && self.peek_at(1).is_some_and(|t| t.kind == TokenKind::Identifier) {
                self.pos += 1;
                name.push('.');
                name.push_str(&self.ident()?);
            }
            user_types.push(name);
        } else {
            return Err(Stuck);
        }
        while self.eat("[") {
            if !self.at("]") {
                self.expression()?;
            }
            self.expect("]")?;
        }
        let text = self.toks[start..self.pos].iter().map(|t| t.text.as_str()).collect();
        Ok(TypeName { text, user_types })
    }

    // ---- statements ----

    fn block(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.expect("{")?;
        let mut stmts = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(Stuck);
            }
            stmts.push(self.statement_or_recover());
        }
        self.expect("}")?;
        Ok(self.node(NodeKind::Block, start, Attrs::None, stmts))
    }

    fn statement_or_recover(&mut self) -> AstNode {
        let start = self.pos;
        self.statement().unwrap_or_else(|Stuck| self.recover_from(start))
    }

    fn statement(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let t = self.peek().ok_or(Stuck)?;
        if t.kind.is_literal() {
            return self.simple_statement();
        }
        match t.text.as_str() {
            "{" => self.block(),
            "if" => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.expression()?;
                self.expect(")")?;
                let mut children = vec![cond, self.statement_or_recover()];
                let has_else = self.eat("else");
                if has_else {
                    children.push(self.statement_or_recover());
                }
                Ok(self.node(NodeKind::IfStmt, start, Attrs::If { has_else }, children))
            }
            "for" => {
                self.pos += 1;
                self.expect("(")?;
                let mut children = Vec::new();
                let init = !self.eat(";");
                if init {
                    children.push(self.simple_statement()?);
                }
                let condition = !self.at(";");
                if condition {
                    children.push(self.expression()?);
                }
                self.expect(";")?;
                let update = !self.at(")");
                if update {
                    children.push(self.expression()?);
                }
                self.expect(")")?;
                children.push(self.statement_or_recover());
                Ok(self.node(
                    NodeKind::ForStmt,
                    start,
                    Attrs::For {
                        init,
                        condition,
                        update,
                    },
                    children,
                ))
            }
            "while" => {
                self.pos += 1;
                self.expect("(")?;
                let cond = self.expression()?;
                self.expect(")")?;
                let body = self.statement_or_recover();
                Ok(self.node(NodeKind::WhileStmt, start, Attrs::None, vec![cond, body]))
            }
            "return" => {
                self.pos += 1;
                let mut children = Vec::new();
                if !self.at(";") {
                    children.push(self.expression()?);
                }
                self.expect(";")?;
                Ok(self.node(NodeKind::ReturnStmt, start, Attrs::None, children))
            }
            "emit" => {
                self.pos += 1;
                let call = self.expression()?;
                self.expect(";")?;
                Ok(self.node(NodeKind::EmitStmt, start, Attrs::None, vec![call]))
            }
            "break" | "continue" | "throw" => {
                let word = t.text.clone();
                self.pos += 1;
                self.expect(";")?;
                Ok(self.node(NodeKind::ExprStmt, start, Attrs::Keyword(word), vec![]))
            }
            "assembly" | "do" => Err(Stuck),
            _ => self.simple_statement(),
        }
    }

    /// Local declaration or expression statement, including its `;`.
    fn simple_statement(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        if let Ok(decl) = self.local_decl() {
            return Ok(decl);
        }
        self.pos = start;
        let expr = self.expression()?;
        self.expect(";")?;
        Ok(self.node(NodeKind::ExprStmt, start, Attrs::None, vec![expr]))
    }

    fn local_decl(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let type_name = self.type_name()?;
        while matches!(
            self.peek().map(|t| t.text.as_str()),
            Some("memory" | "storage" | "calldata")
        ) {
            self.pos += 1;
        }
        let name = self.ident()?;
        let mut children = Vec::new();
        if self.eat("=") {
            children.push(self.expression()?);
        }
        self.expect(";")?;
        Ok(self.node(
            NodeKind::LocalVarDecl,
            start,
            Attrs::Var(VarAttrs {
                name,
                type_name,
                visibility: None,
                constant: false,
            }),
            children,
        ))
    }

    // ---- expressions ----

    fn expression(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let lhs = self.ternary()?;
        match self.peek() {
            Some(t) if t.kind == TokenKind::Operator && is_assign_op(&t.text) => {
                self.pos += 1;
                let rhs = self.expression()?;
                Ok(self.node(NodeKind::Assign, start, Attrs::Operator(t.text.clone()), vec![lhs, rhs]))
            }
            _ => Ok(lhs),
        }
    }

    fn ternary(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let cond = self.binary(1)?;
        if !self.eat("?") {
            return Ok(cond);
        }
        let then = self.expression()?;
        self.expect(":")?;
        let other = self.expression()?;
        Ok(self.node(
            NodeKind::BinaryOp,
            start,
            Attrs::Operator("?:".into()),
            vec![cond, then, other],
        ))
    }

    fn binary(&mut self, min_prec: u8) -> PResult<AstNode> {
        let start = self.pos;
        let mut lhs = self.unary()?;
        while let Some(t) = self.peek().filter(|t| t.kind == TokenKind::Operator) {
            let Some(prec) = binary_precedence(&t.text).filter(|&p| p >= min_prec) else {
                break;
            };
            self.pos += 1;
            let next = if t.text == "**" { prec } else { prec + 1 };
            let rhs = self.binary(next)?;
            lhs = self.node(
                NodeKind::BinaryOp,
                start,
                Attrs::Operator(t.text.clone()),
                vec![lhs, rhs],
            );
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let t = self.peek().ok_or(Stuck)?;
        let prefix = (t.kind == TokenKind::Operator && matches!(t.text.as_str(), "!" | "-" | "~" | "++" | "--" | "+"))
            || t.is("delete");
        if prefix {
            self.pos += 1;
            let operand = self.unary()?;
            return Ok(self.node(
                NodeKind::UnaryOp,
                start,
                Attrs::Unary {
                    op: t.text.clone(),
                    prefix: true,
                },
                vec![operand],
            ));
        }
        if t.is("new") {
            self.pos += 1;
            let type_start = self.pos;
            let ty = self.type_name()?;
            let target = self.node(NodeKind::IdentifierRef, type_start, Attrs::Ident(ty.text), vec![]);
            let created = self.node(
                NodeKind::UnaryOp,
                start,
                Attrs::Unary {
                    op: "new".into(),
                    prefix: true,
                },
                vec![target],
            );
            return self.postfix(start, created);
        }
        let primary = self.primary()?;
        self.postfix(start, primary)
    }

    fn postfix(&mut self, start: usize, mut expr: AstNode) -> PResult<AstNode> {
        while let Some(t) = self.peek() {
            match (t.kind, t.text.as_str()) {
                (TokenKind::Punctuation, "(") => {
                    self.pos += 1;
                    let mut children = vec![expr];
                    if !self.eat(")") {
                        loop {
                            children.push(self.expression()?);
                            if self.eat(",") {
                                continue;
                            }
                            self.expect(")")?;
                            break;
                        }
                    }
                    expr = self.node(NodeKind::Call, start, Attrs::None, children);
                }
                (TokenKind::Punctuation, "[") => {
                    self.pos += 1;
                    let mut children = vec![expr];
                    if !self.at("]") {
                        children.push(self.expression()?);
                    }
                    self.expect("]")?;
                    expr = self.node(NodeKind::Index, start, Attrs::None, children);
                }
                (TokenKind::Operator, ".") => {
                    self.pos += 1;
                    let m = self.peek().ok_or(Stuck)?;
                    if !matches!(m.kind, TokenKind::Identifier | TokenKind::Keyword | TokenKind::Builtin) {
                        return Err(Stuck);
                    }
                    self.pos += 1;
                    expr = self.node(NodeKind::MemberAccess, start, Attrs::Member(m.text.clone()), vec![expr]);
                }
                (TokenKind::Operator, "++" | "--") => {
                    self.pos += 1;
                    expr = self.node(
                        NodeKind::UnaryOp,
                        start,
                        Attrs::Unary {
                            op: t.text.clone(),
                            prefix: false,
                        },
                        vec![expr],
                    );
                }
                _ => break,
            }
        }
        Ok(expr)
    }

    fn primary(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let t = self.peek().ok_or(Stuck)?;
        match t.kind {
            k if k.is_literal() => {
                self.pos += 1;
                if k == TokenKind::NumberLiteral
                    && self
                        .peek()
                        .is_some_and(|u| u.kind == TokenKind::Keyword && tables::is_ether_unit(&u.text))
                {
                    self.pos += 1;
                }
                Ok(self.node(
                    NodeKind::Literal,
                    start,
                    Attrs::Literal {
                        kind: k,
                        text: t.text.clone(),
                    },
                    vec![],
                ))
            }
            TokenKind::Identifier | TokenKind::Builtin => {
                self.pos += 1;
                Ok(self.node(NodeKind::IdentifierRef, start, Attrs::Ident(t.text.clone()), vec![]))
            }
            TokenKind::Keyword if tables::is_elementary_type(&t.text) && t.text != "var" => {
                self.pos += 1;
                Ok(self.node(NodeKind::IdentifierRef, start, Attrs::Ident(t.text.clone()), vec![]))
            }
            TokenKind::Punctuation if t.text == "(" => {
                self.pos += 1;
                let mut inner = self.expression()?;
                self.expect(")")?;
                inner.span = TokenSpan::new(start, self.pos);
                Ok(inner)
            }
            _ => Err(Stuck),
        }
    }
}
