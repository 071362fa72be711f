//! Solidity subset front end: tokens, AST, in-order serialization and
//! normalization into placeholder token streams.

mod ast;
mod lexer;
mod normalize;
mod parser;
pub mod tables;

pub use ast::*;
pub use lexer::{tokenize, Token, TokenKind};
pub use normalize::{
    normalize, normalize_with_roles, placeholder_roles, render_placeholders, serialize_inorder,
    NormalizedTokenSequence, RoleTable, ADDR, BOOL, EVT, FUNC, ID, MOD, NUM, STR, TYPE,
};
pub use parser::{parse, ParseOutput};

use thiserror::Error;

use crate::corpus::Address;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolError {
    #[error("lex error at {line}:{column}: {snippet}")]
    Lex { line: u32, column: u32, snippet: String },
    #[error("unclosed brace opened at {line}:{column}")]
    ParseFatal { line: u32, column: u32 },
}

/// A tokenized and parsed source file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceFile {
    pub text: String,
    pub tokens: Vec<Token>,
    pub ast: AstNode,
    pub recoveries: usize,
}

impl SourceFile {
    pub fn parse(text: &str) -> Result<SourceFile, SolError> {
        let tokens = tokenize(text)?;
        let ParseOutput { ast, recoveries } = parse(&tokens)?;
        Ok(SourceFile {
            text: text.to_string(),
            tokens,
            ast,
            recoveries,
        })
    }

    pub fn normalized(&self, origin: &Address) -> NormalizedTokenSequence {
        let ordered = serialize_inorder(&self.ast, &self.tokens);
        NormalizedTokenSequence {
            origin: origin.clone(),
            tokens: normalize(&ordered, &self.ast),
        }
    }

    /// 1-based source line of a token index.
    pub fn line_of(&self, token_index: usize) -> u32 {
        self.tokens.get(token_index).map_or(1, |t| t.line)
    }

    /// Trimmed text of a 1-based source line.
    pub fn line_text(&self, line: u32) -> &str {
        self.text
            .lines()
            .nth(line.saturating_sub(1) as usize)
            .unwrap_or("")
            .trim()
    }

    pub fn contracts(&self) -> impl Iterator<Item = &AstNode> {
        self.ast.children.iter().filter(|c| c.kind == NodeKind::ContractDef)
    }
}

#[cfg(test)]
mod tests;
