use serde::{Deserialize, Serialize};
use std::fmt;

use super::tables;
use super::SolError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Keyword,
    Identifier,
    Builtin,
    NumberLiteral,
    StringLiteral,
    AddressLiteral,
    BoolLiteral,
    Operator,
    Punctuation,
}

impl TokenKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::Keyword => "keyword",
            TokenKind::Identifier => "identifier",
            TokenKind::Builtin => "builtin",
            TokenKind::NumberLiteral => "number-literal",
            TokenKind::StringLiteral => "string-literal",
            TokenKind::AddressLiteral => "address-literal",
            TokenKind::BoolLiteral => "bool-literal",
            TokenKind::Operator => "operator",
            TokenKind::Punctuation => "punctuation",
        }
    }

    pub fn is_literal(self) -> bool {
        matches!(
            self,
            TokenKind::NumberLiteral | TokenKind::StringLiteral | TokenKind::AddressLiteral | TokenKind::BoolLiteral
        )
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub column: u32,
}

impl Token {
    pub fn is(&self, text: &str) -> bool {
        self.text == text && !self.kind.is_literal()
    }
}

impl fmt::Display for Token {
    /// Debug dump line: `<kind>\t<text>\t<line>:<col>`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}:{}", self.kind, self.text, self.line, self.column)
    }
}

// Longest first.
const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "**", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=",
    "|=", "&=", "^=", "<<", ">>", "=>", "=", "<", ">", "+", "-", "*", "/", "%", "!", "~", "&", "|", "^", "?", ":", ".",
];

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    column: u32,
    source: &'a str,
}

impl<'a> Cursor<'a> {
    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek(i) == Some(c))
    }

    fn error(&self, line: u32, column: u32) -> SolError {
        let snippet = self
            .source
            .lines()
            .nth(line as usize - 1)
            .unwrap_or("")
            .trim()
            .chars()
            .take(60)
            .collect();
        SolError::Lex { line, column, snippet }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

/// Splits Solidity source into tokens.
///
/// Comments and `pragma`/`import` directives are dropped. Every other
/// non-whitespace character ends up in exactly one token.
pub fn tokenize(source: &str) -> Result<Vec<Token>, SolError> {
    let mut cur = Cursor {
        chars: source.chars().collect(),
        pos: 0,
        line: 1,
        column: 1,
        source,
    };
    let mut tokens = Vec::new();

    while let Some(c) = cur.peek(0) {
        let (line, column) = (cur.line, cur.column);
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if cur.starts_with("//") {
            while let Some(c) = cur.peek(0) {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if cur.starts_with("/*") {
            cur.bump();
            cur.bump();
            loop {
                if cur.starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    return Err(cur.error(line, column));
                }
            }
            continue;
        }

        let push = |tokens: &mut Vec<Token>, kind, text: String| {
            tokens.push(Token {
                kind,
                text,
                line,
                column,
            })
        };

        if is_ident_start(c) {
            let mut word = String::new();
            while let Some(c) = cur.peek(0).filter(|&c| is_ident_continue(c)) {
                word.push(c);
                cur.bump();
            }
            if word == "pragma" || word == "import" {
                skip_directive(&mut cur)?;
                continue;
            }
            if (word == "hex" || word == "unicode") && matches!(cur.peek(0), Some('"' | '\'')) {
                let body = read_string(&mut cur, line, column)?;
                push(&mut tokens, TokenKind::StringLiteral, word + &body);
                continue;
            }
            let kind = if word == "true" || word == "false" {
                TokenKind::BoolLiteral
            } else if tables::is_keyword(&word) {
                TokenKind::Keyword
            } else if tables::is_global_builtin(&word) {
                TokenKind::Builtin
            } else {
                TokenKind::Identifier
            };
            push(&mut tokens, kind, word);
            continue;
        }

        if c.is_ascii_digit() {
            let (kind, text) = read_number(&mut cur);
            push(&mut tokens, kind, text);
            continue;
        }

        if c == '"' || c == '\'' {
            let text = read_string(&mut cur, line, column)?;
            push(&mut tokens, TokenKind::StringLiteral, text);
            continue;
        }

        if matches!(c, '{' | '}' | '(' | ')' | '[' | ']' | ';' | ',') {
            cur.bump();
            push(&mut tokens, TokenKind::Punctuation, c.to_string());
            continue;
        }

        let op = OPERATORS
            .iter()
            .find(|op| cur.starts_with(op))
            .map(|op| op.to_string())
            .unwrap_or_else(|| c.to_string());
        for _ in 0..op.chars().count() {
            cur.bump();
        }
        push(&mut tokens, TokenKind::Operator, op);
    }
    Ok(tokens)
}

fn skip_directive(cur: &mut Cursor<'_>) -> Result<(), SolError> {
    while let Some(c) = cur.peek(0) {
        match c {
            ';' => {
                cur.bump();
                return Ok(());
            }
            '"' | '\'' => {
                let (line, column) = (cur.line, cur.column);
                read_string(cur, line, column)?;
            }
            _ => {
                cur.bump();
            }
        }
    }
    Ok(())
}

fn read_string(cur: &mut Cursor<'_>, line: u32, column: u32) -> Result<String, SolError> {
    let quote = cur.bump().expect("caller saw a quote");
    let mut text = String::from(quote);
    loop {
        match cur.bump() {
            None | Some('\n') => return Err(cur.error(line, column)),
            Some('\\') => {
                text.push('\\');
                match cur.bump() {
                    None => return Err(cur.error(line, column)),
                    Some(c) => text.push(c),
                }
            }
            Some(c) => {
                text.push(c);
                if c == quote {
                    return Ok(text);
                }
            }
        }
    }
}

fn read_number(cur: &mut Cursor<'_>) -> (TokenKind, String) {
    let mut text = String::new();
    if cur.starts_with("0x") || cur.starts_with("0X") {
        text.push(cur.bump().unwrap());
        text.push(cur.bump().unwrap());
        let mut digits = 0;
        while let Some(c) = cur.peek(0).filter(|c| c.is_ascii_hexdigit() || *c == '_') {
            if c != '_' {
                digits += 1;
            }
            text.push(c);
            cur.bump();
        }
        let kind = if digits == 40 {
            TokenKind::AddressLiteral
        } else {
            TokenKind::NumberLiteral
        };
        return (kind, text);
    }
    let take_digits = |cur: &mut Cursor<'_>, text: &mut String| {
        while let Some(c) = cur.peek(0).filter(|c| c.is_ascii_digit() || *c == '_') {
            text.push(c);
            cur.bump();
        }
    };
    take_digits(cur, &mut text);
    if cur.peek(0) == Some('.') && cur.peek(1).is_some_and(|c| c.is_ascii_digit()) {
        text.push(cur.bump().unwrap());
        take_digits(cur, &mut text);
    }
    if matches!(cur.peek(0), Some('e' | 'E')) {
        let signed = cur.peek(1) == Some('-') && cur.peek(2).is_some_and(|c| c.is_ascii_digit());
        if signed || cur.peek(1).is_some_and(|c| c.is_ascii_digit()) {
            text.push(cur.bump().unwrap());
            if signed {
                text.push(cur.bump().unwrap());
            }
            take_digits(cur, &mut text);
        }
    }
    (TokenKind::NumberLiteral, text)
}
