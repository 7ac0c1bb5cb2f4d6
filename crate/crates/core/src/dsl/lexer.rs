//! Tokenizer for `.muit` sources.
//!
//! Comments (`//` and `/* */`) and whitespace are dropped. String literals are
//! unescaped. A date of the form `YYYY-MM-DD` (optionally followed by
//! `THH:MM[:SS]`) lexes as a single DateTime literal; write `2014 - 07` with
//! spaces for arithmetic. Errors are reported as diagnostics and an error
//! token, and lexing continues.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::diag::{Code, Diagnostic, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Keyword {
    Entity,
    Operation,
    Screen,
    Widget,
    Touch,
    Handler,
    Var,
    Foreach,
    In,
    If,
    Elseif,
    Else,
    Return,
    When,
    Where,
    Header,
    Import,
    True,
    False,
    Null,
    Async,
    Module,
}

impl Keyword {
    pub const ALL: [Keyword; 22] = [
        Keyword::Entity,
        Keyword::Operation,
        Keyword::Screen,
        Keyword::Widget,
        Keyword::Touch,
        Keyword::Handler,
        Keyword::Var,
        Keyword::Foreach,
        Keyword::In,
        Keyword::If,
        Keyword::Elseif,
        Keyword::Else,
        Keyword::Return,
        Keyword::When,
        Keyword::Where,
        Keyword::Header,
        Keyword::Import,
        Keyword::True,
        Keyword::False,
        Keyword::Null,
        Keyword::Async,
        Keyword::Module,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Entity => "entity",
            Keyword::Operation => "operation",
            Keyword::Screen => "screen",
            Keyword::Widget => "widget",
            Keyword::Touch => "touch",
            Keyword::Handler => "handler",
            Keyword::Var => "var",
            Keyword::Foreach => "foreach",
            Keyword::In => "in",
            Keyword::If => "if",
            Keyword::Elseif => "elseif",
            Keyword::Else => "else",
            Keyword::Return => "return",
            Keyword::When => "when",
            Keyword::Where => "where",
            Keyword::Header => "header",
            Keyword::Import => "import",
            Keyword::True => "true",
            Keyword::False => "false",
            Keyword::Null => "null",
            Keyword::Async => "async",
            Keyword::Module => "module",
        }
    }

    pub fn lookup(s: &str) -> Option<Keyword> {
        Keyword::ALL.iter().copied().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenKind {
    Ident(String),
    Keyword(Keyword),
    Str(String),
    Int(i64),
    DateTime(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Lt,
    Gt,
    Le,
    Ge,
    EqEq,
    Ne,
    Assign,
    Plus,
    Minus,
    Star,
    Percent,
    Bang,
    AndAnd,
    OrOr,
    Comma,
    Semi,
    Colon,
    Dot,
    At,
    Slash,
    Error(String),
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenKind::Ident(name) => return write!(f, "identifier `{name}`"),
            TokenKind::Keyword(k) => return write!(f, "`{}`", k.as_str()),
            TokenKind::Str(_) => "string literal",
            TokenKind::Int(_) => "integer literal",
            TokenKind::DateTime(_) => "DateTime literal",
            TokenKind::LBrace => "`{`",
            TokenKind::RBrace => "`}`",
            TokenKind::LParen => "`(`",
            TokenKind::RParen => "`)`",
            TokenKind::LBracket => "`[`",
            TokenKind::RBracket => "`]`",
            TokenKind::Lt => "`<`",
            TokenKind::Gt => "`>`",
            TokenKind::Le => "`<=`",
            TokenKind::Ge => "`>=`",
            TokenKind::EqEq => "`==`",
            TokenKind::Ne => "`!=`",
            TokenKind::Assign => "`=`",
            TokenKind::Plus => "`+`",
            TokenKind::Minus => "`-`",
            TokenKind::Star => "`*`",
            TokenKind::Percent => "`%`",
            TokenKind::Bang => "`!`",
            TokenKind::AndAnd => "`&&`",
            TokenKind::OrOr => "`||`",
            TokenKind::Comma => "`,`",
            TokenKind::Semi => "`;`",
            TokenKind::Colon => "`:`",
            TokenKind::Dot => "`.`",
            TokenKind::At => "`@`",
            TokenKind::Slash => "`/`",
            TokenKind::Error(_) => "invalid token",
            TokenKind::Eof => "end of input",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

#[derive(Debug, Clone, Default)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn tokenize(source: &str) -> Lexed {
    Lexer::new(source).run()
}

struct Lexer<'a> {
    chars: Vec<(usize, char)>,
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
    out: Lexed,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { chars: src.char_indices().collect(), src, pos: 0, line: 1, col: 1, out: Lexed::default() }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.chars.get(self.pos + n).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.src.len(), |&(o, _)| o)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn push(&mut self, kind: TokenKind, start: (usize, u32, u32), len: u32) {
        let span = Span::new(start.0, start.1, start.2, len);
        self.out.tokens.push(Token { kind, span });
    }

    fn run(mut self) -> Lexed {
        loop {
            self.skip_trivia();
            let Some(c) = self.peek() else { break };
            let start = (self.offset(), self.line, self.col);
            let start_pos = self.pos;
            if c == '"' {
                self.string(start);
                continue;
            }
            if c.is_ascii_digit() {
                self.number(start);
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let mut word = String::new();
                while let Some(c) = self.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                let len = (self.pos - start_pos) as u32;
                let kind = match Keyword::lookup(&word) {
                    Some(k) => TokenKind::Keyword(k),
                    None => TokenKind::Ident(word),
                };
                self.push(kind, start, len);
                continue;
            }
            self.bump();
            let next = self.peek();
            let two = |l: &mut Self, k: TokenKind| {
                l.bump();
                l.push(k, start, 2);
            };
            match (c, next) {
                ('<', Some('=')) => two(&mut self, TokenKind::Le),
                ('>', Some('=')) => two(&mut self, TokenKind::Ge),
                ('=', Some('=')) => two(&mut self, TokenKind::EqEq),
                ('!', Some('=')) => two(&mut self, TokenKind::Ne),
                ('&', Some('&')) => two(&mut self, TokenKind::AndAnd),
                ('|', Some('|')) => two(&mut self, TokenKind::OrOr),
                _ => {
                    let kind = match c {
                        '{' => TokenKind::LBrace,
                        '}' => TokenKind::RBrace,
                        '(' => TokenKind::LParen,
                        ')' => TokenKind::RParen,
                        '[' => TokenKind::LBracket,
                        ']' => TokenKind::RBracket,
                        '<' => TokenKind::Lt,
                        '>' => TokenKind::Gt,
                        '=' => TokenKind::Assign,
                        '+' => TokenKind::Plus,
                        '-' => TokenKind::Minus,
                        '*' => TokenKind::Star,
                        '%' => TokenKind::Percent,
                        '!' => TokenKind::Bang,
                        ',' => TokenKind::Comma,
                        ';' => TokenKind::Semi,
                        ':' => TokenKind::Colon,
                        '.' => TokenKind::Dot,
                        '@' => TokenKind::At,
                        '/' => TokenKind::Slash,
                        other => {
                            let span = Span::new(start.0, start.1, start.2, 1);
                            self.out.diagnostics.push(Diagnostic::error(
                                Code::UnknownCharacter,
                                span,
                                format!("unknown character {:?}", other),
                            ));
                            TokenKind::Error(other.to_string())
                        }
                    };
                    self.push(kind, start, 1);
                }
            }
        }
        self.out
    }

    fn skip_trivia(&mut self) {
        loop {
            match (self.peek(), self.peek_at(1)) {
                (Some(c), _) if c.is_whitespace() => {
                    self.bump();
                }
                (Some('/'), Some('/')) => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                (Some('/'), Some('*')) => {
                    self.bump();
                    self.bump();
                    loop {
                        match (self.peek(), self.peek_at(1)) {
                            (None, _) => break,
                            (Some('*'), Some('/')) => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            _ => {
                                self.bump();
                            }
                        }
                    }
                }
                _ => break,
            }
        }
    }

    fn string(&mut self, start: (usize, u32, u32)) {
        let start_pos = self.pos;
        self.bump();
        let mut value = String::new();
        loop {
            match self.peek() {
                None | Some('\n') => {
                    let len = (self.pos - start_pos) as u32;
                    let span = Span::new(start.0, start.1, start.2, len);
                    self.out
                        .diagnostics
                        .push(Diagnostic::error(Code::UnterminatedString, span, "unterminated string literal"));
                    let raw = self.src[start.0..self.offset()].to_string();
                    self.push(TokenKind::Error(raw), start, len);
                    return;
                }
                Some('"') => {
                    self.bump();
                    break;
                }
                Some('\\') => {
                    self.bump();
                    match self.bump() {
                        Some('n') => value.push('\n'),
                        Some('t') => value.push('\t'),
                        Some('r') => value.push('\r'),
                        Some('"') => value.push('"'),
                        Some('\\') => value.push('\\'),
                        Some(other) => {
                            value.push('\\');
                            value.push(other);
                        }
                        None => {}
                    }
                }
                Some(c) => {
                    value.push(c);
                    self.bump();
                }
            }
        }
        let len = (self.pos - start_pos) as u32;
        self.push(TokenKind::Str(value), start, len);
    }

    fn digits_at(&self, from: usize, n: usize) -> bool {
        (0..n).all(|i| self.peek_at(from + i).is_some_and(|c| c.is_ascii_digit()))
    }

    fn number(&mut self, start: (usize, u32, u32)) {
        let start_pos = self.pos;
        // YYYY-MM-DD[THH:MM[:SS]]
        if self.digits_at(0, 4)
            && self.peek_at(4) == Some('-')
            && self.digits_at(5, 2)
            && self.peek_at(7) == Some('-')
            && self.digits_at(8, 2)
            && !self.peek_at(10).is_some_and(|c| c.is_ascii_digit())
        {
            let mut n = 10;
            if self.peek_at(10) == Some('T') && self.digits_at(11, 2) && self.peek_at(13) == Some(':') && self.digits_at(14, 2) {
                n = 16;
                if self.peek_at(16) == Some(':') && self.digits_at(17, 2) {
                    n = 19;
                }
            }
            let text: String = (0..n).filter_map(|_| self.bump()).collect();
            self.push(TokenKind::DateTime(text), start, n as u32);
            return;
        }
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        let len = (self.pos - start_pos) as u32;
        match text.parse::<i64>() {
            Ok(v) => self.push(TokenKind::Int(v), start, len),
            Err(_) => {
                let span = Span::new(start.0, start.1, start.2, len);
                self.out
                    .diagnostics
                    .push(Diagnostic::error(Code::UnknownCharacter, span, "integer literal out of range"));
                self.push(TokenKind::Error(text), start, len);
            }
        }
    }
}
