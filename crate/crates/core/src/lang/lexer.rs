//! On-demand tokenizer shared by the scoping grammar and all three island
//! dialects. Tokens are produced lazily so that an error is reported at the
//! first token the parser rejects, not at the first unlexable character.

use std::collections::VecDeque;

use crate::error::{ParseError, Position};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(String),
    Float(String),
    /// Single-quoted SQL string.
    Str(String),
    /// Double-quoted JSON string.
    JStr(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Colon,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Position,
    /// Source text of the token.
    pub text: String,
}

impl Token {
    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }
}

pub struct Lexer<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    i: usize,
    line: usize,
    col: usize,
    buf: VecDeque<Token>,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a str) -> Self {
        Lexer {
            src,
            chars: src.char_indices().collect(),
            i: 0,
            line: 1,
            col: 1,
            buf: VecDeque::new(),
        }
    }

    /// Position for errors at end of input: the last character, so that
    /// every reported position lies inside the text.
    pub fn eof_position(&self) -> Position {
        let mut pos = Position {
            line: 1,
            column: 1,
            offset: 0,
        };
        let mut line = 1;
        let mut col = 1;
        for &(off, c) in &self.chars {
            pos = Position {
                line,
                column: col,
                offset: off,
            };
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        pos
    }

    pub fn peek(&mut self) -> Result<&Token, ParseError> {
        self.peek_nth(0)
    }

    pub fn peek_nth(&mut self, n: usize) -> Result<&Token, ParseError> {
        while self.buf.len() <= n {
            let t = self.lex()?;
            self.buf.push_back(t);
        }
        Ok(&self.buf[n])
    }

    pub fn next(&mut self) -> Result<Token, ParseError> {
        self.peek()?;
        Ok(self.buf.pop_front().expect("peeked"))
    }

    fn cur(&self) -> Option<char> {
        self.chars.get(self.i).map(|&(_, c)| c)
    }

    fn at(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.i).map_or(self.src.len(), |&(o, _)| o)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.cur()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn here(&self) -> Position {
        Position {
            line: self.line,
            column: self.col,
            offset: self.offset(),
        }
    }

    fn lex(&mut self) -> Result<Token, ParseError> {
        while self.cur().is_some_and(char::is_whitespace) {
            self.bump();
        }
        let pos = self.here();
        let start = self.offset();
        let Some(c) = self.cur() else {
            return Ok(Token {
                tok: Tok::Eof,
                pos: self.eof_position(),
                text: String::new(),
            });
        };
        let tok = match c {
            'a'..='z' | 'A'..='Z' | '_' => {
                while self.cur().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                    self.bump();
                }
                Tok::Ident(self.src[start..self.offset()].to_string())
            }
            '0'..='9' => self.number(),
            '\'' => self.sql_string(pos)?,
            '"' => self.json_string(pos)?,
            _ => {
                self.bump();
                match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ',' => Tok::Comma,
                    '.' => Tok::Dot,
                    ':' => Tok::Colon,
                    '*' => Tok::Star,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '/' => Tok::Slash,
                    '=' => Tok::Eq,
                    '!' if self.cur() == Some('=') => {
                        self.bump();
                        Tok::Ne
                    }
                    '<' => match self.cur() {
                        Some('=') => {
                            self.bump();
                            Tok::Le
                        }
                        Some('>') => {
                            self.bump();
                            Tok::Ne
                        }
                        _ => Tok::Lt,
                    },
                    '>' if self.cur() == Some('=') => {
                        self.bump();
                        Tok::Ge
                    }
                    '>' => Tok::Gt,
                    _ => {
                        return Err(ParseError {
                            message: "unexpected character".into(),
                            position: pos,
                            token: c.to_string(),
                        })
                    }
                }
            }
        };
        Ok(Token {
            tok,
            pos,
            text: self.src[start..self.offset()].to_string(),
        })
    }

    fn digits(&mut self) {
        while self.cur().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
    }

    fn number(&mut self) -> Tok {
        let start = self.offset();
        self.digits();
        let mut float = false;
        if self.cur() == Some('.') && self.at(1).is_some_and(|c| c.is_ascii_digit()) {
            float = true;
            self.bump();
            self.digits();
        }
        if matches!(self.cur(), Some('e' | 'E')) {
            let signed = matches!(self.at(1), Some('+' | '-'));
            let digit_at = if signed { 2 } else { 1 };
            if self.at(digit_at).is_some_and(|c| c.is_ascii_digit()) {
                float = true;
                self.bump();
                if signed {
                    self.bump();
                }
                self.digits();
            }
        }
        let text = self.src[start..self.offset()].to_string();
        if float {
            Tok::Float(text)
        } else {
            Tok::Int(text)
        }
    }

    fn sql_string(&mut self, pos: Position) -> Result<Tok, ParseError> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(unterminated(pos)),
                Some('\'') if self.cur() == Some('\'') => {
                    self.bump();
                    s.push('\'');
                }
                Some('\'') => return Ok(Tok::Str(s)),
                Some(c) => s.push(c),
            }
        }
    }

    fn json_string(&mut self, pos: Position) -> Result<Tok, ParseError> {
        self.bump();
        let mut s = String::new();
        loop {
            let here = self.here();
            match self.bump() {
                None => return Err(unterminated(pos)),
                Some('"') => return Ok(Tok::JStr(s)),
                Some('\\') => {
                    let esc = self.bump().ok_or_else(|| unterminated(pos))?;
                    match esc {
                        '"' => s.push('"'),
                        '\\' => s.push('\\'),
                        '/' => s.push('/'),
                        'b' => s.push('\u{8}'),
                        'f' => s.push('\u{c}'),
                        'n' => s.push('\n'),
                        'r' => s.push('\r'),
                        't' => s.push('\t'),
                        'u' => {
                            let hi = self.hex4(here)?;
                            let code = if (0xD800..0xDC00).contains(&hi) {
                                if self.cur() != Some('\\') || self.at(1) != Some('u') {
                                    return Err(bad_escape(here));
                                }
                                self.bump();
                                self.bump();
                                let lo = self.hex4(here)?;
                                if !(0xDC00..0xE000).contains(&lo) {
                                    return Err(bad_escape(here));
                                }
                                0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00)
                            } else {
                                hi
                            };
                            s.push(char::from_u32(code).ok_or_else(|| bad_escape(here))?);
                        }
                        _ => return Err(bad_escape(here)),
                    }
                }
                Some(c) if (c as u32) < 0x20 => {
                    return Err(ParseError {
                        message: "control character in string".into(),
                        position: here,
                        token: c.escape_default().to_string(),
                    })
                }
                Some(c) => s.push(c),
            }
        }
    }

    fn hex4(&mut self, pos: Position) -> Result<u32, ParseError> {
        let mut v = 0;
        for _ in 0..4 {
            let d = self.bump().and_then(|c| c.to_digit(16)).ok_or_else(|| bad_escape(pos))?;
            v = v * 16 + d;
        }
        Ok(v)
    }
}

fn unterminated(pos: Position) -> ParseError {
    ParseError {
        message: "unterminated string".into(),
        position: pos,
        token: String::new(),
    }
}

fn bad_escape(pos: Position) -> ParseError {
    ParseError {
        message: "invalid escape sequence".into(),
        position: pos,
        token: "\\".into(),
    }
}
