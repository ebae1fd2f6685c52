use serde::Serialize;

use super::ast::{AggFunc, ElementQuery, Marker, RegexLit};
use super::element::parse_element;
use super::{regex_subset, ParseError, Span};
use crate::value::TimeUnit;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "token", content = "value", rename_all = "snake_case")]
pub enum TokenKind {
    Number(f64),
    Str(String),
    Ident(String),
    /// Reserved word, stored lowercase.
    Keyword(&'static str),
    AggFn(AggFunc),
    Unit(TimeUnit),
    Marker(Marker),
    Regex(RegexLit),
    Element(ElementQuery),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

impl TokenKind {
    /// Human-readable description used in expected-token sets.
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Number(_) => "number".into(),
            TokenKind::Str(_) => "string".into(),
            TokenKind::Ident(_) => "identifier".into(),
            TokenKind::Keyword(k) => k.to_string(),
            TokenKind::AggFn(f) => f.name().into(),
            TokenKind::Unit(u) => u.plural().into(),
            TokenKind::Marker(m) => m.text().into(),
            TokenKind::Regex(_) => "regex".into(),
            TokenKind::Element(_) => "{".into(),
            TokenKind::LParen => "(".into(),
            TokenKind::RParen => ")".into(),
            TokenKind::LBracket => "[".into(),
            TokenKind::RBracket => "]".into(),
            TokenKind::Comma => ",".into(),
            TokenKind::Plus => "+".into(),
            TokenKind::Minus => "-".into(),
            TokenKind::Star => "*".into(),
            TokenKind::Slash => "/".into(),
            TokenKind::Caret => "^".into(),
            TokenKind::Eq => "=".into(),
            TokenKind::Ne => "!=".into(),
            TokenKind::Lt => "<".into(),
            TokenKind::Le => "<=".into(),
            TokenKind::Gt => ">".into(),
            TokenKind::Ge => ">=".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }

    /// Whether this token can end an operand; after such a token `/` is
    /// division rather than the start of a regex.
    fn ends_operand(&self) -> bool {
        matches!(
            self,
            TokenKind::Number(_)
                | TokenKind::Str(_)
                | TokenKind::Ident(_)
                | TokenKind::Unit(_)
                | TokenKind::Marker(_)
                | TokenKind::Regex(_)
                | TokenKind::Element(_)
                | TokenKind::RParen
                | TokenKind::RBracket
                | TokenKind::Keyword("end" | "true" | "false")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

/// Splits query text into tokens. The final token is always `Eof`.
pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens: Vec<Token> = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < src.len() {
        let c = src[i..].chars().next().expect("in bounds");
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let start = i;
        let prev = tokens.last().map(|t| &t.kind);
        let kind = match c {
            '(' => single(&mut i, TokenKind::LParen),
            ')' => single(&mut i, TokenKind::RParen),
            '[' => single(&mut i, TokenKind::LBracket),
            ']' => single(&mut i, TokenKind::RBracket),
            ',' => single(&mut i, TokenKind::Comma),
            '+' => single(&mut i, TokenKind::Plus),
            '-' => single(&mut i, TokenKind::Minus),
            '*' => single(&mut i, TokenKind::Star),
            '^' => single(&mut i, TokenKind::Caret),
            '=' => {
                i += if bytes.get(i + 1) == Some(&b'=') { 2 } else { 1 };
                TokenKind::Eq
            }
            '!' if bytes.get(i + 1) == Some(&b'=') => {
                i += 2;
                TokenKind::Ne
            }
            '<' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    TokenKind::Le
                }
                Some(b'>') => {
                    i += 2;
                    TokenKind::Ne
                }
                _ => single(&mut i, TokenKind::Lt),
            },
            '>' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    TokenKind::Ge
                }
                _ => single(&mut i, TokenKind::Gt),
            },
            '/' if prev.is_some_and(TokenKind::ends_operand) => single(&mut i, TokenKind::Slash),
            '/' => {
                let (lit, end) = read_regex(src, i)?;
                i = end;
                TokenKind::Regex(lit)
            }
            '"' | '\'' => {
                let (s, end) = read_string(src, i)?;
                i = end;
                TokenKind::Str(s)
            }
            '{' => {
                let (q, end) = parse_element(src, i)?;
                i = end;
                TokenKind::Element(q)
            }
            '#' => {
                let word_end = scan_word(src, i + 1);
                let word = &src[i + 1..word_end];
                let marker = match word.to_ascii_lowercase().as_str() {
                    "now" => Marker::Now,
                    "mintime" => Marker::MinTime,
                    "maxtime" => Marker::MaxTime,
                    "value" => Marker::Value,
                    _ => {
                        return Err(ParseError::new(format!("unknown marker '#{word}'"), Span::new(i, word_end.max(i + 1)))
                            .with_hint("markers are #now, #mintime, #maxtime and #value"))
                    }
                };
                i = word_end;
                TokenKind::Marker(marker)
            }
            c if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) => {
                let end = scan_number(src, i);
                let text = &src[i..end];
                let n: f64 = text
                    .parse()
                    .map_err(|_| ParseError::new(format!("invalid number '{text}'"), Span::new(i, end)))?;
                i = end;
                TokenKind::Number(n)
            }
            c if c.is_alphabetic() || c == '_' => {
                let end = scan_word(src, i);
                let word = &src[i..end];
                i = end;
                // `with name as …` introduces a binding, not a unit conversion.
                let n = tokens.len();
                let binding = n >= 3
                    && matches!(tokens[n - 3].kind, TokenKind::Keyword("with"))
                    && matches!(tokens[n - 2].kind, TokenKind::Ident(_));
                classify_word(word, prev.filter(|_| !binding), Span::new(start, end))?
            }
            other => {
                return Err(ParseError::new(format!("unexpected character '{other}'"), Span::new(i, i + other.len_utf8())))
            }
        };
        tokens.push(Token { kind, span: Span::new(start, i) });
    }
    tokens.push(Token { kind: TokenKind::Eof, span: Span::new(src.len(), src.len()) });
    Ok(tokens)
}

fn single(i: &mut usize, kind: TokenKind) -> TokenKind {
    *i += 1;
    kind
}

fn scan_word(src: &str, from: usize) -> usize {
    src[from..]
        .char_indices()
        .find(|(_, c)| !(c.is_alphanumeric() || *c == '_'))
        .map(|(k, _)| from + k)
        .unwrap_or(src.len())
}

fn scan_number(src: &str, from: usize) -> usize {
    let b = src.as_bytes();
    let mut i = from;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i < b.len() && b[i] == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit) {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    i
}

fn classify_word(word: &str, prev: Option<&TokenKind>, span: Span) -> Result<TokenKind, ParseError> {
    let lower = word.to_ascii_lowercase();
    let unit_position = matches!(prev, Some(TokenKind::Number(_) | TokenKind::Keyword("as")));
    if unit_position {
        if let Some(u) = TimeUnit::from_word(&lower) {
            return Ok(TokenKind::Unit(u));
        }
        if matches!(lower.as_str(), "month" | "months" | "mo") {
            return Err(ParseError::new("'months' is not a supported time unit", span)
                .with_hint("month length is ambiguous; use days (e.g. 30 days)"));
        }
    }
    if let Some(k) = super::KEYWORDS.iter().find(|k| **k == lower) {
        return Ok(TokenKind::Keyword(k));
    }
    if let Some(f) = AggFunc::from_head(&lower) {
        return Ok(TokenKind::AggFn(f));
    }
    Ok(TokenKind::Ident(word.to_string()))
}

/// Reads a quoted string starting at `at` (which holds the quote).
pub(super) fn read_string(src: &str, at: usize) -> Result<(String, usize), ParseError> {
    let quote = src[at..].chars().next().expect("quote");
    let mut out = String::new();
    let mut chars = src[at + 1..].char_indices();
    while let Some((k, c)) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some((_, 'n')) => out.push('\n'),
                Some((_, 't')) => out.push('\t'),
                Some((_, e)) => out.push(e),
                None => break,
            },
            c if c == quote => return Ok((out, at + 1 + k + 1)),
            c => out.push(c),
        }
    }
    Err(ParseError::new("unterminated string", Span::new(at, src.len())).with_hint(format!("close the string with {quote}")))
}

/// Reads a `/pattern/flags` literal starting at `at`.
pub(super) fn read_regex(src: &str, at: usize) -> Result<(RegexLit, usize), ParseError> {
    let b = src.as_bytes();
    let mut i = at + 1;
    while i < b.len() {
        match b[i] {
            b'\\' => i += 2,
            b'/' => break,
            b'\n' => i = b.len(),
            _ => i += 1,
        }
    }
    if i >= b.len() {
        return Err(ParseError::new("unterminated regex", Span::new(at, src.len())).with_hint("close the pattern with '/'"));
    }
    let pattern = &src[at + 1..i];
    let flags_end = scan_word(src, i + 1);
    let flags = &src[i + 1..flags_end];
    let mut case_insensitive = false;
    for f in flags.chars() {
        match f {
            'i' | 'I' => case_insensitive = true,
            other => {
                return Err(ParseError::new(format!("unsupported regex flag '{other}'"), Span::new(i + 1, flags_end))
                    .with_hint("only the 'i' flag is supported"))
            }
        }
    }
    if let Err((msg, off)) = regex_subset::compile(pattern, case_insensitive) {
        let pos = at + 1 + off.min(pattern.len());
        return Err(ParseError::new(msg, Span::new(pos, (pos + 1).min(i + 1))));
    }
    Ok((RegexLit { pattern: pattern.to_string(), case_insensitive }, flags_end))
}
