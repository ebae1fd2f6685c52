//! The portable regex dialect accepted in queries.
//!
//! Allowed: literals, `.`, character classes, alternation, anchors `^ $`,
//! escapes `\b \B \w \W \d \D \s \S \n \t \r \f \v \xHH`, escaped
//! punctuation, greedy/lazy quantifiers (`* + ? {n,m}`), capturing and
//! `(?:…)` groups, and the case-insensitive flag. Everything else (inline
//! flags, named groups, lookaround, backreferences, Unicode classes, `\A`,
//! `\z`, possessive quantifiers) is rejected so that patterns mean the same
//! thing in any host regex engine.

use regex::{Regex, RegexBuilder};

/// Checks a pattern against the subset; returns a message and byte offset
/// within the pattern on failure.
pub fn validate(pattern: &str) -> Result<(), (String, usize)> {
    let b = pattern.as_bytes();
    let mut i = 0;
    let mut in_class = false;
    let mut prev_quantifier = false;
    while i < b.len() {
        let c = b[i];
        match c {
            b'\\' => {
                let Some(&n) = b.get(i + 1) else {
                    return Err(("pattern ends with a lone backslash".into(), i));
                };
                match n {
                    b'b' | b'B' if !in_class => {}
                    b'w' | b'W' | b'd' | b'D' | b's' | b'S' | b'n' | b't' | b'r' | b'f' | b'v' => {}
                    b'x' => {
                        let hex = b.get(i + 2..i + 4);
                        if !hex.is_some_and(|h| h.iter().all(u8::is_ascii_hexdigit)) {
                            return Err(("\\x must be followed by two hex digits".into(), i));
                        }
                        i += 2;
                    }
                    n if n.is_ascii_punctuation() => {}
                    n => {
                        return Err((format!("escape '\\{}' is outside the supported regex subset", n as char), i));
                    }
                }
                i += 2;
                prev_quantifier = false;
                continue;
            }
            b'[' if !in_class => {
                in_class = true;
                i += 1;
                // A leading `^` or `]` is literal class content.
                if b.get(i) == Some(&b'^') {
                    i += 1;
                }
                if b.get(i) == Some(&b']') {
                    i += 1;
                }
                if b.get(i) == Some(&b'[') && b.get(i + 1) == Some(&b':') {
                    return Err(("POSIX classes are not supported".into(), i));
                }
                continue;
            }
            b'[' if in_class => {
                if b.get(i + 1) == Some(&b':') {
                    return Err(("POSIX classes are not supported".into(), i));
                }
                return Err(("nested character classes are not supported".into(), i));
            }
            b']' if in_class => in_class = false,
            b'&' | b'~' | b'-' if in_class && b.get(i + 1) == Some(&c) => {
                return Err(("class set operations are not supported".into(), i));
            }
            b'(' if !in_class => {
                if b.get(i + 1) == Some(&b'?') {
                    if b.get(i + 2) == Some(&b':') {
                        i += 3;
                        prev_quantifier = false;
                        continue;
                    }
                    return Err((
                        "only (?:…) groups are supported (no inline flags, named groups or lookaround)".into(),
                        i,
                    ));
                }
            }
            b'*' | b'+' | b'?' | b'{' if !in_class => {
                if c == b'{' {
                    let close = pattern[i..].find('}').map(|k| i + k);
                    let valid = close.is_some_and(|e| {
                        let body = &pattern[i + 1..e];
                        !body.is_empty()
                            && body.split(',').count() <= 2
                            && body.split(',').next().is_some_and(|s| !s.is_empty())
                            && body.chars().all(|ch| ch.is_ascii_digit() || ch == ',')
                    });
                    if let (true, Some(e)) = (valid, close) {
                        if prev_quantifier {
                            return Err(("stacked quantifiers are not supported".into(), i));
                        }
                        i = e + 1;
                        if b.get(i) == Some(&b'?') {
                            i += 1;
                        }
                        if b.get(i) == Some(&b'+') {
                            return Err(("possessive quantifiers are not supported".into(), i));
                        }
                        prev_quantifier = true;
                        continue;
                    }
                    return Err(("literal '{' must be escaped".into(), i));
                }
                if prev_quantifier {
                    return Err(("stacked or possessive quantifiers are not supported".into(), i));
                }
                i += 1;
                if b.get(i) == Some(&b'?') {
                    i += 1;
                }
                prev_quantifier = true;
                continue;
            }
            _ => {}
        }
        prev_quantifier = false;
        i += 1;
    }
    if in_class {
        return Err(("unterminated character class".into(), pattern.len()));
    }
    Ok(())
}

/// Validates and compiles a pattern.
pub fn compile(pattern: &str, case_insensitive: bool) -> Result<Regex, (String, usize)> {
    validate(pattern)?;
    RegexBuilder::new(pattern)
        .case_insensitive(case_insensitive)
        .unicode(false)
        .build()
        .or_else(|_| RegexBuilder::new(pattern).case_insensitive(case_insensitive).build())
        .map_err(|e| (format!("invalid regex: {}", e.to_string().lines().last().unwrap_or("syntax error")), 0))
}
