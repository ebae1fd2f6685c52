//! Lexical code-token counts used to compare query lengths across languages.
//!
//! One tokenizer serves both TempoQL and SQL: quoted strings and backquoted
//! identifiers are single tokens, words and numbers are tokens, every
//! operator or punctuation mark is a token, and comments and whitespace are
//! not. Regex literals get no special treatment, which can only inflate the
//! TempoQL side.

use std::sync::LazyLock;

use regex::Regex;

static TOKEN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"(?s)(?P<skip>--[^\n]*|/\*.*?\*/|\s+)",
        r"|'(?:[^'\\]|\\.|'')*'",
        r#"|"(?:[^"\\]|\\.)*""#,
        r"|`[^`]*`",
        r"|#?[A-Za-z_][A-Za-z0-9_]*",
        r"|[0-9]+(?:\.[0-9]+)?",
        r"|<=|>=|!=|<>|\|\||::",
        r"|.",
    ))
    .unwrap()
});

pub fn code_tokens(src: &str) -> Vec<&str> {
    TOKEN
        .captures_iter(src)
        .filter(|c| c.name("skip").is_none())
        .map(|c| c.get(0).unwrap().as_str())
        .collect()
}

pub fn count_tokens(src: &str) -> usize {
    code_tokens(src).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_code() {
        assert_eq!(
            code_tokens("SELECT a.x -- note\nFROM `db.t` WHERE y >= 'it''s'"),
            vec!["SELECT", "a", ".", "x", "FROM", "`db.t`", "WHERE", "y", ">=", "'it''s'"]
        );
        assert_eq!(code_tokens("mean {A; scope = Lab} from #now - 4 h"), vec![
            "mean", "{", "A", ";", "scope", "=", "Lab", "}", "from", "#now", "-", "4", "h"
        ]);
    }
}
