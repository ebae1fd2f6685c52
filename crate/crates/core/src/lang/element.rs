//! Sub-lexer for the interior of `{…}` data element queries.
//!
//! A segment is either `<field> <relation> <operand>` or, when it does not
//! start that way, a bare concept name (shorthand for `name = …`).

use super::ast::{Criterion, CriterionOperand, ElementKind, ElementQuery, Field, Relation};
use super::lexer::{read_regex, read_string};
use super::{ParseError, Span};

/// Parses the element query whose `{` is at byte `open`. Returns the query
/// and the offset just past the closing `}`.
pub(super) fn parse_element(src: &str, open: usize) -> Result<(ElementQuery, usize), ParseError> {
    let mut cur = Cursor { src, i: open + 1 };
    let mut criteria = Vec::new();
    loop {
        cur.skip_ws();
        match cur.peek() {
            None => return Err(unterminated(src, open)),
            Some('}') if criteria.is_empty() => {
                return Err(ParseError::new("empty data element query", Span::new(open, cur.i + 1)))
            }
            Some('}') => break,
            _ => {}
        }
        criteria.push(parse_segment(&mut cur, open)?);
        cur.skip_ws();
        match cur.peek() {
            Some(';') => cur.i += 1,
            Some('}') => break,
            None => return Err(unterminated(src, open)),
            Some(_) => {
                return Err(ParseError::new("expected ';' or '}' in data element query", Span::new(cur.i, cur.i + 1)))
            }
        }
    }
    Ok((ElementQuery { criteria }, cur.i + 1))
}

fn unterminated(src: &str, open: usize) -> ParseError {
    ParseError::new("unterminated data element query", Span::new(open, src.len()))
        .with_hint("close the element query with '}'")
}

struct Cursor<'a> {
    src: &'a str,
    i: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.i..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.i += c.len_utf8();
        }
    }

    fn word_at(&self, at: usize) -> &str {
        let rest = &self.src[at..];
        let end = rest.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(rest.len());
        &rest[..end]
    }

    /// Bare text up to any of `stops` (exclusive), whitespace-collapsed.
    fn bare(&mut self, stops: &[char]) -> String {
        let rest = &self.src[self.i..];
        let end = rest.find(|c| stops.contains(&c)).unwrap_or(rest.len());
        self.i += end;
        rest[..end].split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

/// Detects `<field> <relation>` at the cursor without consuming it.
fn field_relation(cur: &Cursor) -> Option<(Field, Relation, usize)> {
    let word = cur.word_at(cur.i);
    let field = Field::from_keyword(word)?;
    let mut j = cur.i + word.len();
    let rest = &cur.src[j..];
    j += rest.len() - rest.trim_start().len();
    let rest = &cur.src[j..];
    if rest.starts_with('=') {
        return Some((field, Relation::Equals, j + 1));
    }
    if rest.starts_with("!=") {
        return None;
    }
    let rel_word = cur.word_at(j);
    let relation = match rel_word.to_ascii_lowercase().as_str() {
        "in" => {
            // `in` must introduce a parenthesized list.
            let after = cur.src[j + 2..].trim_start();
            if !after.starts_with('(') {
                return None;
            }
            Relation::In
        }
        "contains" => Relation::Contains,
        "matches" => Relation::Matches,
        "startswith" => Relation::StartsWith,
        "endswith" => Relation::EndsWith,
        _ => return None,
    };
    // A segment like "Value contains" with no operand is still a criterion;
    // operand errors are reported by the caller.
    Some((field, relation, j + rel_word.len()))
}

fn parse_segment(cur: &mut Cursor, open: usize) -> Result<Criterion, ParseError> {
    let start = cur.i;
    let Some((field, relation, after)) = field_relation(cur) else {
        // Shorthand name.
        let text = if matches!(cur.peek(), Some('"' | '\'')) {
            let (s, end) = read_string(cur.src, cur.i)?;
            cur.i = end;
            s
        } else {
            cur.bare(&[';', '}'])
        };
        if text.is_empty() {
            return Err(ParseError::new("expected a concept name", Span::new(start, cur.i.max(start + 1))));
        }
        return Ok(Criterion {
            field: Field::Name,
            relation: Relation::Equals,
            operand: CriterionOperand::Text(text),
            span: Span::new(start, cur.i),
        });
    };

    let rel_span = Span::new(start, after);
    match (field, relation) {
        (Field::Scope | Field::Type | Field::Value, r) if r != Relation::Equals => {
            return Err(ParseError::new(
                format!("'{}' only supports '=' (found '{}')", field.keyword(), r.keyword()),
                rel_span,
            ));
        }
        _ => {}
    }
    cur.i = after;
    cur.skip_ws();
    let operand = match relation {
        Relation::In => {
            cur.i += 1; // '('
            let mut items = Vec::new();
            loop {
                cur.skip_ws();
                let item_start = cur.i;
                match cur.peek() {
                    Some('"' | '\'') => {
                        let (s, end) = read_string(cur.src, cur.i)?;
                        cur.i = end;
                        items.push(s);
                    }
                    Some(')') if items.is_empty() => {
                        return Err(ParseError::new("empty 'in' list", Span::new(start, cur.i + 1)));
                    }
                    None => return Err(unterminated(cur.src, open)),
                    _ => {
                        let s = cur.bare(&[',', ')', ';', '}']);
                        if s.is_empty() {
                            return Err(ParseError::new("expected a list item", Span::new(item_start, item_start + 1)));
                        }
                        items.push(s);
                    }
                }
                cur.skip_ws();
                match cur.peek() {
                    Some(',') => cur.i += 1,
                    Some(')') => {
                        cur.i += 1;
                        break;
                    }
                    _ => {
                        return Err(ParseError::new("expected ',' or ')' in list", Span::new(cur.i, cur.i + 1)))
                    }
                }
            }
            CriterionOperand::List(items)
        }
        _ => match cur.peek() {
            Some('/') if relation != Relation::Equals => {
                let (lit, end) = read_regex(cur.src, cur.i)?;
                cur.i = end;
                CriterionOperand::Regex(lit)
            }
            Some('"' | '\'') => {
                let (s, end) = read_string(cur.src, cur.i)?;
                cur.i = end;
                CriterionOperand::Text(s)
            }
            _ => {
                let s = cur.bare(&[';', '}']);
                if s.is_empty() {
                    return Err(ParseError::new(
                        format!("expected a value after '{}'", relation.keyword()),
                        Span::new(cur.i, cur.i + 1),
                    ));
                }
                CriterionOperand::Text(s)
            }
        },
    };
    let span = Span::new(start, cur.i);
    if field == Field::Type {
        if let CriterionOperand::Text(t) = &operand {
            if ElementKind::from_word(t).is_none() {
                return Err(ParseError::new(
                    format!("unknown element type '{t}'"),
                    span,
                )
                .with_hint("use attribute, event or interval"));
            }
        }
    }
    Ok(Criterion { field, relation, operand, span })
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders one criterion canonically, using the bare/shorthand form only
/// when it re-lexes to the same criterion.
fn render_criterion(c: &Criterion) -> String {
    let relation = match c.relation {
        Relation::Equals => "=".to_string(),
        r => r.keyword().to_string(),
    };
    let render_text = |s: &str, prefix: &str| -> String {
        let bare = format!("{prefix}{s}");
        if round_trips(&bare, c) {
            bare
        } else {
            format!("{prefix}{}", quote(s))
        }
    };
    match &c.operand {
        CriterionOperand::Text(s) if c.field == Field::Name && c.relation == Relation::Equals => {
            if round_trips(s, c) {
                s.clone()
            } else {
                format!("name = {}", render_text(s, ""))
            }
        }
        CriterionOperand::Text(s) => {
            render_text(s, &format!("{} {} ", c.field.keyword(), relation))
        }
        CriterionOperand::Regex(r) => format!(
            "{} {} /{}/{}",
            c.field.keyword(),
            relation,
            r.pattern,
            if r.case_insensitive { "i" } else { "" }
        ),
        CriterionOperand::List(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|s| {
                    let bare_ok = !s.is_empty()
                        && s.chars().all(|ch| ch.is_ascii_alphanumeric() || matches!(ch, '_' | '.' | '-' | '/'))
                        && !s.starts_with(['"', '\'']);
                    if bare_ok { s.clone() } else { quote(s) }
                })
                .collect();
            format!("{} in ({})", c.field.keyword(), parts.join(", "))
        }
    }
}

fn round_trips(segment: &str, c: &Criterion) -> bool {
    let text = format!("{{{segment}}}");
    matches!(parse_element(&text, 0), Ok((q, end)) if end == text.len() && q.criteria.len() == 1 && q.criteria[0] == *c)
}

pub(super) fn render_element(q: &ElementQuery) -> String {
    let parts: Vec<String> = q.criteria.iter().map(render_criterion).collect();
    format!("{{{}}}", parts.join("; "))
}
