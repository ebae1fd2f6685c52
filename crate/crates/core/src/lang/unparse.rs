//! Canonical printer. Output re-parses to a structurally equal AST.

use super::ast::*;
use super::element::render_element;
use crate::value::{format_number, format_timestamp, BinaryOp, Value};

const WITH: u8 = 0;
const CLAUSE: u8 = 1;
const OR: u8 = 2;
const AND: u8 = 3;
const NOT: u8 = 4;
const CMP: u8 = 5;
const ADD: u8 = 6;
const MUL: u8 = 7;
const NEG: u8 = 8;
const POW: u8 = 9;
const POSTFIX: u8 = 10;
const PRIMARY: u8 = 11;

/// Renders an expression as canonical query text.
pub fn unparse(e: &Expr) -> String {
    let mut out = String::new();
    write(e, WITH, true, &mut out);
    out
}

fn level(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::With { .. } => WITH,
        ExprKind::Clause { .. } => CLAUSE,
        ExprKind::Binary { op, .. } => match op {
            BinaryOp::Or => OR,
            BinaryOp::And => AND,
            BinaryOp::Add | BinaryOp::Sub => ADD,
            BinaryOp::Mul | BinaryOp::Div => MUL,
            BinaryOp::Pow => POW,
            _ => CMP,
        },
        ExprKind::Unary { op: UnaryOp::Not, .. } => NOT,
        ExprKind::Unary { op: UnaryOp::Neg, .. } => NEG,
        ExprKind::Between { .. } | ExprKind::Pattern { .. } | ExprKind::InList { .. } => CMP,
        ExprKind::AsUnit { .. } => POSTFIX,
        // A negative literal prints with a leading minus.
        ExprKind::Literal(Value::Number(n)) if *n < 0.0 => NEG,
        _ => PRIMARY,
    }
}

/// `agg_ok`: an aggregation may appear bare here (its trailing bounds and
/// timestep cannot swallow following text).
fn write(e: &Expr, min: u8, agg_ok: bool, out: &mut String) {
    let is_agg = matches!(e.kind, ExprKind::Aggregation(_));
    if level(e) < min || (is_agg && !agg_ok) {
        out.push('(');
        write_bare(e, out);
        out.push(')');
    } else {
        write_bare(e, out);
    }
}

fn write_bare(e: &Expr, out: &mut String) {
    match &e.kind {
        ExprKind::Literal(v) => write_literal(v, out),
        ExprKind::Variable(n) => out.push_str(n),
        ExprKind::Element(q) => out.push_str(&render_element(q)),
        ExprKind::Marker(m) => out.push_str(m.text()),
        ExprKind::Regex(r) => write_regex(r, out),
        ExprKind::Duration { amount, unit } => {
            out.push_str(&format_number(*amount));
            out.push(' ');
            out.push_str(if *amount == 1.0 { unit.singular() } else { unit.plural() });
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let l = level(e);
            let (lmin, rmin) = match op {
                BinaryOp::Pow => (POSTFIX, NEG),
                _ if op.is_comparison() => (ADD, ADD),
                _ => (l, l + 1),
            };
            write(lhs, lmin, false, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write(rhs, rmin, false, out);
        }
        ExprKind::Unary { op: UnaryOp::Not, operand } => {
            out.push_str("not ");
            write(operand, NOT, false, out);
        }
        ExprKind::Unary { op: UnaryOp::Neg, operand } => {
            out.push('-');
            // `--x` would still lex fine, but keep negative literals readable.
            if matches!(operand.kind, ExprKind::Unary { op: UnaryOp::Neg, .. })
                || matches!(operand.kind, ExprKind::Literal(Value::Number(n)) if n < 0.0)
            {
                out.push('(');
                write_bare(operand, out);
                out.push(')');
            } else {
                write(operand, NEG, false, out);
            }
        }
        ExprKind::Case { branches, otherwise } => {
            out.push_str("case");
            for (w, t) in branches {
                out.push_str(" when ");
                write(w, OR, false, out);
                out.push_str(" then ");
                write(t, OR, false, out);
            }
            if let Some(o) = otherwise {
                out.push_str(" else ");
                write(o, OR, false, out);
            }
            out.push_str(" end");
        }
        ExprKind::Between { expr, low, high } => {
            write(expr, ADD, false, out);
            out.push_str(" between ");
            write(low, ADD, false, out);
            out.push_str(" and ");
            write(high, ADD, false, out);
        }
        ExprKind::Pattern { op, expr, pattern } => {
            write(expr, ADD, false, out);
            out.push(' ');
            out.push_str(op.keyword());
            out.push(' ');
            match pattern {
                PatternOperand::Regex(r) => write_regex(r, out),
                PatternOperand::Text(t) => write_string(t, out),
            }
        }
        ExprKind::InList { expr, items } => {
            write(expr, ADD, false, out);
            out.push_str(" in (");
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write(it, ADD, false, out);
            }
            out.push(')');
        }
        ExprKind::Call { name, args } => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write(a, WITH, false, out);
            }
            out.push(')');
        }
        ExprKind::Aggregation(a) => write_aggregation(a, out),
        ExprKind::Clause { target, clause } => {
            write(target, CLAUSE, true, out);
            match clause {
                ClauseKind::Where(p) => {
                    out.push_str(" where ");
                    write(p, OR, false, out);
                }
                ClauseKind::Impute(ImputeStrategy::Mean) => out.push_str(" impute mean"),
                ClauseKind::Impute(ImputeStrategy::Median) => out.push_str(" impute median"),
                ClauseKind::Impute(ImputeStrategy::Expr(v)) => {
                    out.push_str(" impute ");
                    write(v, OR, false, out);
                }
                ClauseKind::Carry(d) => {
                    out.push_str(" carry ");
                    write(d, ADD, false, out);
                }
                ClauseKind::Cut { edges, labels } => {
                    out.push_str(" cut bins [");
                    let edges: Vec<String> = edges
                        .iter()
                        .map(|e| match *e {
                            f64::INFINITY => "inf".to_string(),
                            f64::NEG_INFINITY => "-inf".to_string(),
                            v => format_number(v),
                        })
                        .collect();
                    out.push_str(&edges.join(", "));
                    out.push_str("] named [");
                    for (i, l) in labels.iter().enumerate() {
                        if i > 0 {
                            out.push_str(", ");
                        }
                        write_string(l, out);
                    }
                    out.push(']');
                }
            }
        }
        ExprKind::With { name, value, body } => {
            write(body, CLAUSE, true, out);
            out.push_str(" with ");
            out.push_str(name);
            out.push_str(" as ");
            write(value, CLAUSE, true, out);
        }
        ExprKind::AsUnit { expr, unit } => {
            write(expr, POSTFIX, false, out);
            out.push_str(" as ");
            out.push_str(unit.plural());
        }
    }
}

fn write_aggregation(a: &Aggregation, out: &mut String) {
    out.push_str(a.func.name());
    if let Some(m) = a.mode {
        out.push(' ');
        out.push_str(m.keyword());
    }
    out.push(' ');
    write(&a.target, POSTFIX, false, out);
    match &a.bounds {
        Some(Bounds::FromTo(s, e)) => {
            out.push_str(" from ");
            write(s, ADD, false, out);
            out.push_str(" to ");
            write(e, ADD, false, out);
        }
        Some(Bounds::Before(t)) => {
            out.push_str(" before ");
            write(t, ADD, false, out);
        }
        Some(Bounds::After(t)) => {
            out.push_str(" after ");
            write(t, ADD, false, out);
        }
        Some(Bounds::At(t)) => {
            out.push_str(" at ");
            write(t, ADD, false, out);
        }
        None => {}
    }
    let range = |from: &Option<Expr>, to: &Option<Expr>, out: &mut String| {
        if let Some(f) = from {
            out.push_str(" from ");
            write(f, ADD, false, out);
        }
        if let Some(t) = to {
            out.push_str(" to ");
            write(t, ADD, false, out);
        }
    };
    match &a.timestep {
        Some(Timestep::Every { period, from, to }) => {
            out.push_str(" every ");
            write(period, ADD, false, out);
            range(from, to, out);
        }
        Some(Timestep::AtEvery { event, from, to }) => {
            out.push_str(" at every ");
            write(event, ADD, false, out);
            range(from, to, out);
        }
        Some(Timestep::AtList(ts)) => {
            out.push_str(" at [");
            for (i, (text, _)) in ts.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_string(text, out);
            }
            out.push(']');
        }
        None => {}
    }
}

fn write_literal(v: &Value, out: &mut String) {
    match v {
        Value::Number(n) => out.push_str(&format_number(*n)),
        Value::Text(t) => write_string(t, out),
        Value::Boolean(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Timestamp(t) => write_string(&format_timestamp(*t), out),
        Value::Duration(ms) => {
            out.push_str(&format_number(*ms as f64 / 1000.0));
            out.push_str(" seconds");
        }
        // No literal syntax for missing; an empty case yields it.
        Value::Missing => out.push_str("(case when false then 0 end)"),
    }
}

pub(super) fn write_string(s: &str, out: &mut String) {
    out.push('\'');
    for c in s.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('\'');
}

fn write_regex(r: &RegexLit, out: &mut String) {
    out.push('/');
    out.push_str(&r.pattern);
    out.push('/');
    if r.case_insensitive {
        out.push('i');
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn canon(s: &str) -> String {
        unparse(&parse(s).unwrap())
    }

    #[test]
    fn canonical_spacing() {
        assert_eq!(canon("temp>45"), "temp > 45");
        assert_eq!(canon("MEAN x EVERY 4 H"), "mean x every 4 hours");
        assert_eq!(canon("a - (b - c)"), "a - (b - c)");
        assert_eq!(canon("(a - b) - c"), "a - b - c");
        assert_eq!(canon("sum x every 1 days"), "sum x every 1 day");
    }

    #[test]
    fn nested_aggregation_gets_parens() {
        assert_eq!(canon("(mean x) + 1"), "(mean x) + 1");
        assert_eq!(canon("mean x impute 0"), "mean x impute 0");
    }
}
