//! Recursive-descent parser.
//!
//! Precedence, loosest first: `with` < clauses (`where`, `impute`, `carry`,
//! `cut`) < `or` < `and` < `not` < comparisons / `between` / patterns / `in`
//! < `+ -` < `* /` < unary `-` < `^` (right-assoc) < postfix `as <unit>` <
//! primaries. An aggregation is a prefix form at primary position.

use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::{ParseError, Span, AGGREGATION_FUNCTIONS, BUILTIN_FUNCTIONS, MARKERS};
use crate::value::{parse_timestamp, BinaryOp, Value};

const MAX_DEPTH: usize = 96;

/// Parses a complete query.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser::new(tokens);
    let out = p.parse_query();
    out.map_err(|e| p.decorate(e))
}

/// Tokens that would be accepted at the end of `src` (used for completion).
pub(super) fn expected_at_end(src: &str) -> Vec<String> {
    let Ok(tokens) = tokenize(src) else {
        return Vec::new();
    };
    let eof = tokens.len() - 1;
    let mut p = Parser::new(tokens);
    let _ = p.parse_query();
    if p.expected_at == eof {
        p.expected.into_iter().collect()
    } else {
        Vec::new()
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    depth: usize,
    expected: BTreeSet<String>,
    expected_at: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        Parser { toks, pos: 0, depth: 0, expected: BTreeSet::new(), expected_at: 0 }
    }

    fn peek(&self) -> &TokenKind {
        &self.toks[self.pos].kind
    }

    fn peek_at(&self, k: usize) -> &TokenKind {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].kind
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.toks[self.pos - 1].span.end
        }
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn note(&mut self, what: impl Into<String>) {
        if self.pos > self.expected_at {
            self.expected_at = self.pos;
            self.expected.clear();
        }
        if self.pos == self.expected_at {
            self.expected.insert(what.into());
        }
    }

    fn check_kw(&mut self, kw: &'static str) -> bool {
        self.note(kw);
        matches!(self.peek(), TokenKind::Keyword(k) if *k == kw)
    }

    fn eat_kw(&mut self, kw: &'static str) -> bool {
        let hit = self.check_kw(kw);
        if hit {
            self.advance();
        }
        hit
    }

    fn check_tok(&mut self, kind: &TokenKind) -> bool {
        self.note(kind.describe());
        std::mem::discriminant(self.peek()) == std::mem::discriminant(kind)
    }

    fn eat_tok(&mut self, kind: &TokenKind) -> bool {
        let hit = self.check_tok(kind);
        if hit {
            self.advance();
        }
        hit
    }

    fn expect_kw(&mut self, kw: &'static str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{kw}'")))
        }
    }

    fn expect_tok(&mut self, kind: TokenKind) -> PResult<()> {
        if self.eat_tok(&kind) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{}'", kind.describe())))
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        let found = self.peek().describe();
        let message = format!("{}, found {}", message.into(), if found == "end of input" { found } else { format!("'{found}'") });
        ParseError::new(message, self.span())
    }

    /// Attaches the expected-token set when the error is at the furthest
    /// position reached.
    fn decorate(&self, mut e: ParseError) -> ParseError {
        if e.expected.is_empty() && self.toks[self.expected_at].span == e.span {
            e.expected = self.expected.iter().cloned().collect();
        }
        e
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::new("query is nested too deeply", self.span()));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn parse_query(&mut self) -> PResult<Expr> {
        let e = self.parse_with()?;
        if !self.check_tok(&TokenKind::Eof) {
            return Err(self.error("unexpected input after the end of the query"));
        }
        Ok(e)
    }

    fn parse_with(&mut self) -> PResult<Expr> {
        let mut body = self.parse_clause()?;
        while self.eat_kw("with") {
            let name = match self.peek().clone() {
                TokenKind::Ident(n) => {
                    self.advance();
                    n
                }
                _ => {
                    self.note("identifier");
                    return Err(self.error("expected a variable name after 'with'"));
                }
            };
            self.expect_kw("as")?;
            let value = self.parse_clause()?;
            let span = body.span.to(value.span);
            body = Expr::new(ExprKind::With { name, value: Box::new(value), body: Box::new(body) }, span);
        }
        Ok(body)
    }

    fn parse_clause(&mut self) -> PResult<Expr> {
        let mut e = self.parse_or()?;
        while let Some((clause, end)) = self.parse_clause_tail()? {
            let span = Span::new(e.span.start, end.max(e.span.end));
            e = Expr::new(ExprKind::Clause { target: Box::new(e), clause }, span);
        }
        Ok(e)
    }

    /// Parses one trailing clause if present; returns it with its end offset.
    fn parse_clause_tail(&mut self) -> PResult<Option<(ClauseKind, usize)>> {
        let clause = if self.eat_kw("where") {
            ClauseKind::Where(Box::new(self.parse_or()?))
        } else if self.eat_kw("impute") {
            match self.peek() {
                TokenKind::AggFn(AggFunc::Mean) => {
                    self.advance();
                    ClauseKind::Impute(ImputeStrategy::Mean)
                }
                TokenKind::AggFn(AggFunc::Median) => {
                    self.advance();
                    ClauseKind::Impute(ImputeStrategy::Median)
                }
                _ => {
                    self.note("mean");
                    self.note("median");
                    ClauseKind::Impute(ImputeStrategy::Expr(Box::new(self.parse_or()?)))
                }
            }
        } else if self.eat_kw("carry") {
            ClauseKind::Carry(Box::new(self.parse_additive()?))
        } else if self.eat_kw("cut") {
            self.parse_cut()?
        } else {
            return Ok(None);
        };
        Ok(Some((clause, self.prev_end())))
    }

    fn parse_cut(&mut self) -> PResult<ClauseKind> {
        self.expect_kw("bins")?;
        self.expect_tok(TokenKind::LBracket)?;
        let mut edges = Vec::new();
        let mut edge_spans = Vec::new();
        loop {
            let start = self.span();
            let neg = self.eat_tok(&TokenKind::Minus);
            let v = match self.peek().clone() {
                TokenKind::Number(n) => n,
                TokenKind::Ident(w) if w.eq_ignore_ascii_case("inf") => f64::INFINITY,
                _ => {
                    self.note("number");
                    self.note("inf");
                    return Err(self.error("expected a bin edge"));
                }
            };
            self.advance();
            edges.push(if neg { -v } else { v });
            edge_spans.push(start.to(Span::new(start.start, self.prev_end())));
            if self.eat_tok(&TokenKind::Comma) {
                continue;
            }
            self.expect_tok(TokenKind::RBracket)?;
            break;
        }
        for (k, e) in edges.iter().enumerate() {
            let end = k == 0 || k == edges.len() - 1;
            if e.is_infinite() && !end {
                return Err(ParseError::new("'inf' and '-inf' are only allowed as the first or last edge", edge_spans[k]));
            }
            if (k == 0 && *e == f64::INFINITY) || (k == edges.len() - 1 && *e == f64::NEG_INFINITY) {
                return Err(ParseError::new("bin edges must be strictly increasing", edge_spans[k]));
            }
            if k > 0 && edges[k - 1] >= *e {
                return Err(ParseError::new("bin edges must be strictly increasing", edge_spans[k]));
            }
        }
        if edges.len() < 2 {
            return Err(ParseError::new("cut needs at least two bin edges", edge_spans[0]));
        }
        self.expect_kw("named")?;
        let labels_start = self.span();
        self.expect_tok(TokenKind::LBracket)?;
        let mut labels = Vec::new();
        loop {
            match self.peek().clone() {
                TokenKind::Str(s) => {
                    self.advance();
                    labels.push(s);
                }
                TokenKind::Ident(s) => {
                    self.advance();
                    labels.push(s);
                }
                _ => {
                    self.note("string");
                    return Err(self.error("expected a bin label"));
                }
            }
            if self.eat_tok(&TokenKind::Comma) {
                continue;
            }
            self.expect_tok(TokenKind::RBracket)?;
            break;
        }
        if labels.len() + 1 != edges.len() {
            return Err(ParseError::new(
                format!("{} bin edges need exactly {} labels, found {}", edges.len(), edges.len() - 1, labels.len()),
                Span::new(labels_start.start, self.prev_end()),
            ));
        }
        Ok(ClauseKind::Cut { edges, labels })
    }

    fn parse_or(&mut self) -> PResult<Expr> {
        self.enter()?;
        let mut lhs = self.parse_and()?;
        while self.eat_kw("or") {
            let rhs = self.parse_and()?;
            lhs = binary(BinaryOp::Or, lhs, rhs);
        }
        self.leave();
        Ok(lhs)
    }

    fn parse_and(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_not()?;
        while self.eat_kw("and") {
            let rhs = self.parse_not()?;
            lhs = binary(BinaryOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_not(&mut self) -> PResult<Expr> {
        let start = self.span();
        if self.eat_kw("not") {
            self.enter()?;
            let operand = self.parse_not()?;
            self.leave();
            let span = start.to(operand.span);
            return Ok(Expr::new(ExprKind::Unary { op: UnaryOp::Not, operand: Box::new(operand) }, span));
        }
        self.parse_comparison()
    }

    fn parse_comparison(&mut self) -> PResult<Expr> {
        let lhs = self.parse_additive()?;
        let ops = [
            (TokenKind::Eq, BinaryOp::Eq),
            (TokenKind::Ne, BinaryOp::Ne),
            (TokenKind::Le, BinaryOp::Le),
            (TokenKind::Lt, BinaryOp::Lt),
            (TokenKind::Ge, BinaryOp::Ge),
            (TokenKind::Gt, BinaryOp::Gt),
        ];
        for (tok, op) in ops {
            if self.eat_tok(&tok) {
                let rhs = self.parse_additive()?;
                return Ok(binary(op, lhs, rhs));
            }
        }
        if self.eat_kw("between") {
            let low = self.parse_additive()?;
            self.expect_kw("and")?;
            let high = self.parse_additive()?;
            let span = lhs.span.to(high.span);
            return Ok(Expr::new(
                ExprKind::Between { expr: Box::new(lhs), low: Box::new(low), high: Box::new(high) },
                span,
            ));
        }
        for kw in ["contains", "matches", "startswith", "endswith"] {
            if self.eat_kw(kw) {
                let op = PatternOp::from_keyword(kw).expect("pattern keyword");
                let pattern = match self.peek().clone() {
                    TokenKind::Regex(r) => PatternOperand::Regex(r),
                    TokenKind::Str(s) => PatternOperand::Text(s),
                    _ => {
                        self.note("regex");
                        self.note("string");
                        return Err(self.error(format!("expected a /regex/ or string after '{kw}'")));
                    }
                };
                self.advance();
                let span = Span::new(lhs.span.start, self.prev_end());
                return Ok(Expr::new(ExprKind::Pattern { op, expr: Box::new(lhs), pattern }, span));
            }
        }
        if self.eat_kw("in") {
            self.expect_tok(TokenKind::LParen)?;
            let mut items = vec![self.parse_additive()?];
            while self.eat_tok(&TokenKind::Comma) {
                items.push(self.parse_additive()?);
            }
            self.expect_tok(TokenKind::RParen)?;
            let span = Span::new(lhs.span.start, self.prev_end());
            return Ok(Expr::new(ExprKind::InList { expr: Box::new(lhs), items }, span));
        }
        Ok(lhs)
    }

    fn parse_additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_mul()?;
        loop {
            let op = if self.eat_tok(&TokenKind::Plus) {
                BinaryOp::Add
            } else if self.eat_tok(&TokenKind::Minus) {
                BinaryOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.parse_mul()?;
            lhs = binary(op, lhs, rhs);
        }
    }

    fn parse_mul(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = if self.eat_tok(&TokenKind::Star) {
                BinaryOp::Mul
            } else if self.eat_tok(&TokenKind::Slash) {
                BinaryOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.parse_unary()?;
            lhs = binary(op, lhs, rhs);
        }
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        let start = self.span();
        if self.eat_tok(&TokenKind::Minus) {
            self.enter()?;
            let operand = self.parse_unary()?;
            self.leave();
            let span = start.to(operand.span);
            return Ok(Expr::new(ExprKind::Unary { op: UnaryOp::Neg, operand: Box::new(operand) }, span));
        }
        self.parse_pow()
    }

    fn parse_pow(&mut self) -> PResult<Expr> {
        let base = self.parse_postfix()?;
        if self.eat_tok(&TokenKind::Caret) {
            self.enter()?;
            let exp = self.parse_unary()?;
            self.leave();
            return Ok(binary(BinaryOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn parse_postfix(&mut self) -> PResult<Expr> {
        let mut e = self.parse_primary()?;
        while self.check_kw("as") {
            let TokenKind::Unit(unit) = *self.peek_at(1) else {
                break;
            };
            self.advance();
            self.advance();
            let span = Span::new(e.span.start, self.prev_end());
            e = Expr::new(ExprKind::AsUnit { expr: Box::new(e), unit }, span);
        }
        Ok(e)
    }

    fn note_primary(&mut self) {
        for w in AGGREGATION_FUNCTIONS.iter().chain(BUILTIN_FUNCTIONS).chain(MARKERS) {
            self.note(*w);
        }
        for w in ["case", "{", "(", "-", "not", "true", "false", "number", "string", "identifier"] {
            self.note(w);
        }
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        let tok = self.toks[self.pos].clone();
        let start = tok.span;
        match tok.kind {
            TokenKind::Number(n) => {
                self.advance();
                if let TokenKind::Unit(unit) = *self.peek() {
                    self.advance();
                    return Ok(Expr::new(ExprKind::Duration { amount: n, unit }, Span::new(start.start, self.prev_end())));
                }
                self.note("time unit");
                Ok(Expr::new(ExprKind::Literal(Value::Number(n)), start))
            }
            TokenKind::Str(s) => {
                self.advance();
                Ok(Expr::new(ExprKind::Literal(Value::text(s)), start))
            }
            TokenKind::Keyword(k @ ("true" | "false")) => {
                self.advance();
                Ok(Expr::new(ExprKind::Literal(Value::Boolean(k == "true")), start))
            }
            TokenKind::Marker(m) => {
                self.advance();
                Ok(Expr::new(ExprKind::Marker(m), start))
            }
            TokenKind::Regex(r) => {
                self.advance();
                Ok(Expr::new(ExprKind::Regex(r), start))
            }
            TokenKind::Element(q) => {
                self.advance();
                Ok(Expr::new(ExprKind::Element(q), start))
            }
            TokenKind::LParen => {
                self.advance();
                self.enter()?;
                let inner = self.parse_with()?;
                self.leave();
                self.expect_tok(TokenKind::RParen)?;
                Ok(inner)
            }
            TokenKind::Keyword("case") => self.parse_case(),
            TokenKind::Keyword("end") if *self.peek_at(1) == TokenKind::LParen => {
                self.advance();
                self.parse_call("end".into(), start)
            }
            TokenKind::AggFn(f @ (AggFunc::Min | AggFunc::Max))
                if *self.peek_at(1) == TokenKind::LParen && self.paren_has_top_level_comma(self.pos + 1) =>
            {
                self.advance();
                self.parse_call(f.name().into(), start)
            }
            TokenKind::AggFn(f) => self.parse_aggregation(f),
            TokenKind::Ident(name) => {
                self.advance();
                if *self.peek() == TokenKind::LParen {
                    return self.parse_call(name.to_ascii_lowercase(), start);
                }
                self.note("(");
                Ok(Expr::new(ExprKind::Variable(name), start))
            }
            _ => {
                self.note_primary();
                Err(self.error("expected an expression"))
            }
        }
    }

    fn paren_has_top_level_comma(&self, open: usize) -> bool {
        let mut depth = 0usize;
        for t in &self.toks[open..] {
            match t.kind {
                TokenKind::LParen | TokenKind::LBracket => depth += 1,
                TokenKind::RParen | TokenKind::RBracket => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        return false;
                    }
                }
                TokenKind::Comma if depth == 1 => return true,
                TokenKind::Eof => return false,
                _ => {}
            }
        }
        false
    }

    fn parse_call(&mut self, name: String, start: Span) -> PResult<Expr> {
        self.expect_tok(TokenKind::LParen)?;
        self.enter()?;
        let mut args = Vec::new();
        if !self.eat_tok(&TokenKind::RParen) {
            loop {
                args.push(self.parse_with()?);
                if self.eat_tok(&TokenKind::Comma) {
                    continue;
                }
                self.expect_tok(TokenKind::RParen)?;
                break;
            }
        }
        self.leave();
        Ok(Expr::new(ExprKind::Call { name, args }, Span::new(start.start, self.prev_end())))
    }

    fn parse_case(&mut self) -> PResult<Expr> {
        let start = self.advance().span;
        self.enter()?;
        let mut branches = Vec::new();
        while self.eat_kw("when") {
            let cond = self.parse_or()?;
            self.expect_kw("then")?;
            let val = self.parse_or()?;
            branches.push((cond, val));
        }
        if branches.is_empty() {
            return Err(self.error("expected 'when' after 'case'"));
        }
        let otherwise = if self.eat_kw("else") { Some(Box::new(self.parse_or()?)) } else { None };
        self.expect_kw("end")?;
        self.leave();
        Ok(Expr::new(ExprKind::Case { branches, otherwise }, Span::new(start.start, self.prev_end())))
    }

    fn can_start_target(&self, k: usize) -> bool {
        matches!(
            self.peek_at(k),
            TokenKind::Number(_)
                | TokenKind::Str(_)
                | TokenKind::Ident(_)
                | TokenKind::Marker(_)
                | TokenKind::Element(_)
                | TokenKind::LParen
                | TokenKind::AggFn(_)
                | TokenKind::Keyword("case" | "true" | "false")
        )
    }

    fn parse_aggregation(&mut self, head: AggFunc) -> PResult<Expr> {
        let start = self.advance().span;
        self.enter()?;
        let func = match head {
            AggFunc::Count => {
                if self.eat_kw("distinct") {
                    if self.eat_kw("nonnull") {
                        AggFunc::CountDistinctNonnull
                    } else {
                        AggFunc::CountDistinct
                    }
                } else if self.eat_kw("nonnull") {
                    AggFunc::CountNonnull
                } else {
                    AggFunc::Count
                }
            }
            AggFunc::All if self.eat_kw("nonnull") => AggFunc::AllNonnull,
            AggFunc::Exists if self.eat_kw("nonnull") => AggFunc::ExistsNonnull,
            f => f,
        };
        let mut mode = None;
        if let TokenKind::Ident(w) = self.peek().clone() {
            if let Some(m) = IntervalMode::from_keyword(&w) {
                // `duration(` written tight is the builtin; `duration (…)` is the mode.
                let tight = self.toks.get(self.pos + 1).is_some_and(|t| t.span.start == self.span().end);
                let call = m == IntervalMode::Duration && *self.peek_at(1) == TokenKind::LParen && tight;
                if !call && self.can_start_target(1) {
                    self.advance();
                    mode = Some(m);
                }
            }
        }
        if mode.is_none() {
            for m in IntervalMode::ALL {
                self.note(m.keyword());
            }
        }
        let target = self.parse_postfix()?;

        let bounds = if self.eat_kw("from") {
            let a = self.parse_additive()?;
            self.expect_kw("to")?;
            let b = self.parse_additive()?;
            Some(Bounds::FromTo(a, b))
        } else if self.eat_kw("before") {
            Some(Bounds::Before(self.parse_additive()?))
        } else if self.eat_kw("after") {
            Some(Bounds::After(self.parse_additive()?))
        } else if self.check_kw("at")
            && !matches!(self.peek_at(1), TokenKind::Keyword("every") | TokenKind::LBracket)
        {
            self.advance();
            Some(Bounds::At(self.parse_additive()?))
        } else {
            None
        };

        let mut clauses = Vec::new();
        while let Some(c) = self.parse_clause_tail()? {
            clauses.push(c);
        }

        let timestep = if self.eat_kw("every") {
            let period = self.parse_additive()?;
            let (from, to) = self.timestep_range()?;
            Some(Timestep::Every { period, from, to })
        } else if self.eat_kw("at") {
            if self.eat_kw("every") {
                let event = self.parse_additive()?;
                let (from, to) = self.timestep_range()?;
                Some(Timestep::AtEvery { event, from, to })
            } else {
                Some(Timestep::AtList(self.parse_time_list()?))
            }
        } else {
            None
        };
        self.leave();

        let agg_end = self.prev_end();
        let agg = Aggregation { func, mode, target, bounds, timestep };
        let mut e = Expr::new(ExprKind::Aggregation(Box::new(agg)), Span::new(start.start, agg_end));
        for (clause, _) in clauses {
            e = Expr::new(ExprKind::Clause { target: Box::new(e), clause }, Span::new(start.start, agg_end));
        }
        Ok(e)
    }

    fn timestep_range(&mut self) -> PResult<(Option<Expr>, Option<Expr>)> {
        let from = if self.eat_kw("from") { Some(self.parse_additive()?) } else { None };
        let to = if self.eat_kw("to") { Some(self.parse_additive()?) } else { None };
        Ok((from, to))
    }

    fn parse_time_list(&mut self) -> PResult<Vec<(String, i64)>> {
        self.expect_tok(TokenKind::LBracket)?;
        let mut out = Vec::new();
        loop {
            let span = self.span();
            match self.peek().clone() {
                TokenKind::Str(s) => {
                    let Some(t) = parse_timestamp(&s) else {
                        return Err(ParseError::new(format!("'{s}' is not an ISO-8601 timestamp"), span));
                    };
                    self.advance();
                    out.push((s, t));
                }
                _ => {
                    self.note("string");
                    return Err(self.error("expected a quoted timestamp"));
                }
            }
            if self.eat_tok(&TokenKind::Comma) {
                continue;
            }
            self.expect_tok(TokenKind::RBracket)?;
            return Ok(out);
        }
    }
}

fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
    let span = lhs.span.to(rhs.span);
    Expr::new(ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span)
}
