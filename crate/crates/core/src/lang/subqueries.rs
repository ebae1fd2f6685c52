//! Subquery extraction for result profiling.
//!
//! Nodes are listed in evaluation order (post-order; a `with` value before
//! its body): every element query, every aggregation, each `with` body, and
//! each variable the first time it is referenced within its binding scope.

use serde::Serialize;

use super::ast::*;
use super::element::render_element;
use super::unparse::unparse;
use super::Span;

const LABEL_MAX: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubqueryKind {
    Element,
    Variable,
    Aggregation,
    WithBody,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subquery {
    pub span: Span,
    pub kind: SubqueryKind,
    pub label: String,
    #[serde(skip)]
    pub expr: Expr,
}

pub fn extract_subqueries(root: &Expr) -> Vec<Subquery> {
    let mut w = Walker { out: Vec::new(), scopes: Vec::new(), seen: Vec::new(), next_scope: 0 };
    w.visit(root);
    w.out
}

struct Walker {
    out: Vec<Subquery>,
    /// Active bindings: (name, scope id).
    scopes: Vec<(String, usize)>,
    /// Variables already emitted: (scope id or usize::MAX for unbound, name).
    seen: Vec<(usize, String)>,
    next_scope: usize,
}

impl Walker {
    /// Returns whether `e` itself was emitted.
    fn visit(&mut self, e: &Expr) -> bool {
        match &e.kind {
            ExprKind::With { name, value, body } => {
                self.visit(value);
                let id = self.next_scope;
                self.next_scope += 1;
                self.scopes.push((name.clone(), id));
                let emitted = self.visit(body);
                self.scopes.pop();
                if !emitted {
                    self.emit(body, SubqueryKind::WithBody);
                }
                false
            }
            ExprKind::Variable(name) => {
                let scope = self
                    .scopes
                    .iter()
                    .rev()
                    .find(|(n, _)| n == name)
                    .map_or(usize::MAX, |(_, id)| *id);
                if self.seen.iter().any(|(s, n)| *s == scope && n == name) {
                    return false;
                }
                self.seen.push((scope, name.clone()));
                self.emit(e, SubqueryKind::Variable);
                true
            }
            ExprKind::Element(_) => {
                self.emit(e, SubqueryKind::Element);
                true
            }
            ExprKind::Aggregation(_) => {
                for c in e.children() {
                    self.visit(c);
                }
                self.emit(e, SubqueryKind::Aggregation);
                true
            }
            _ => {
                for c in e.children() {
                    self.visit(c);
                }
                false
            }
        }
    }

    fn emit(&mut self, e: &Expr, kind: SubqueryKind) {
        let label = match &e.kind {
            ExprKind::Element(q) => render_element(q),
            ExprKind::Variable(n) => n.clone(),
            _ => shorten(unparse(e)),
        };
        self.out.push(Subquery { span: e.span, kind, label, expr: e.clone() });
    }
}

fn shorten(s: String) -> String {
    if s.chars().count() <= LABEL_MAX {
        return s;
    }
    let mut t: String = s.chars().take(LABEL_MAX - 1).collect();
    t.push('…');
    t
}
