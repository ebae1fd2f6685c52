use std::path::PathBuf;

use proptest::prelude::*;
use tempoql::lang::*;
use tempoql::value::{parse_timestamp, BinaryOp, TimeUnit, Value};

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn corpus() -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut cats: Vec<_> = std::fs::read_dir(corpus_dir().join("categories"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "tql"))
        .collect();
    cats.sort();
    for p in cats {
        out.push((p.file_stem().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()));
    }
    let queries: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(corpus_dir().join("queries.json")).unwrap()).unwrap();
    for q in queries.as_array().unwrap() {
        out.push((q["id"].as_str().unwrap().to_string(), q["text"].as_str().unwrap().to_string()));
    }
    out
}

fn check_spans(e: &Expr, len: usize) {
    assert!(e.span.start <= e.span.end && e.span.end <= len, "span out of range: {:?}", e.span);
    for c in e.children() {
        assert!(e.span.contains(&c.span), "child {:?} escapes parent {:?}", c.span, e.span);
        check_spans(c, len);
    }
}

#[test]
fn corpus_parses_round_trips_and_nests_spans() {
    let all = corpus();
    assert!(all.len() >= 45, "corpus has {} queries", all.len());
    for (id, text) in all {
        let ast = parse(&text).unwrap_or_else(|e| panic!("{id}: {e}"));
        check_spans(&ast, text.len());
        let printed = unparse(&ast);
        let again = parse(&printed).unwrap_or_else(|e| panic!("{id}: reparse of {printed:?}: {e}"));
        assert_eq!(ast, again, "{id}: {printed}");
        assert_eq!(unparse(&again), printed, "{id}: printing is not stable");
    }
}

#[test]
fn duration_mode_versus_builtin() {
    let mode_of = |q: &str| match parse(q).unwrap().kind {
        ExprKind::Aggregation(a) => (a.mode, matches!(a.target.kind, ExprKind::Call { .. })),
        other => panic!("{other:?}"),
    };
    assert_eq!(mode_of("sum duration ({D} > 1) before #now"), (Some(IntervalMode::Duration), false));
    assert_eq!(mode_of("sum duration {D}"), (Some(IntervalMode::Duration), false));
    assert_eq!(mode_of("sum duration({D})"), (None, true));
    let e = parse("last duration ({D} > 1)").unwrap();
    assert_eq!(parse(&unparse(&e)).unwrap(), e);
}

#[test]
fn precedence_regressions() {
    let e = parse("a + b * c").unwrap();
    assert_eq!(unparse(&e), "a + b * c");
    let ExprKind::Binary { op: BinaryOp::Add, rhs, .. } = &e.kind else { panic!() };
    assert!(matches!(rhs.kind, ExprKind::Binary { op: BinaryOp::Mul, .. }));

    let e = parse("x where p impute q").unwrap();
    let ExprKind::Clause { target, clause: ClauseKind::Impute(_) } = &e.kind else { panic!() };
    assert!(matches!(target.kind, ExprKind::Clause { clause: ClauseKind::Where(_), .. }));
}

#[test]
fn nested_with_preserves_binding_order() {
    let e = parse("a + b with a as 1 with b as 2").unwrap();
    let ExprKind::With { name, body, .. } = &e.kind else { panic!() };
    assert_eq!(name, "b");
    assert!(matches!(&body.kind, ExprKind::With { name, .. } if name == "a"));
    assert_eq!(parse(&unparse(&e)).unwrap(), e);
}

#[test]
fn parse_error_span_lies_within_input() {
    for bad in ["", "mean", "(", "{", "{a", "'abc", "/ab", "x +", "case when", "mean x every", "x cut bins [", "\u{0}", "é +"] {
        if let Err(err) = parse(bad) {
            assert!(err.span.end <= bad.len(), "{bad:?}: {err:?}");
        }
    }
}

#[test]
fn error_reports_expected_expression_in_window() {
    let err = parse("min x from to").unwrap_err();
    assert_eq!((err.span.start, err.span.end), (11, 13));
    assert!(!err.expected.is_empty());
}

// ---- random ASTs ------------------------------------------------------------

fn sp() -> Span {
    Span::default()
}

fn mk(kind: ExprKind) -> Expr {
    Expr::new(kind, sp())
}

fn bx(e: Expr) -> Box<Expr> {
    Box::new(e)
}

const VARS: &[&str] = &["x", "y", "temp", "vals", "first_rx"];
const ELEMENTS: &[&str] = &[
    "{Gender}",
    "{Heart Rate; scope = chartevents}",
    "{name in ('A', 'B c'); type = event}",
    "{scope = Lab; name contains /resp\\w* rate/i}",
    "{id = 'RxNorm/242969'; value = amount}",
    "{O2 Delivery Device(s)}",
];
const REGEXES: &[(&str, bool)] = &[("^[-0-9.]+$", false), ("fib", true), ("a|b", false)];

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0u32..1000).prop_map(|n| mk(ExprKind::Literal(Value::Number(n as f64)))),
        (0u32..1000).prop_map(|n| mk(ExprKind::Literal(Value::Number(n as f64 / 8.0)))),
        "[a-zA-Z '\\\\]{0,6}".prop_map(|s| mk(ExprKind::Literal(Value::text(s)))),
        any::<bool>().prop_map(|b| mk(ExprKind::Literal(Value::Boolean(b)))),
        prop::sample::select(VARS).prop_map(|v| mk(ExprKind::Variable(v.to_string()))),
        prop::sample::select(ELEMENTS).prop_map(|s| parse(s).unwrap()),
        prop::sample::select(vec![Marker::Now, Marker::MinTime, Marker::MaxTime, Marker::Value])
            .prop_map(|m| mk(ExprKind::Marker(m))),
        ((1u32..100), prop::sample::select(TimeUnit::ALL.to_vec()))
            .prop_map(|(a, unit)| mk(ExprKind::Duration { amount: a as f64, unit })),
    ]
}

fn binop() -> impl Strategy<Value = BinaryOp> {
    prop::sample::select(vec![
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Pow,
        BinaryOp::Eq,
        BinaryOp::Ne,
        BinaryOp::Lt,
        BinaryOp::Le,
        BinaryOp::Gt,
        BinaryOp::Ge,
        BinaryOp::And,
        BinaryOp::Or,
    ])
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 4, |inner| {
        let opt = |s: BoxedStrategy<Expr>| prop::option::of(s);
        let inner_b = inner.clone().boxed();
        prop_oneof![
            (binop(), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| mk(ExprKind::Binary { op, lhs: bx(l), rhs: bx(r) })),
            (any::<bool>(), inner.clone()).prop_map(|(not, o)| mk(ExprKind::Unary {
                op: if not { UnaryOp::Not } else { UnaryOp::Neg },
                operand: bx(o)
            })),
            (prop::collection::vec((inner.clone(), inner.clone()), 1..3), opt(inner_b.clone()))
                .prop_map(|(branches, o)| mk(ExprKind::Case { branches, otherwise: o.map(bx) })),
            (inner.clone(), inner.clone(), inner.clone())
                .prop_map(|(e, l, h)| mk(ExprKind::Between { expr: bx(e), low: bx(l), high: bx(h) })),
            (inner.clone(), prop::sample::select(REGEXES), 0..4usize, any::<bool>()).prop_map(|(e, (p, ci), k, text)| {
                let op = [PatternOp::Contains, PatternOp::Matches, PatternOp::StartsWith, PatternOp::EndsWith][k];
                let pattern = if text {
                    PatternOperand::Text(p.to_string())
                } else {
                    PatternOperand::Regex(RegexLit { pattern: p.to_string(), case_insensitive: ci })
                };
                mk(ExprKind::Pattern { op, expr: bx(e), pattern })
            }),
            (inner.clone(), prop::collection::vec(inner.clone(), 1..3))
                .prop_map(|(e, items)| mk(ExprKind::InList { expr: bx(e), items })),
            (prop::sample::select(BUILTIN_FUNCTIONS), prop::collection::vec(inner.clone(), 0..3)).prop_map(
                |(name, mut args)| {
                    if matches!(name, "min" | "max") {
                        while args.len() < 2 {
                            args.push(mk(ExprKind::Literal(Value::Number(1.0))));
                        }
                    }
                    mk(ExprKind::Call { name: name.to_string(), args })
                }
            ),
            arb_aggregation(inner.clone()),
            (inner.clone(), arb_clause(inner.clone()))
                .prop_map(|(t, clause)| mk(ExprKind::Clause { target: bx(t), clause })),
            (prop::sample::select(VARS), inner.clone(), inner.clone()).prop_map(|(n, v, b)| mk(ExprKind::With {
                name: n.to_string(),
                value: bx(v),
                body: bx(b)
            })),
            (inner.clone(), prop::sample::select(TimeUnit::ALL.to_vec()))
                .prop_map(|(e, unit)| mk(ExprKind::AsUnit { expr: bx(e), unit })),
        ]
    })
}

fn arb_clause(inner: impl Strategy<Value = Expr> + Clone + 'static) -> impl Strategy<Value = ClauseKind> {
    prop_oneof![
        inner.clone().prop_map(|e| ClauseKind::Where(bx(e))),
        Just(ClauseKind::Impute(ImputeStrategy::Mean)),
        Just(ClauseKind::Impute(ImputeStrategy::Median)),
        inner.clone().prop_map(|e| ClauseKind::Impute(ImputeStrategy::Expr(bx(e)))),
        inner.prop_map(|e| ClauseKind::Carry(bx(e))),
        (prop::collection::btree_set(0i32..50, 2..5), any::<bool>(), any::<bool>()).prop_map(|(set, lo, hi)| {
            let mut edges: Vec<f64> = set.into_iter().map(|v| v as f64 - 10.0).collect();
            if lo {
                edges.insert(0, f64::NEG_INFINITY);
            }
            if hi {
                edges.push(f64::INFINITY);
            }
            let labels = (1..edges.len()).map(|i| format!("bin {i}")).collect();
            ClauseKind::Cut { edges, labels }
        }),
    ]
}

fn arb_aggregation(inner: impl Strategy<Value = Expr> + Clone + 'static) -> impl Strategy<Value = Expr> {
    let opt = |s: BoxedStrategy<Expr>| prop::option::of(s);
    let ib = inner.clone().boxed();
    let bounds = prop_oneof![
        Just(None),
        (inner.clone(), inner.clone()).prop_map(|(a, b)| Some(Bounds::FromTo(a, b))),
        inner.clone().prop_map(|a| Some(Bounds::Before(a))),
        inner.clone().prop_map(|a| Some(Bounds::After(a))),
        inner.clone().prop_map(|a| Some(Bounds::At(a))),
    ];
    let timestep = prop_oneof![
        Just(None),
        (inner.clone(), opt(ib.clone()), opt(ib.clone()))
            .prop_map(|(period, from, to)| Some(Timestep::Every { period, from, to })),
        (inner.clone(), opt(ib.clone()), opt(ib.clone()))
            .prop_map(|(event, from, to)| Some(Timestep::AtEvery { event, from, to })),
        prop::collection::vec(prop::sample::select(vec!["2020-01-01", "2021-06-30T12:00:00Z", "2019-03-04 05:06:07"]), 1..3)
            .prop_map(|ts| Some(Timestep::AtList(
                ts.into_iter().map(|t| (t.to_string(), parse_timestamp(t).unwrap())).collect()
            ))),
    ];
    (
        prop::sample::select(AggFunc::ALL.to_vec()),
        prop::option::of(prop::sample::select(IntervalMode::ALL.to_vec())),
        inner,
        bounds,
        timestep,
    )
        .prop_map(|(func, mode, target, bounds, timestep)| {
            mk(ExprKind::Aggregation(Box::new(Aggregation { func, mode, target, bounds, timestep })))
        })
}

/// Independent count of the nodes subquery extraction should report.
fn expected_subquery_count(e: &Expr) -> usize {
    fn walk(e: &Expr, env: &mut Vec<(String, usize)>, seen: &mut Vec<(usize, String)>, fresh: &mut usize) -> (usize, bool) {
        match &e.kind {
            ExprKind::Element(_) => (1, true),
            ExprKind::Variable(n) => {
                let scope = env.iter().rev().find(|(m, _)| m == n).map_or(usize::MAX, |x| x.1);
                if seen.contains(&(scope, n.clone())) {
                    (0, false)
                } else {
                    seen.push((scope, n.clone()));
                    (1, true)
                }
            }
            ExprKind::With { name, value, body } => {
                let (a, _) = walk(value, env, seen, fresh);
                *fresh += 1;
                env.push((name.clone(), *fresh));
                let (b, self_counted) = walk(body, env, seen, fresh);
                env.pop();
                (a + b + usize::from(!self_counted), false)
            }
            ExprKind::Aggregation(_) => {
                let n: usize = e.children().iter().map(|c| walk(c, env, seen, fresh).0).sum();
                (n + 1, true)
            }
            _ => (e.children().iter().map(|c| walk(c, env, seen, fresh).0).sum(), false),
        }
    }
    walk(e, &mut Vec::new(), &mut Vec::new(), &mut 0).0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn random_ast_round_trips(e in arb_expr()) {
        let text = unparse(&e);
        let back = parse(&text).map_err(|err| TestCaseError::fail(format!("{text:?}: {err}")))?;
        prop_assert_eq!(&back, &e, "{}", text);
        check_spans(&back, text.len());
        prop_assert_eq!(extract_subqueries(&back).len(), expected_subquery_count(&back));
    }

    #[test]
    fn parse_never_panics_on_bytes(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let s = String::from_utf8_lossy(&bytes);
        if let Err(err) = parse(&s) {
            prop_assert!(err.span.end <= s.len());
        }
        let _ = complete(&s, s.len() / 2, &[]);
    }

    #[test]
    fn parse_never_panics_on_token_soup(words in prop::collection::vec(prop::sample::select(vec![
        "mean", "count", "distinct", "x", "{a}", "(", ")", "[", "]", ",", "from", "to", "every", "at",
        "4", "h", "hours", "#now", "-", "+", "*", "/", "^", "where", "impute", "carry", "cut", "bins",
        "named", "with", "as", "case", "when", "then", "else", "end", "'s'", "/r/i", "not", "and", "or",
        "between", "in", "contains", "=", "<", "rate", "inf", "before", "after", "min", "max",
    ]), 0..24)) {
        let s = words.join(" ");
        if let Err(err) = parse(&s) {
            prop_assert!(err.span.end <= s.len());
        } else {
            let e = parse(&s).unwrap();
            prop_assert_eq!(parse(&unparse(&e)).unwrap(), e);
        }
    }
}
