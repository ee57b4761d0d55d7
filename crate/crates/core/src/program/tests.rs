use proptest::prelude::*;

use super::*;

fn eta(pairs: &[(&str, i64)]) -> Evaluation {
    pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect()
}

#[test]
fn parses_declarations_and_init_block() {
    let p = parse(
        "// a two-member family\n\
         var x : [0..1];\n\
         var y : [4..6];\n\
         init (x=1) & (y<=5) endinit\n",
    )
    .unwrap();
    assert_eq!(p.decls.len(), 2);
    assert_eq!(p.decls[1].domain, Domain::new(4, 6));
    let init = p.init_expr();
    assert_eq!(
        init,
        Expr::and(
            Expr::eq_int("x", 1),
            Expr::Cmp(
                CmpOp::Le,
                Box::new(Expr::var("y")),
                Box::new(Expr::Int(5))
            )
        )
    );
    assert!(eval_bool(&init, &eta(&[("x", 1), ("y", 4)])).unwrap());
    assert!(!eval_bool(&init, &eta(&[("x", 1), ("y", 6)])).unwrap());
}

#[test]
fn parses_two_branch_command() {
    let p = parse(
        "var x : [0..9] init 1;\n\
         var y : [4..6] init 4;\n\
         [] (x=1) & (y<=5) -> 0.5:(x'=0) + 0.5:(x'=1+y);",
    )
    .unwrap();
    let c = &p.commands[0];
    assert!(c.action.is_none());
    assert_eq!(c.branches.len(), 2);
    assert_eq!(c.branches[0].prob, 0.5);
    assert_eq!(
        c.branches[1].update.assigns[0].1,
        Expr::Arith(
            ArithOp::Add,
            Box::new(Expr::Int(1)),
            Box::new(Expr::var("y"))
        )
    );
}

#[test]
fn action_labels_parse_and_stay_inert() {
    let p = parse(
        "var x : [0..1] init 0;\n\
         [step] x=0 -> 1:(x'=1);",
    )
    .unwrap();
    assert_eq!(p.commands[0].action.as_deref(), Some("step"));
}

#[test]
fn probability_sum_must_be_one() {
    let err = parse(
        "var x : [0..1] init 0;\n\
         [] true -> 0.5:(x'=0) + 0.4:(x'=1);",
    )
    .unwrap_err();
    assert!(matches!(err, ParseError::BadProbabilities { .. }));
    assert!(err.to_string().contains("probabilities must sum to 1"));
}

#[test]
fn rational_probabilities_are_accepted() {
    let p = parse(
        "var x : [0..2] init 0;\n\
         [] x=0 -> 1/3:(x'=1) + 2/3:(x'=2);",
    )
    .unwrap();
    assert!((p.commands[0].branches[0].prob - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn duplicate_and_undeclared_variables_are_rejected() {
    let dup = parse("var x : [0..1];\nvar x : [0..1];").unwrap_err();
    assert!(matches!(dup, ParseError::DuplicateDeclaration { .. }));
    let undecl = parse("var x : [0..1] init 0;\n[] y=0 -> 1:true;").unwrap_err();
    assert!(matches!(undecl, ParseError::UndeclaredVariable { .. }));
}

#[test]
fn type_errors_are_rejected() {
    let err = parse(
        "var x : [0..1] init 0;\n\
         [] x -> 1:true;",
    )
    .unwrap_err();
    assert!(matches!(err, ParseError::TypeError { .. }));
    let err = parse(
        "var x : [0..1] init 0;\n\
         [] (x=0) & (true = false) -> 1:true;",
    )
    .unwrap_err();
    assert!(matches!(err, ParseError::TypeError { .. }));
}

#[test]
fn syntax_errors_carry_positions() {
    let err = parse("var x : [0..1]\n[] true -> 1:true;").unwrap_err();
    match err {
        ParseError::Syntax { line, col, .. } => {
            assert_eq!(line, 2);
            assert!(col >= 1);
        }
        other => panic!("expected a syntax error, got {other}"),
    }
}

#[test]
fn eval_expr_examples() {
    assert_eq!(
        eval_expr(
            &Expr::Arith(
                ArithOp::Add,
                Box::new(Expr::Int(1)),
                Box::new(Expr::var("y"))
            ),
            &eta(&[("y", 4)])
        ),
        Ok(Value::Int(5))
    );
    // integer division truncates towards zero
    let div = Expr::Arith(
        ArithOp::Div,
        Box::new(Expr::Int(-7)),
        Box::new(Expr::Int(2)),
    );
    assert_eq!(eval_expr(&div, &eta(&[])), Ok(Value::Int(-3)));
    let by_zero = Expr::Arith(
        ArithOp::Div,
        Box::new(Expr::Int(1)),
        Box::new(Expr::Int(0)),
    );
    assert_eq!(eval_expr(&by_zero, &eta(&[])), Err(EvalError::DivisionByZero));
}

#[test]
fn missing_initializer_defaults_to_the_lower_bound() {
    let p = parse("var x : [3..5];").unwrap();
    assert_eq!(p.init_expr(), Expr::eq_int("x", 3));
}

#[test]
fn source_round_trip_is_structurally_identical() {
    let src = "var x : [0..1] init 1;\n\
               var y : [4..6];\n\
               [go] (x=1) & (y<=5) -> 0.5:(x'=0) + 0.25:(x'=1+y/2) + 0.25:true;\n\
               [] (x=0) | !(y=4) -> 1:(y'=4) & (x'=1);\n\
               init (x=1) & ((y=4) | (y=5)) endinit\n";
    let p = parse(src).unwrap();
    let reparsed = parse(&p.to_source()).unwrap();
    assert_eq!(p, reparsed);
}

// Random well-typed Boolean expressions over x,y for the printer round trip.
fn arith_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-20i64..20).prop_map(Expr::Int),
        Just(Expr::var("x")),
        Just(Expr::var("y")),
    ];
    leaf.prop_recursive(3, 24, 2, |inner| {
        (inner.clone(), inner).prop_flat_map(|(a, b)| {
            prop_oneof![
                Just(Expr::Arith(ArithOp::Add, Box::new(a.clone()), Box::new(b.clone()))),
                Just(Expr::Arith(ArithOp::Sub, Box::new(a.clone()), Box::new(b.clone()))),
                Just(Expr::Arith(ArithOp::Mul, Box::new(a.clone()), Box::new(b.clone()))),
                Just(Expr::Arith(ArithOp::Div, Box::new(a), Box::new(b))),
            ]
        })
    })
}

fn bool_expr() -> impl Strategy<Value = Expr> {
    let cmp = (arith_expr(), arith_expr(), 0usize..6).prop_map(|(a, b, op)| {
        let op = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge][op];
        Expr::Cmp(op, Box::new(a), Box::new(b))
    });
    let leaf = prop_oneof![cmp, any::<bool>().prop_map(Expr::Bool)];
    leaf.prop_recursive(3, 32, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::and(a, b)),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::or(a, b)),
            inner.prop_map(|a| Expr::Not(Box::new(a))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn printed_guards_reparse_to_the_same_tree(e in bool_expr()) {
        let src = format!(
            "var x : [0..9] init 0;\nvar y : [0..9] init 0;\n[] {} -> 1:true;",
            print_expr(&e)
        );
        let p = parse(&src).unwrap();
        prop_assert_eq!(&p.commands[0].guard, &e);
    }
}
