use hbcli::expr::{parse_expression, BinOp, Env, Expr, Func, Var};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0f64..1e3).prop_map(Expr::Num),
        (0u32..50).prop_map(|k| Expr::Num(k as f64)),
        (1e-9f64..1e-3).prop_map(Expr::Num),
        prop_oneof![Just(Var::X), Just(Var::Z1), Just(Var::Z2)].prop_map(Expr::Var),
    ]
}

pub fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(6, 64, 2, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow)
        ];
        let func = proptest::sample::select(Func::ALL.to_vec());
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Bin(o, Box::new(a), Box::new(b))),
            (func, inner).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn printing_then_parsing_is_identity(e in expr()) {
        let text = e.to_string();
        let back = parse_expression(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(back, e, "{}", text);
    }

    #[test]
    fn round_trip_preserves_values(e in expr(), x in -2.0f64..2.0, z1 in -2.0f64..2.0, z2 in -2.0f64..2.0) {
        let env = Env { x, z1, z2 };
        let back = parse_expression(&e.to_string()).unwrap();
        match (e.eval(&env), back.eval(&env)) {
            (Ok(a), Ok(b)) => prop_assert!(a == b || (a.is_nan() && b.is_nan())),
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn garbage_never_panics(s in "[0-9xz12+*/^().a-e -]{0,24}") {
        let _ = parse_expression(&s);
    }
}
