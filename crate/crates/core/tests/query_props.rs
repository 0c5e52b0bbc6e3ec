use proptest::prelude::*;
use radsearch_core::query::{detect_boolean, optional_budget, parse_query, QueryAst};

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z]{1,7}",
        "[a-z]{2,5}\\*",
        "[a-z]{1,3}\\?[a-z]{1,3}",
        ("[a-z]{1,5}", "[a-z]{1,5}").prop_map(|(a, b)| format!("\"{a} {b}\"")),
        "[a-z0-9]{1,6}".prop_map(|v| format!("Findings:{v}")),
        "[a-z]{1,6}".prop_map(|v| format!("PatientName:\"{v}\"")),
    ]
}

fn query() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} AND {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} OR {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} {b}")),
            inner.clone().prop_map(|a| format!("({a})")),
            inner.clone().prop_map(|a| format!("NOT ({a})")),
            inner.prop_map(|a| format!("-({a})")),
        ]
    })
}

fn parse(q: &str) -> QueryAst {
    parse_query(q).unwrap_or_else(|e| panic!("{q}: {e}"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn pretty_print_round_trips(q in query()) {
        let ast = parse(&q);
        let printed = ast.to_string();
        prop_assert!(parse(&printed).same_shape(&ast), "{} -> {}", q, printed);
    }

    #[test]
    fn precedence_law(a in leaf(), b in leaf(), c in leaf()) {
        let flat = parse(&format!("{a} OR {b} AND {c}"));
        let grouped = parse(&format!("{a} OR ({b} AND {c})")).without_groups();
        let same = flat.same_shape(&grouped);
        prop_assert!(same);
    }

    #[test]
    fn symbols_equal_words(a in leaf(), b in leaf()) {
        let pairs = [
            (format!("!{a}"), format!("NOT {a}")),
            (format!("{a} & {b}"), format!("{a} AND {b}")),
            (format!("{a} | {b}"), format!("{a} OR {b}")),
        ];
        for (sym, word) in &pairs {
            prop_assert!(parse(sym).same_shape(&parse(word)), "{} vs {}", sym, word);
        }
    }

    #[test]
    fn quoted_operators_do_not_trigger(words in prop::collection::vec(prop_oneof![
        Just("AND".to_string()), Just("OR".to_string()), Just("NOT".to_string()),
        Just("+".to_string()), Just("-x".to_string()), Just("|".to_string()),
        Just("&".to_string()), Just("!y".to_string()), "[a-z]{1,5}",
    ], 1..8), plain in prop::collection::vec("[a-z]{1,6}", 0..4)) {
        let q = format!("{} \"{}\"", plain.join(" "), words.join(" "));
        prop_assert!(!detect_boolean(&q), "{}", q);
    }
}

#[test]
fn budget_monotone_with_two_breakpoints() {
    let values: Vec<usize> = (0..=200).map(optional_budget).collect();
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(optional_budget(4), 0);
    assert_eq!(optional_budget(5), 1);
    assert_eq!(optional_budget(9), 1);
    assert_eq!(optional_budget(10), 3);
    // the only jumps in rule (not in floor steps) are at 4->5 and 9->10
    assert!((10..=200).all(|n| optional_budget(n) == n * 3 / 10));
    assert!((5..=9).all(|n| optional_budget(n) == (n / 5).min(2)));
}
