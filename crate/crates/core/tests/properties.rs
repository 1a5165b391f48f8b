use modelbelief::belief::extract;
use modelbelief::estimation::chebyshev_run_count;
use modelbelief::study::default_alternatives;
use modelbelief::token::{softmax_with_temperature, temper, GenerationRun, LogitVector, Token};
use proptest::prelude::*;

fn logits(values: &[f64]) -> LogitVector {
    LogitVector::new(
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (Token::new(format!("t{i}")).unwrap(), v)),
    )
    .unwrap()
}

fn naive_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|v| (v / t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn softmax_is_a_shift_invariant_distribution(
        z in prop::collection::vec(-30.0f64..30.0, 1..12),
        t in 0.05f64..5.0,
        shift in -500.0f64..500.0,
    ) {
        let p = softmax_with_temperature(&logits(&z), t).unwrap();
        let sum: f64 = p.values().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.values().iter().all(|v| (0.0..=1.0).contains(v)));
        for (a, b) in p.values().iter().zip(naive_softmax(&z, t)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
        let q = softmax_with_temperature(&logits(&shifted), t).unwrap();
        for (a, b) in p.values().iter().zip(q.values()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_temperature_is_greedy(z in prop::collection::vec(-10.0f64..10.0, 1..12)) {
        let p = softmax_with_temperature(&logits(&z), 0.0).unwrap();
        let best = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = z.iter().position(|&v| v == best).unwrap();
        for (i, v) in p.values().iter().enumerate() {
            prop_assert_eq!(*v, if i == first { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn tempering_probabilities_matches_softmax_of_logs(
        raw in prop::collection::vec(0.01f64..1.0, 2..10),
        t in 0.1f64..4.0,
    ) {
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let logs: Vec<f64> = p.iter().map(|v| v.ln()).collect();
        for (a, b) in temper(&p, t).iter().zip(naive_softmax(&logs, t)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chebyshev_count_is_monotone(
        v in 0.0f64..1.0, dv in 0.0f64..1.0,
        eps in 0.001f64..0.5, de in 0.0f64..0.5,
        delta in 0.01f64..0.5, dd in 0.0f64..0.4,
    ) {
        let base = chebyshev_run_count(v, eps, delta).unwrap();
        prop_assert!(base >= 1);
        prop_assert!(chebyshev_run_count(v + dv, eps, delta).unwrap() >= base);
        prop_assert!(chebyshev_run_count(v, eps + de, delta).unwrap() <= base);
        let d2 = (delta + dd).min(0.99);
        prop_assert!(chebyshev_run_count(v, eps, d2).unwrap() <= base);
        // The guarantee: n runs push the bound variance / (n eps^2) to delta or below.
        if v > 0.0 {
            prop_assert!(v / (base as f64 * eps * eps) <= delta * (1.0 + 1e-12));
        }
    }

    #[test]
    fn belief_is_the_renormalized_marker_mass(
        lp in prop::collection::vec(-12.0f64..-0.01, 3),
        chosen in 0usize..3,
        prefix_len in 0usize..4,
        fillers in 0usize..10,
    ) {
        let alts = default_alternatives();
        let markers = ["P", "H", "neither"];
        // Keep total mass below one.
        let scale = lp.iter().map(|v| v.exp()).sum::<f64>().max(1.0).ln() + 0.01;
        let mut top: Vec<(Token, f64)> = markers
            .iter()
            .zip(&lp)
            .map(|(m, v)| (Token::new(m).unwrap(), v - scale))
            .collect();
        for f in 0..fillers {
            top.push((Token::new(format!(" w{f}")).unwrap(), -20.0 - f as f64));
        }
        top.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut tokens: Vec<Token> = (0..prefix_len).map(|i| Token::new(format!(" x{i}")).unwrap()).collect();
        tokens.push(Token::new(markers[chosen]).unwrap());
        let mut positions = vec![vec![(Token::new(".").unwrap(), -0.1)]; prefix_len];
        positions.push(top);
        let run = GenerationRun {
            scenario: "p30".into(),
            run_index: 0,
            tokens,
            top_logprobs: positions,
            seed: 0,
            temperature: 1.0,
            text: None,
        };
        run.validate().unwrap();
        let e = extract(&run, &alts).unwrap();
        prop_assert_eq!(e.pivot.pivot_index, prefix_len);
        prop_assert_eq!(e.pivot.alternative, chosen);
        let mass: Vec<f64> = lp.iter().map(|v| (v - scale).exp()).collect();
        let total: f64 = mass.iter().sum();
        prop_assert!((e.belief.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (b, m) in e.belief.values.iter().zip(&mass) {
            prop_assert!((b - m / total).abs() < 1e-12);
        }
        prop_assert!(e.belief.truncated.iter().all(|t| !t));
    }
}
