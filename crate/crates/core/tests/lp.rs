mod common;

use proptest::prelude::*;
use sensor_select::lp::{self, LinearProgram, LpStatus, Relation, Sense};

fn relation(code: u8) -> Relation {
    match code % 3 {
        0 => Relation::Le,
        1 => Relation::Ge,
        _ => Relation::Eq,
    }
}

/// Random program in x >= 0 with a closing row `sum x <= b` so that it is bounded.
fn bounded_lp() -> impl Strategy<Value = LinearProgram<f64>> {
    (1usize..=6, 0usize..=5).prop_flat_map(|(n, m)| {
        (
            any::<bool>(),
            prop::collection::vec(-5i32..=5, n),
            prop::collection::vec((prop::collection::vec(-5i32..=5, n), 0u8..3, -5i32..=5), m),
            1i32..=5,
        )
            .prop_map(move |(maximize, c, rows, cap)| {
                let sense = if maximize { Sense::Maximize } else { Sense::Minimize };
                let mut lp = LinearProgram::new(sense, c.iter().map(|&v| f64::from(v)).collect());
                for (a, rel, b) in rows {
                    lp.add_constraint(a.iter().map(|&v| f64::from(v)).collect(), relation(rel), f64::from(b));
                }
                lp.add_constraint(vec![1.0; n], Relation::Le, f64::from(cap));
                lp
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn simplex_agrees_with_vertex_enumeration(lp in bounded_lp()) {
        let sol = lp::solve(&lp).unwrap();
        match common::vertex_optimum(&lp) {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some((best, _)) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective - best).abs() <= 1e-7, "simplex {} vs vertices {}", sol.objective, best);
                prop_assert!(lp.max_violation(&sol.x) <= 1e-8);
                prop_assert!((lp.objective_at(&sol.x) - sol.objective).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn solving_twice_is_bitwise_identical(lp in bounded_lp()) {
        let a = lp::solve(&lp).unwrap();
        let b = lp::solve(&lp).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        prop_assert_eq!(a.x, b.x);
    }

    #[test]
    fn shifted_bounds_match_enumeration(
        lows in prop::collection::vec(-3i32..=3, 3),
        c in prop::collection::vec(-4i32..=4, 3),
        width in 1i32..=6,
    ) {
        let mut lp = LinearProgram::minimize(c.iter().map(|&v| f64::from(v)).collect());
        for (j, &l) in lows.iter().enumerate() {
            lp.set_lower_bound(j, f64::from(l));
            let mut upper = vec![0.0; 3];
            upper[j] = 1.0;
            lp.add_constraint(upper, Relation::Le, f64::from(l + width));
        }
        let (best, _) = common::vertex_optimum(&lp).unwrap();
        let sol = lp::solve(&lp).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!((sol.objective - best).abs() <= 1e-9);
    }
}

#[test]
fn free_variable_reaches_negative_optimum() {
    // min x + y with y free, x + y >= -3 and y <= 4: optimum -3.
    let mut lp = LinearProgram::<f64>::minimize(vec![1.0, 1.0])
        .constraint(vec![1.0, 1.0], Relation::Ge, -3.0)
        .constraint(vec![0.0, 1.0], Relation::Le, 4.0);
    lp.set_free(1);
    let sol = lp::solve(&lp).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.objective + 3.0).abs() < 1e-12);
    let (oracle, _) = common::vertex_optimum(&lp).unwrap();
    assert!((oracle + 3.0).abs() < 1e-12);
}

#[test]
fn infeasible_program_detected() {
    let lp = LinearProgram::<f64>::maximize(vec![1.0, 2.0])
        .constraint(vec![1.0, 1.0], Relation::Le, 2.0)
        .constraint(vec![1.0, 1.0], Relation::Ge, 3.0);
    assert_eq!(lp::solve(&lp).unwrap().status, LpStatus::Infeasible);
    assert!(common::vertex_optimum(&lp).is_none());
}

#[test]
fn redundant_equality_rows_are_feasible() {
    let lp = LinearProgram::minimize(vec![1.0, 0.0, 0.0])
        .constraint(vec![-2.0, -1.0, 2.0], Relation::Eq, 1.0)
        .constraint(vec![2.0, 1.0, -2.0], Relation::Eq, -1.0)
        .constraint(vec![1.0, 1.0, 1.0], Relation::Le, 1.0);
    let (best, _) = common::vertex_optimum(&lp).unwrap();
    let sol = lp::solve(&lp).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.objective - best).abs() <= 1e-9);
    assert!(lp.max_violation(&sol.x) <= 1e-9);
}
