use std::sync::Arc;

use proptest::prelude::*;

use tabsynth::privacy::{clamp_normalize, epsilon_from_rho, make_schedule, rho_from_epsilon, ScheduleKind};
use tabsynth::publicfit::{nnls_projected_gradient, FitOptions};
use tabsynth::schema::{read_dataset, Cell, ClampPolicy, ColumnSpec, Record};
use tabsynth::workload::{build_grouped_numeric_workload, build_marginal_workload, wdist, PredicateMatrix};
use tabsynth::{Dataset, Provenance, TableSchema};

fn schema() -> Arc<TableSchema> {
    Arc::new(
        TableSchema::new(
            "p",
            vec![
                ColumnSpec::categorical("a", &["x", "y", "z"]),
                ColumnSpec::categorical("b", &["0", "1"]),
                ColumnSpec::numerical("v", -2.0, 2.0, 5),
            ],
        )
        .unwrap(),
    )
}

fn record() -> impl Strategy<Value = Record> {
    (0u32..3, 0u32..2, -2.0f64..2.0)
        .prop_map(|(a, b, v)| Record::new(vec![Cell::Cat(a), Cell::Cat(b), Cell::Num(v)]))
}

proptest! {
    #[test]
    fn wdist_is_a_pseudometric(x in record(), y in record(), z in record(), k in 1usize..=3) {
        let w = build_marginal_workload(schema(), k, None).unwrap();
        prop_assert_eq!(wdist(&x, &x, &w), 0.0);
        prop_assert_eq!(wdist(&x, &y, &w), wdist(&y, &x, &w));
        prop_assert!(wdist(&x, &z, &w) <= wdist(&x, &y, &w) + wdist(&y, &z, &w) + 1e-12);
        prop_assert!(wdist(&x, &y, &w) >= 0.0);
    }

    #[test]
    fn grouped_wdist_is_symmetric(x in record(), y in record()) {
        let w = build_grouped_numeric_workload(schema(), &[0, 1], &[2]).unwrap();
        prop_assert_eq!(wdist(&x, &y, &w), wdist(&y, &x, &w));
        prop_assert_eq!(wdist(&x, &x, &w), 0.0);
    }

    #[test]
    fn rho_conversion_round_trips(eps in 1e-3f64..20.0, log_delta in -12.0f64..-3.0) {
        let delta = 10f64.powf(log_delta);
        let rho = rho_from_epsilon(eps, delta);
        let back = epsilon_from_rho(rho, delta);
        prop_assert!(back <= eps);
        prop_assert!((eps - back) <= 1e-9 * eps);
    }

    #[test]
    fn schedules_sum_to_one(t in 1usize..200) {
        for kind in [ScheduleKind::Even, ScheduleKind::Increasing, ScheduleKind::Decreasing] {
            let s = make_schedule(kind, t).unwrap();
            prop_assert_eq!(s.iterations(), t);
            prop_assert!(s.shares.iter().all(|&x| x > 0.0));
            prop_assert!((s.shares.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn clamp_normalize_is_a_distribution(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let p = clamp_normalize(&v);
        prop_assert_eq!(p.len(), v.len());
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        if v.iter().any(|&y| y > 0.0) {
            for (x, y) in p.iter().zip(&v) {
                if *y <= 0.0 {
                    prop_assert_eq!(*x, 0.0);
                }
            }
        } else {
            prop_assert!(p.iter().all(|&x| (x - p[0]).abs() <= 1e-12));
        }
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec(record(), 1..30)) {
        let d = Dataset::new(schema(), rows, Provenance::Synthetic).unwrap();
        let mut buf = Vec::new();
        d.write_csv_to(&mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), schema(), ClampPolicy::Reject, Provenance::Synthetic).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn nnls_objective_not_beaten(
        pool in prop::collection::vec(record(), 2..12),
        target in prop::collection::vec(record(), 1..12),
        probes in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 12), 100),
    ) {
        let w = build_marginal_workload(schema(), 2, None).unwrap();
        let matrix = PredicateMatrix::build(&w, &pool);
        let t = PredicateMatrix::build(&w, &target);
        let y = t.weighted_sum(&vec![1.0 / target.len() as f64; target.len()], w.len());
        let (weights, diag) = nnls_projected_gradient(&matrix, &y, &FitOptions::default());
        prop_assert!(weights.iter().all(|&x| x >= 0.0));
        let f = |weights: &[f64]| -> f64 {
            matrix.weighted_sum(weights, y.len()).iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let found = f(&weights);
        prop_assert!((found - diag.objective).abs() <= 1e-9 * (1.0 + found));
        for probe in &probes {
            prop_assert!(found <= f(&probe[..pool.len()]) + 1e-6);
        }
        prop_assert!(found <= f(&vec![1.0 / pool.len() as f64; pool.len()]) + 1e-6);
    }
}
