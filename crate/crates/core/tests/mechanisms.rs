use std::sync::Arc;

use rand::seq::SliceRandom;

use tabsynth::baselines::uniform_public;
use tabsynth::publicfit::{jam_lite, mwem_refine, FitOptions, JamOptions};
use tabsynth::schema::{Cell, ColumnSpec, Record};
use tabsynth::workload::build_marginal_workload;
use tabsynth::{AccountantLedger, Dataset, Provenance, SeedTree, TableSchema};

fn schema() -> Arc<TableSchema> {
    Arc::new(
        TableSchema::new(
            "m",
            vec![
                ColumnSpec::categorical("a", &["0", "1", "2"]),
                ColumnSpec::categorical("b", &["0", "1"]),
                ColumnSpec::categorical("c", &["0", "1", "2", "3"]),
            ],
        )
        .unwrap(),
    )
}

fn private() -> Dataset {
    let rows = (0..600u32).map(|i| Record::new(vec![Cell::Cat(i % 3), Cell::Cat((i % 3 == 0) as u32), Cell::Cat(i % 4)]));
    Dataset::new(schema(), rows.collect(), Provenance::Private).unwrap()
}

#[test]
fn jam_plan_ignores_public_record_order() {
    let s_priv = private();
    let public = uniform_public(schema(), 400, &mut SeedTree::new(2).stream("pub")).unwrap();
    let mut rows = public.rows().to_vec();
    rows.shuffle(&mut SeedTree::new(3).stream("shuffle"));
    let shuffled = Dataset::new(schema(), rows, Provenance::Public).unwrap();
    let marginals = build_marginal_workload(schema(), 2, None).unwrap();
    let run = |public: &Dataset| {
        let mut ledger = AccountantLedger::new(f64::INFINITY, 1e-6);
        jam_lite(
            &s_priv,
            public,
            &marginals,
            100,
            0.5,
            JamOptions::default(),
            &mut ledger,
            &SeedTree::new(9),
            &FitOptions::default(),
        )
        .unwrap()
        .0
    };
    let (a, b) = (run(&public), run(&shuffled));
    assert_eq!(a.entries.len(), 3);
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert_eq!(x.source, y.source);
        assert!((x.d_hat - y.d_hat).abs() <= 1e-9, "{} vs {}", x.d_hat, y.d_hat);
    }
}

#[test]
fn mwem_weights_stay_a_distribution() {
    let s_priv = private();
    let public = uniform_public(schema(), 200, &mut SeedTree::new(4).stream("pub")).unwrap();
    let w = build_marginal_workload(schema(), 2, None).unwrap();
    for rounds in [1, 5, 20] {
        let mut ledger = AccountantLedger::new(1.0, 1e-6);
        let out = mwem_refine(&public, &w, &s_priv, rounds, 1.0, &mut ledger, &SeedTree::new(rounds as u64)).unwrap();
        assert!(out.weights.iter().all(|&x| x >= 0.0 && x.is_finite()));
        assert!((out.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert_eq!(ledger.charges().len(), 2 * rounds);
        assert!(ledger.total_rho() <= 1.0 * (1.0 + 1e-12));
    }
}
