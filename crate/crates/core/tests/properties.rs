use gsnell::lattice::{absolutely_continuous, decompose_atoms, equivalent, singular};
use gsnell::snell::{brute_force_value, snell_envelope};
use gsnell::{AdaptedProcess, MonotoneMeasure, TreeModel};
use proptest::prelude::*;

fn tree(max_depth: usize) -> impl Strategy<Value = TreeModel> {
    (1..=max_depth, 0.1f64..4.0).prop_map(|(n, t)| TreeModel::new(n, t).unwrap())
}

fn values(model: TreeModel) -> impl Strategy<Value = (TreeModel, AdaptedProcess)> {
    let n = model.steps();
    prop::collection::vec(-2.0f64..2.0, (n + 1) * (n + 2) / 2).prop_map(move |v| {
        let mut it = v.into_iter();
        (model, AdaptedProcess::from_fn(&model, |_, _| it.next().unwrap()))
    })
}

fn process(max_depth: usize) -> impl Strategy<Value = (TreeModel, AdaptedProcess)> {
    tree(max_depth).prop_flat_map(values)
}

/// Increments rows 1..=N, each node charged with probability one half.
fn sparse_measure(model: &TreeModel, coins: &[u8]) -> MonotoneMeasure {
    let mut it = coins.iter().cycle();
    let rows = (0..=model.steps())
        .map(|k| {
            (0..=k)
                .map(|_| {
                    let c = *it.next().unwrap();
                    if k > 0 && c % 2 == 1 {
                        f64::from(c) / 8.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    MonotoneMeasure::from_increments(rows, Default::default()).unwrap()
}

/// Mean of `x_N` over all `2^N` paths.
fn path_average(model: &TreeModel, terminal: &[f64]) -> f64 {
    let n = model.steps();
    let total: f64 = (0u32..1 << n).map(|path| terminal[path.count_ones() as usize]).sum();
    total / f64::from(1u32 << n)
}

fn is_supermartingale(model: &TreeModel, x: &AdaptedProcess, tol: f64) -> bool {
    (0..model.steps()).all(|k| (0..=k).all(|j| x.get(k, j) >= 0.5 * (x.get(k + 1, j) + x.get(k + 1, j + 1)) - tol))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tower_composition_matches_path_average((m, x) in process(10)) {
        let n = m.steps();
        let mut row = x.terminal().to_vec();
        for k in (0..n).rev() {
            let staged = x.map(|kk, j, v| if kk == k + 1 { row[j] } else { v });
            let direct = m.conditional_expectation(&staged, k).unwrap();
            row = m.expect_row(&row);
            prop_assert_eq!(&direct, &row);
        }
        prop_assert!((row[0] - path_average(&m, x.terminal())).abs() <= 1e-12);
    }

    #[test]
    fn representation_reproduces_both_children((m, x) in process(8)) {
        let sq = m.dt().sqrt();
        for k in 0..m.steps() {
            let next = x.row(k + 1);
            let e = m.expect_row(next);
            let z = m.martingale_rep_coefficient(next).unwrap();
            for j in 0..=k {
                prop_assert!((next[j] - (e[j] - z[j] * sq)).abs() <= 1e-12);
                prop_assert!((next[j + 1] - (e[j] + z[j] * sq)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn singularity_is_additive(m in tree(6), a in prop::collection::vec(0u8..16, 64), b in prop::collection::vec(0u8..16, 64), c in prop::collection::vec(0u8..16, 64)) {
        let (a, b, c) = (sparse_measure(&m, &a), sparse_measure(&m, &b), sparse_measure(&m, &c));
        if singular(&a, &b).unwrap() && singular(&a, &c).unwrap() {
            prop_assert!(singular(&a, &b.sum(&c).unwrap()).unwrap());
        }
    }

    #[test]
    fn equivalence_is_mutual_absolute_continuity(m in tree(6), a in prop::collection::vec(0u8..16, 64), b in prop::collection::vec(0u8..16, 64), scale in 0.1f64..3.0) {
        let (a, b) = (sparse_measure(&m, &a), sparse_measure(&m, &b));
        for (x, y) in [(&a, &b), (&a, &a.scaled(scale).unwrap())] {
            let both = absolutely_continuous(x, y).unwrap() && absolutely_continuous(y, x).unwrap();
            prop_assert_eq!(equivalent(x, y).unwrap(), both);
        }
        prop_assert!(equivalent(&a, &a.scaled(scale).unwrap()).unwrap());
    }

    #[test]
    fn atom_parts_recombine_exactly(m in tree(6), coins in prop::collection::vec(0u8..16, 64), step in 1usize..=6, mass in 0.1f64..2.0) {
        let step = step.min(m.steps());
        let d = sparse_measure(&m, &coins).with_atom(step, mass).unwrap();
        let split = decompose_atoms(&d);
        prop_assert_eq!(split.recombine(), d);
    }

    #[test]
    fn envelope_is_the_smallest_dominating_supermartingale((m, l) in process(8), bumps in prop::collection::vec(0.0f64..0.5, 45)) {
        let s = snell_envelope(&l, &m).unwrap();
        prop_assert!(is_supermartingale(&m, &s, 1e-12));
        prop_assert!(s.iter_nodes().all(|(k, j, v)| v >= l.get(k, j)));
        // Independent dominating supermartingale: backward max with slack.
        let n = m.steps();
        let mut it = bumps.iter().cycle();
        let mut v = l.clone();
        for j in 0..=n {
            v.set(n, j, l.get(n, j) + it.next().unwrap());
        }
        for k in (0..n).rev() {
            for j in 0..=k {
                let cont = 0.5 * (v.get(k + 1, j) + v.get(k + 1, j + 1));
                v.set(k, j, l.get(k, j).max(cont) + it.next().unwrap());
            }
        }
        prop_assert!(v.iter_nodes().all(|(k, j, x)| x >= s.get(k, j)));
    }

    #[test]
    fn envelope_is_idempotent_and_monotone((m, l) in process(8), lift in prop::collection::vec(0.0f64..1.0, 45)) {
        let s = snell_envelope(&l, &m).unwrap();
        prop_assert_eq!(snell_envelope(&s, &m).unwrap(), s.clone());
        let mut it = lift.iter().cycle();
        let higher = l.map(|_, _, x| x + it.next().unwrap());
        let sh = snell_envelope(&higher, &m).unwrap();
        prop_assert!(sh.iter_nodes().all(|(k, j, x)| x >= s.get(k, j)));
    }

    #[test]
    fn envelope_root_is_the_best_stopping_value((m, l) in process(4)) {
        let s = snell_envelope(&l, &m).unwrap();
        prop_assert!((brute_force_value(&l, &m, 4).unwrap() - s.root()).abs() <= 1e-12);
    }
}
