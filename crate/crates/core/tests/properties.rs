use corrflow::correlators::{
    autocorrelation_weights, correlation_series, correlation_trace, fluctuation_variance, fmt17,
    infinite_time_average, CorrelationKind, TimeGrid,
};
use corrflow::gapstats::{
    build_gap_distribution, coarse_grain, lemma2_exact_average, lemma2_property_check, xi_exact, xi_monte_carlo,
    GapDistribution, GapKind, GapOptions, ZeroGaps,
};
use corrflow::spectral::{diagonalize, thermal_ensemble, to_eigenbasis, EigenbasisOperator, ThermalEnsemble};
use corrflow::spinchain::{build_hamiltonian, build_pauli_string, Boundary, PauliString, SpinChainSpec};
use corrflow::weak_eth::{diagonal_deviations, factorization_error};
use proptest::prelude::*;

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-5.0f64..5.0, 0.0f64..1.0), 1..40).prop_filter_map("nonzero mass", |v| {
        let z: f64 = v.iter().map(|e| e.1).sum();
        (z > 1e-6).then(|| v.into_iter().map(|(g, p)| (g, p / z)).collect())
    })
}

/// Entries on a coarse lattice so exact gap ties occur.
fn tied_entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-20i32..20, 1u32..10), 1..30).prop_map(|v| {
        let z: u32 = v.iter().map(|e| e.1).sum();
        v.into_iter().map(|(g, p)| (g as f64 * 0.25, p as f64 / z as f64)).collect()
    })
}

fn brute_xi(entries: &[(f64, f64)], x: f64) -> f64 {
    entries
        .iter()
        .map(|&(a, _)| entries.iter().filter(|e| e.0 >= a && e.0 <= a + x).map(|e| e.1).sum::<f64>())
        .fold(0.0, f64::max)
}

fn dist(e: Vec<(f64, f64)>) -> GapDistribution {
    GapDistribution::from_entries(GapKind::PlainV, e).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn xi_matches_brute_force(e in prop_oneof![entries(), tied_entries()], x in 0.0f64..6.0) {
        let d = dist(e.clone());
        let fast = xi_exact(&d, x).unwrap();
        prop_assert!((fast - brute_xi(&e, x)).abs() < 1e-12);
        prop_assert!(fast <= d.total_weight + 1e-15);
    }

    #[test]
    fn xi_nondecreasing_and_subadditive(e in entries(), x in 1e-3f64..3.0, y in 1e-3f64..3.0) {
        let d = dist(e);
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        let xl = xi_exact(&d, lo).unwrap();
        let xh = xi_exact(&d, hi).unwrap();
        prop_assert!(xl <= xh);
        // ξ(x) ≤ ξ(ε)(1 + x/ε)
        prop_assert!(xh <= xl * (1.0 + hi / lo) + 1e-12);
    }

    #[test]
    fn monte_carlo_never_exceeds_exact(e in prop_oneof![entries(), tied_entries()], x in 0.0f64..3.0, seed in any::<u64>()) {
        let d = dist(e);
        let mc = xi_monte_carlo(&d, x, 64, seed).unwrap();
        prop_assert!(mc <= xi_exact(&d, x).unwrap());
    }

    #[test]
    fn histogram_conserves_mass(e in entries(), bins in 1usize..100) {
        let d = dist(e);
        let h = coarse_grain(&d, bins).unwrap();
        prop_assert_eq!(h.n_bins(), bins);
        prop_assert!((h.total() - d.total_weight).abs() < 1e-12);
        prop_assert!(h.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn uniform_average_bound(e in prop::collection::vec((-5.0f64..5.0, 0.01f64..1.0), 1..12), t in 0.05f64..5.0) {
        let z: f64 = e.iter().map(|x| x.1).sum();
        let d = dist(e.into_iter().map(|(g, p)| (g, p / z)).collect());
        let r = lemma2_property_check(&d, &[t]).unwrap();
        prop_assert_eq!(r.violations, 0);
        prop_assert!((r.points[0].average_refined - lemma2_exact_average(&d, t)).abs() < 1e-6);
    }

    #[test]
    fn floats_round_trip_through_csv_text(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}

struct Chain {
    label: String,
    ens: ThermalEnsemble,
    a: EigenbasisOperator,
    b: EigenbasisOperator,
}

impl std::fmt::Debug for Chain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label)
    }
}

fn chain(l: usize, c: [f64; 4], periodic: bool, beta: f64, pa: &str, pb: &str) -> Chain {
    let mut spec = SpinChainSpec::new(l, c[0], c[1], c[2], c[3]);
    if periodic {
        spec = spec.with_boundary(Boundary::Periodic);
    }
    let s = diagonalize(&build_hamiltonian(&spec).unwrap()).unwrap();
    let op = |p: &str| to_eigenbasis(&build_pauli_string(&p.parse::<PauliString>().unwrap(), l).unwrap(), &s).unwrap();
    Chain {
        label: format!("L={l} couplings={c:?} periodic={periodic} beta={beta} A={pa} B={pb}"),
        ens: thermal_ensemble(&s, beta).unwrap(),
        a: op(pa),
        b: op(pb),
    }
}

fn chains() -> impl Strategy<Value = Chain> {
    let pauli = prop::sample::select(vec!["X0", "Z1", "Y2", "X1 X2", "Z0 Y2", "X2"]);
    (3usize..=5, [-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5], any::<bool>(), 0.0f64..3.0, pauli.clone(), pauli)
        .prop_map(|(l, c, per, beta, pa, pb)| chain(l, c, per, beta, pa, pb))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weights_are_nonnegative_and_normalized(ch in chains()) {
        for kind in [CorrelationKind::Plain, CorrelationKind::Symmetric, CorrelationKind::Kubo] {
            let w = autocorrelation_weights(&ch.ens, &ch.a, kind).unwrap();
            let n = w.nrows();
            let mut sum = 0.0;
            for j in 0..n {
                for k in 0..n {
                    prop_assert!(w[(j, k)] >= 0.0);
                    sum += w[(j, k)];
                }
            }
            // Pauli strings square to one, so every kind has C(0) = 1.
            prop_assert!((sum - 1.0).abs() < 1e-10, "{:?}: {}", kind, sum);
        }
    }

    #[test]
    fn series_bounded_and_time_reversal(ch in chains(), t in 0.0f64..20.0) {
        let grid = TimeGrid::new(0.37, 15.0).unwrap();
        let s = correlation_series(&ch.ens, &ch.a, CorrelationKind::Plain, &grid).unwrap();
        s.check_autocorrelation().unwrap();
        let fwd = correlation_trace(&ch.ens, &ch.a, &ch.a, t).unwrap();
        let back = correlation_trace(&ch.ens, &ch.a, &ch.a, -t).unwrap();
        prop_assert!((fwd - back.conj()).norm() < 1e-10);
    }

    #[test]
    fn factorization_identity_and_cauchy_schwarz(ch in chains(), delta in 0.01f64..1.0) {
        // Both checks are enforced inside; an Err is a violation.
        let r = factorization_error(&ch.ens, &ch.a, &ch.b, Some(delta)).unwrap();
        let direct = infinite_time_average(&ch.ens, &ch.a, &ch.b).unwrap()
            - ch.ens.expectation(&ch.a) * ch.ens.expectation(&ch.b);
        prop_assert!((r.error - direct).abs() < 1e-10);
        prop_assert!((r.in_set + r.out_of_set - r.error).abs() < 1e-12);
        let st = diagonal_deviations(&ch.ens, &ch.a, &[0.05, 0.1, 0.5, 1.0]).unwrap();
        prop_assert!(st.tail_mass.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn fluctuations_below_bound(ch in chains()) {
        let r = fluctuation_variance(&ch.ens, &ch.a, &ch.b).unwrap();
        prop_assert!(r.sigma_c_squared_exact >= 0.0);
        prop_assert!(r.sigma_c_squared_exact <= r.theorem2_bound * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn gap_distributions_normalized(ch in chains(), drop in any::<bool>()) {
        let zg = if drop { ZeroGaps::DropDiagonal } else { ZeroGaps::Keep };
        for kind in GapKind::ALL {
            match build_gap_distribution(&ch.ens, &ch.a, kind, GapOptions::default().with_zero_gaps(zg)) {
                Ok(d) => {
                    prop_assert!((d.total_weight - 1.0).abs() < 1e-10);
                    prop_assert!(d.gaps.windows(2).all(|w| w[0] <= w[1]));
                    prop_assert!(xi_exact(&d, 0.0).unwrap() <= 1.0 + 1e-12);
                }
                // Only possible when A commutes with H and the diagonal is dropped.
                Err(_) => prop_assert!(drop),
            }
        }
    }
}
