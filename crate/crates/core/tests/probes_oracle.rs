//! Poisson design matrix and truncation against exact-arithmetic and
//! brute-force oracles.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use pnr_tomo::probes::{poisson_coeff, ProbeLadder};
use pnr_tomo::{build_probe_matrix, choose_truncation, CoherentProbe};
use proptest::prelude::*;

/// `e^{-p/q} (p/q)^m / m!` with the rational part evaluated exactly.
fn exact_poisson(p: u64, q: u64, m: u32) -> f64 {
    let num = BigUint::from(p).pow(m);
    let mut den = BigUint::from(q).pow(m);
    for k in 2..=m {
        den *= k;
    }
    let shift = (den.bits() as i64 - num.bits() as i64 + 64).max(0) as u64;
    let quotient = ((num << shift) / &den).to_f64().unwrap();
    let mut value = quotient;
    let mut remaining = shift;
    while remaining > 0 {
        let step = remaining.min(1000);
        value *= 2f64.powi(-(step as i32));
        remaining -= step;
    }
    value * (-(p as f64) / q as f64).exp()
}

/// `P(X >= m)` by summing the pmf below `m` with direct factorials.
fn brute_force_tail(mean: f64, m: usize) -> f64 {
    let mut pmf = (-mean).exp();
    let mut below = 0.0;
    for k in 0..m {
        below += pmf;
        pmf *= mean / (k + 1) as f64;
    }
    1.0 - below
}

#[test]
fn poisson_matches_exact_rational_oracle() {
    for (p, q) in [
        (1u64, 2u64),
        (468, 10),
        (10, 1),
        (37, 10),
        (50, 1),
        (1, 1000),
    ] {
        let mean = p as f64 / q as f64;
        for m in 0..=100u32 {
            let oracle = exact_poisson(p, q, m);
            if oracle < 1e-290 {
                continue;
            }
            let got = poisson_coeff(mean, m as usize).unwrap();
            let rel = (got - oracle).abs() / oracle;
            assert!(
                rel < 1e-12,
                "mean={mean} m={m}: {got} vs {oracle} (rel {rel:e})"
            );
        }
    }
}

#[test]
fn brightest_probe_truncation_by_tail_summation() {
    let probes = ProbeLadder::default().probes();
    let m = choose_truncation(&probes, 1e-6).unwrap();
    assert!(brute_force_tail(46.8, m) < 1e-6);
    assert!(brute_force_tail(46.8, m - 1) >= 1e-6);
    assert_eq!(m, 84);
}

/// Photon numbers up to which at least four probes exceed 1e-3.
fn four_fold_coverage_limit(ladder: &str) -> usize {
    let probes = ladder.parse::<ProbeLadder>().unwrap().probes();
    let pm = build_probe_matrix(&probes, 70).unwrap();
    assert_eq!(pm.coeffs().shape(), (71, 18));
    (0..=70)
        .take_while(|&m| pm.coverage(m, 1e-3) >= 4)
        .last()
        .unwrap()
}

#[test]
fn ladder_coverage_of_photon_numbers() {
    // Evenly spaced amplitudes keep four significant probes through m = 50.
    assert!(four_fold_coverage_limit("amplitude:18,0.5,46.8") >= 50);
    // A constant-ratio ladder thins out at high m: fewer than four probes
    // exceed 1e-3 for 36 <= m <= 50, and as few as two.
    assert_eq!(four_fold_coverage_limit("geometric:18,0.5,46.8"), 35);
    let pm = build_probe_matrix(&ProbeLadder::default().probes(), 70).unwrap();
    assert!((36..=50).all(|m| (2..4).contains(&pm.coverage(m, 1e-3))));
    assert_eq!((36..=50).map(|m| pm.coverage(m, 1e-3)).min(), Some(2));
}

#[test]
fn probe_matrix_columns_are_truncated_distributions() {
    let probes = ProbeLadder::default().probes();
    let eps = 1e-6;
    let m = choose_truncation(&probes, eps).unwrap();
    let pm = build_probe_matrix(&probes, m).unwrap();
    for j in 0..pm.probes() {
        let mass = pm.column_mass(j);
        assert!(
            mass <= 1.0 + 1e-12 && mass >= 1.0 - eps,
            "probe {j}: {mass}"
        );
        assert!(pm
            .coeffs()
            .column(j)
            .iter()
            .all(|&a| (0.0..=1.0).contains(&a)));
    }
}

proptest! {
    #[test]
    fn truncation_monotone_in_epsilon(mean in 0.0f64..80.0, e1 in 1e-12f64..0.9, e2 in 1e-12f64..0.9) {
        let (small, large) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let probes = [CoherentProbe::new(mean)];
        let m_small = choose_truncation(&probes, small).unwrap();
        let m_large = choose_truncation(&probes, large).unwrap();
        prop_assert!(m_small >= m_large);
    }

    #[test]
    fn truncation_is_the_smallest_valid(mean in 0.1f64..60.0, eps in 1e-9f64..0.5) {
        let m = choose_truncation(&[CoherentProbe::new(mean)], eps).unwrap();
        prop_assert!(brute_force_tail(mean, m) < eps + 1e-13);
        if m > 0 {
            prop_assert!(brute_force_tail(mean, m - 1) >= eps - 1e-13);
        }
    }
}
