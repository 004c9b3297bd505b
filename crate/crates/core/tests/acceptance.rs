//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary (`harness = false`).

mod common;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use pnr_tomo::{
    build_probe_matrix, predicted_response, q_function, q_grid, reconstruct, run_experiment, solve,
    CoherentProbe, DetectorParams, FidelityReport, GatingPolicy, Mesh, QuadraticProgram,
    ReconstructionConfig, Regularizer, SimulationConfig, OUTCOMES,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn completeness() -> Outcome {
    let povm = DetectorParams::calibrated().theoretical_povm(60);
    let worst = (0..=60)
        .map(|m| (povm.column(m).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: worst < 1e-12,
        detail: format!("max |sum_n Xi[n][m] - 1| over m<=60 = {worst:.1e} (< 1e-12)"),
    }
}

fn monte_carlo_agreement() -> Outcome {
    let p = DetectorParams::calibrated();
    let povm = p.theoretical_povm(20);
    let samples = 1_000_000;
    let mut worst: f64 = 0.0;
    for (idx, m) in [0usize, 1, 2, 5, 10, 20].into_iter().enumerate() {
        let hist = common::monte_carlo_patterns(&p, m, samples, 1000 + idx as u64);
        let mut counts = [0u64; OUTCOMES];
        for (mask, c) in hist.iter().enumerate() {
            counts[(mask as u32).count_ones() as usize] += c;
        }
        for n in 0..OUTCOMES {
            worst = worst.max(common::binomial_z(counts[n], samples, povm.get(n, m)).abs());
        }
    }
    Outcome {
        pass: worst < 4.0,
        detail: format!("max |z| over m in {{0,1,2,5,10,20}} = {worst:.2} (< 4)"),
    }
}

fn end_to_end() -> Outcome {
    let params = DetectorParams::calibrated();
    let probes = common::ladder(18, 0.5, 46.8);
    let sim = SimulationConfig {
        gating: GatingPolicy::Smart,
        pulses_per_probe: 100_000,
        ..SimulationConfig::default()
    };
    let stats = run_experiment(&params, &probes, &sim).expect("simulation");
    let result = match reconstruct(&stats, &ReconstructionConfig::default()) {
        Ok(r) => r,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: format!("reconstruction failed: {e}"),
            }
        }
    };
    let m = result.povm.truncation();
    let pm = build_probe_matrix(&probes, m).unwrap();
    let predicted = predicted_response(&result.povm, &pm).unwrap();
    let report =
        FidelityReport::new(&stats.mean_photons, &stats.frequencies(), &predicted).unwrap();
    let err = result.povm.max_abs_diff(&params.theoretical_povm(m), 50);
    Outcome {
        pass: report.min_fidelity >= 0.9995 && err <= 0.05,
        detail: format!(
            "min F = {:.6} (>= 0.9995), max |dXi| over m<=50 = {err:.4} (<= 0.05), M = {m}",
            report.min_fidelity
        ),
    }
}

fn qp_correctness() -> Outcome {
    // Tiny instance against exhaustive active-set enumeration.
    let probes: Vec<_> = [0.3, 0.9, 1.7, 3.0]
        .into_iter()
        .map(CoherentProbe::new)
        .collect();
    let pm = build_probe_matrix(&probes, 2).unwrap();
    let truth = DetectorParams::calibrated().theoretical_povm(2);
    let xi = truth.values() * pm.coeffs();
    let targets = DMatrix::from_fn(OUTCOMES, 4, |n, j| {
        (xi[(n, j)] + 0.02 * ((n * 5 + j) as f64).cos()).max(0.0)
    });
    let weight = 0.05;
    let qp = QuadraticProgram::assemble(
        pm.coeffs().clone(),
        targets,
        DMatrix::from_element(OUTCOMES, 4, 1.0),
        weight,
        Regularizer::FirstDifference,
    )
    .unwrap();
    let cfg = ReconstructionConfig {
        smoothing_weight: weight,
        ..ReconstructionConfig::default()
    };
    let (oracle, _) = common::enumeration_oracle(&qp);
    let gap = solve(&qp, &cfg)
        .map(|r| (r.objective_value - oracle).abs())
        .unwrap_or(f64::INFINITY);

    // Exactly consistent data, no smoothing, more probes than unknowns per outcome.
    let truth = DetectorParams::calibrated().theoretical_povm(8);
    let probes = common::ladder(12, 0.5, 12.0);
    let pm = build_probe_matrix(&probes, 8).unwrap();
    let qp = QuadraticProgram::assemble(
        pm.coeffs().clone(),
        truth.values() * pm.coeffs(),
        DMatrix::from_element(OUTCOMES, 12, 1.0),
        0.0,
        Regularizer::FirstDifference,
    )
    .unwrap();
    let cfg = ReconstructionConfig {
        smoothing_weight: 0.0,
        ..ReconstructionConfig::default()
    };
    let recovery = solve(&qp, &cfg)
        .map(|r| r.povm.max_abs_diff(&truth, 8))
        .unwrap_or(f64::INFINITY);
    Outcome {
        pass: gap < 1e-6 && recovery < 1e-6,
        detail: format!(
            "|f - f_oracle| = {gap:.1e} (< 1e-6), noiseless recovery {recovery:.1e} (< 1e-6)"
        ),
    }
}

fn smart_gating() -> Outcome {
    let params = DetectorParams::calibrated();
    let probes = [CoherentProbe::new(10.0)];
    let sim = |gating, seed| SimulationConfig {
        gating,
        dead_time: 10,
        pulses_per_probe: 1_000_000,
        seed,
        ..SimulationConfig::default()
    };
    let run = |gating, seed| {
        run_experiment(&params, &probes, &sim(gating, seed))
            .unwrap()
            .frequency_column(0)
    };
    let smart = run(GatingPolicy::Smart, 21);
    let ideal = run(GatingPolicy::Ideal, 22);
    let naive = run(GatingPolicy::Naive, 23);
    let tv = 0.5
        * smart
            .iter()
            .zip(&ideal)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    let se = ((naive[0] * (1.0 - naive[0]) + ideal[0] * (1.0 - ideal[0])) / 1e6).sqrt();
    let sigmas = (naive[0] - ideal[0]) / se;
    Outcome {
        pass: tv < 5e-3 && sigmas > 4.0,
        detail: format!(
            "TV(smart, ideal) = {tv:.1e} (< 5e-3), naive P(n=0) shift = {sigmas:.1} sigma (> 4)"
        ),
    }
}

fn q_consistency() -> Outcome {
    let povm = DetectorParams::calibrated().theoretical_povm(84);
    let mesh = Mesh::default();
    let grid = q_grid(&povm, &mesh).unwrap();
    let mut worst_norm: f64 = 0.0;
    for i in 0..grid.axis.len() {
        for k in 0..grid.axis.len() {
            let r2 = grid.axis[i].powi(2) + grid.axis[k].powi(2);
            let tail = q_function(&povm, r2).unwrap().truncated_tail;
            let total: f64 = (0..OUTCOMES).map(|n| grid.value(n, i, k)).sum();
            worst_norm = worst_norm.max((PI * total - 1.0).abs() - tail);
        }
    }
    let probes = common::ladder(18, 0.5, 46.8);
    let pm = build_probe_matrix(&probes, 84).unwrap();
    let xi = predicted_response(&povm, &pm).unwrap();
    let mut worst_probe: f64 = 0.0;
    for (j, p) in probes.iter().enumerate() {
        let q = q_function(&povm, p.mean_photons).unwrap();
        for n in 0..OUTCOMES {
            worst_probe = worst_probe.max((PI * q.values[n] - xi[(n, j)]).abs() / PI);
        }
    }
    Outcome {
        pass: worst_norm <= 1e-12 && worst_probe <= 1e-12,
        detail: format!(
            "max(|pi sum Q - 1| - tail) = {worst_norm:.1e}, max |Q - xi/pi| at probes = {worst_probe:.1e} (<= 1e-12)"
        ),
    }
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("pnr-tomo-acceptance-{}", std::process::id()));
    let run = |dir: &Path| {
        Command::new(env!("CARGO_BIN_EXE_pnr-tomo"))
            .args(["--seed", "7", "--out"])
            .arg(dir)
            .arg("pipeline")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    };
    let names = [
        "povm_theory.csv",
        "stats.csv",
        "stats.json",
        "povm_reconstructed.csv",
        "reconstruction.json",
        "fidelity.json",
        "qgrid.csv",
        "q_overlay.csv",
    ];
    let snapshot = |dir: &Path| names.map(|n| fs::read(dir.join(n)).unwrap_or_default());
    let ok_first = run(&dir);
    let first = snapshot(&dir);
    let ok_second = run(&dir);
    let second = snapshot(&dir);
    let _ = fs::remove_dir_all(&dir);
    let differing: Vec<&str> = names
        .iter()
        .zip(first.iter().zip(&second))
        .filter(|(_, (a, b))| a.is_empty() || a != b)
        .map(|(n, _)| *n)
        .collect();
    Outcome {
        pass: ok_first && ok_second && differing.is_empty(),
        detail: if differing.is_empty() {
            format!(
                "{} artifacts byte-identical across two pipeline runs",
                names.len()
            )
        } else {
            format!("differing or missing: {differing:?}")
        },
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 7] = [
        (
            "POVM completeness",
            completeness,
            Some(Duration::from_secs(5)),
        ),
        (
            "Monte Carlo agreement",
            monte_carlo_agreement,
            Some(Duration::from_secs(60)),
        ),
        (
            "end-to-end reconstruction",
            end_to_end,
            Some(Duration::from_secs(300)),
        ),
        (
            "QP correctness",
            qp_correctness,
            Some(Duration::from_secs(30)),
        ),
        ("smart gating", smart_gating, Some(Duration::from_secs(120))),
        ("Q-function consistency", q_consistency, None),
        ("determinism", determinism, None),
    ];
    let mut failures = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed < l);
        let pass = outcome.pass && in_time;
        if !pass {
            failures += 1;
        }
        let budget = limit
            .map(|l| format!(" of {}s", l.as_secs()))
            .unwrap_or_default();
        println!(
            "criterion {}: {} {name}: {} [{:.2}s{budget}]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
