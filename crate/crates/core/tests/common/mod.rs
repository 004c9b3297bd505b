#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pnr_tomo::{
    build_probe_matrix, predicted_response, CoherentProbe, DetectorParams, OutcomeStats,
    PovmMatrix, ProbeMatrix, QuadraticProgram,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Standardised deviation of `hits` out of `trials` from probability `p`.
/// Degenerate `p` (0 or 1) must be matched exactly.
pub fn binomial_z(hits: u64, trials: u64, p: f64) -> f64 {
    let n = trials as f64;
    let se = (p * (1.0 - p) / n).sqrt();
    let diff = hits as f64 / n - p;
    if se == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / se
    }
}

/// Geometric ladder of `count` means between `min` and `max`.
pub fn ladder(count: usize, min: f64, max: f64) -> Vec<CoherentProbe> {
    (0..count)
        .map(|j| {
            let t = j as f64 / (count - 1) as f64;
            CoherentProbe::new(min * (max / min).powf(t))
        })
        .collect()
}

/// Outcome counts proportional to the exact truncated response, scaled to
/// `pulses` per probe.
pub fn noiseless_stats(
    povm: &PovmMatrix,
    probes: &[CoherentProbe],
    pulses: f64,
) -> (ProbeMatrix, OutcomeStats) {
    let pm = build_probe_matrix(probes, povm.truncation()).unwrap();
    let xi = predicted_response(povm, &pm).unwrap();
    let counts = (0..probes.len())
        .map(|j| {
            let mass: f64 = xi.column(j).sum();
            std::array::from_fn(|n| (xi[(n, j)] / mass * pulses).round() as u64)
        })
        .collect();
    let means = probes.iter().map(|p| p.mean_photons).collect();
    (pm, OutcomeStats::from_counts(means, counts).unwrap())
}

/// Monte Carlo estimate of the click pattern distribution for `m` photons,
/// simulating each photon's route and detection independently.
pub fn monte_carlo_patterns(p: &DetectorParams, m: usize, samples: u64, seed: u64) -> [u64; 16] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist = [0u64; 16];
    let cumulative = [
        p.split[0],
        p.split[0] + p.split[1],
        p.split[0] + p.split[1] + p.split[2],
    ];
    for _ in 0..samples {
        let mut mask = 0usize;
        for _ in 0..m {
            let u: f64 = rng.random();
            let g = cumulative.iter().position(|&c| u < c).unwrap_or(3);
            if rng.random::<f64>() < p.eta[g] {
                mask |= 1 << g;
            }
        }
        for g in 0..4 {
            if rng.random::<f64>() < p.p_dark[g] {
                mask |= 1 << g;
            }
        }
        hist[mask] += 1;
    }
    hist
}

/// Minimises the QP restricted to the face where only `support[m]` outcomes
/// of column `m` may be nonzero, treating those bounds as absent.
pub fn face_minimiser(qp: &QuadraticProgram, support: &[Vec<usize>]) -> Option<DMatrix<f64>> {
    let (k, c) = (qp.outcomes(), qp.columns());
    let vars: Vec<(usize, usize)> = (0..c)
        .flat_map(|m| support[m].iter().map(move |&n| (n, m)))
        .collect();
    let nv = vars.len();
    let h = qp.hessian();
    let lin = qp.linear_term();
    let mut kkt = DMatrix::zeros(nv + c, nv + c);
    let mut rhs = DVector::zeros(nv + c);
    for (i, &(ni, mi)) in vars.iter().enumerate() {
        for (l, &(nl, ml)) in vars.iter().enumerate() {
            kkt[(i, l)] = h[(ni * c + mi, nl * c + ml)];
        }
        kkt[(i, nv + mi)] = 1.0;
        kkt[(nv + mi, i)] = 1.0;
        rhs[i] = -lin[ni * c + mi];
    }
    for m in 0..c {
        rhs[nv + m] = 1.0;
    }
    let sol = kkt.lu().solve(&rhs)?;
    let mut x = DMatrix::zeros(k, c);
    for (i, &(n, m)) in vars.iter().enumerate() {
        x[(n, m)] = sol[i];
    }
    Some(x)
}

/// Global minimum over every combination of per-column supports.
pub fn enumeration_oracle(qp: &QuadraticProgram) -> (f64, DMatrix<f64>) {
    let (k, c) = (qp.outcomes(), qp.columns());
    let subsets: Vec<Vec<usize>> = (1u32..1 << k)
        .map(|bits| (0..k).filter(|n| bits & (1 << n) != 0).collect())
        .collect();
    let mut best = (f64::INFINITY, DMatrix::zeros(k, c));
    let mut index = vec![0usize; c];
    loop {
        let support: Vec<Vec<usize>> = index.iter().map(|&i| subsets[i].clone()).collect();
        if let Some(x) = face_minimiser(qp, &support) {
            if x.iter().all(|&v| v >= -1e-12) {
                let f = qp.objective(&x);
                if f < best.0 {
                    best = (f, x);
                }
            }
        }
        let mut pos = 0;
        loop {
            if pos == c {
                return best;
            }
            index[pos] += 1;
            if index[pos] < subsets.len() {
                break;
            }
            index[pos] = 0;
            pos += 1;
        }
    }
}
