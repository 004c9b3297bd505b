//! Small numeric helpers shared across modules.

use std::sync::OnceLock;

/// Largest `m` for which `m!` is finite in f64.
pub(crate) const MAX_FACTORIAL: usize = 170;

fn factorial_table() -> &'static [f64; MAX_FACTORIAL + 1] {
    static TABLE: OnceLock<[f64; MAX_FACTORIAL + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [1.0; MAX_FACTORIAL + 1];
        for k in 1..=MAX_FACTORIAL {
            t[k] = t[k - 1] * k as f64;
        }
        t
    })
}

/// `m!` as f64, relative error below `m * EPSILON`. Panics past 170.
pub(crate) fn factorial(m: usize) -> f64 {
    factorial_table()[m]
}

/// `ln(m!)`.
pub(crate) fn ln_factorial(m: usize) -> f64 {
    if m <= MAX_FACTORIAL {
        return factorial(m).ln();
    }
    // Stirling series; the truncation error at m > 170 is far below 1 ulp.
    let x = m as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `[1, base, base^2, ..., base^len-1]` by repeated multiplication.
pub(crate) fn power_table(base: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut p = 1.0;
    for _ in 0..len {
        out.push(p);
        p *= base;
    }
    out
}

/// Euclidean projection of `v` onto the probability simplex, in place.
pub(crate) fn project_simplex(v: &mut [f64]) {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}
