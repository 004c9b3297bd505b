//! Coherent probe ensemble and the Poisson design matrix `a[m][j]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::ln_factorial;

/// Default upper-tail mass allowed beyond the truncation.
pub const DEFAULT_TAIL_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentProbe {
    /// `|alpha|^2`, mean photons per pulse.
    pub mean_photons: f64,
    /// Gated pulses acquired with this probe (0 when not attached to data).
    #[serde(default)]
    pub pulses: u64,
}

impl CoherentProbe {
    pub fn new(mean_photons: f64) -> Self {
        Self {
            mean_photons,
            pulses: 0,
        }
    }
}

/// Poisson probability of exactly `m` photons at mean `mean_photons`.
pub fn poisson_coeff(mean_photons: f64, m: usize) -> Result<f64> {
    if !(mean_photons >= 0.0) || !mean_photons.is_finite() {
        return Err(Error::param(format!(
            "mean photon number {mean_photons} must be >= 0"
        )));
    }
    Ok(poisson_pmf(mean_photons, m))
}

pub(crate) fn poisson_pmf(mean: f64, m: usize) -> f64 {
    if mean == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    (m as f64 * mean.ln() - mean - ln_factorial(m)).exp()
}

/// Upper tail `P(X >= m)` for `m = 0..len`, summed from the far tail down.
fn upper_tails(mean: f64, len: usize) -> Vec<f64> {
    let far = (mean + 40.0 * mean.sqrt() + 50.0).ceil() as usize;
    let top = far.max(len);
    let mut tails = vec![0.0; len];
    let mut acc = 0.0;
    for m in (0..=top).rev() {
        acc += poisson_pmf(mean, m);
        if m < len {
            tails[m] = acc;
        }
    }
    tails
}

/// Probability mass of photon numbers above `truncation`.
pub fn tail_mass(mean_photons: f64, truncation: usize) -> f64 {
    upper_tails(mean_photons, truncation + 2)[truncation + 1]
}

/// Smallest `M` with `P(X >= M) < tail_epsilon` for the brightest probe.
pub fn choose_truncation(probes: &[CoherentProbe], tail_epsilon: f64) -> Result<usize> {
    if !(tail_epsilon > 0.0 && tail_epsilon < 1.0) {
        return Err(Error::param(format!(
            "tail epsilon {tail_epsilon} not in (0, 1)"
        )));
    }
    let brightest = probes
        .iter()
        .map(|p| p.mean_photons)
        .fold(None, |acc: Option<f64>, x| {
            Some(acc.map_or(x, |a| a.max(x)))
        })
        .ok_or_else(|| Error::param("empty probe list"))?;
    if !(brightest >= 0.0) {
        return Err(Error::param(format!(
            "mean photon number {brightest} must be >= 0"
        )));
    }
    let len = (brightest + 40.0 * brightest.sqrt() + 50.0).ceil() as usize;
    let tails = upper_tails(brightest, len);
    tails
        .iter()
        .position(|&t| t < tail_epsilon)
        .ok_or_else(|| Error::param(format!("tail epsilon {tail_epsilon} unreachable")))
}

/// Poisson coefficients `a[m][j]` for `m = 0..=M` and each probe `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeMatrix {
    coeffs: DMatrix<f64>,
    means: Vec<f64>,
}

impl ProbeMatrix {
    pub fn truncation(&self) -> usize {
        self.coeffs.nrows() - 1
    }

    pub fn probes(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Retained Poisson mass of probe `j`.
    pub fn column_mass(&self, j: usize) -> f64 {
        self.coeffs.column(j).sum()
    }

    /// Number of probes whose coefficient at photon number `m` exceeds `floor`.
    pub fn coverage(&self, m: usize, floor: f64) -> usize {
        self.coeffs.row(m).iter().filter(|&&a| a > floor).count()
    }
}

pub fn build_probe_matrix(probes: &[CoherentProbe], truncation: usize) -> Result<ProbeMatrix> {
    if probes.is_empty() {
        return Err(Error::param("empty probe list"));
    }
    let mut coeffs = DMatrix::zeros(truncation + 1, probes.len());
    for (j, probe) in probes.iter().enumerate() {
        for m in 0..=truncation {
            coeffs[(m, j)] = poisson_coeff(probe.mean_photons, m)?;
        }
    }
    Ok(ProbeMatrix {
        coeffs,
        means: probes.iter().map(|p| p.mean_photons).collect(),
    })
}

/// How the list of probe intensities is generated.
///
/// Text form: `geometric:J,min,max`, `amplitude:J,min,max` or
/// `list:x1,x2,...`. Geometric ladders space `|alpha|^2` by a constant
/// ratio; amplitude ladders space `|alpha|` evenly.
#[derive(Clone, Debug, PartialEq)]
pub enum ProbeLadder {
    Geometric { count: usize, min: f64, max: f64 },
    Amplitude { count: usize, min: f64, max: f64 },
    List(Vec<f64>),
}

impl Default for ProbeLadder {
    fn default() -> Self {
        ProbeLadder::Geometric {
            count: 18,
            min: 0.5,
            max: 46.8,
        }
    }
}

impl ProbeLadder {
    pub fn means(&self) -> Vec<f64> {
        match self {
            ProbeLadder::Geometric { count, min, max } => {
                if *count == 1 {
                    return vec![*min];
                }
                let ratio = (max / min).ln() / (*count - 1) as f64;
                (0..*count)
                    .map(|j| {
                        if j + 1 == *count {
                            *max
                        } else {
                            min * (ratio * j as f64).exp()
                        }
                    })
                    .collect()
            }
            ProbeLadder::Amplitude { count, min, max } => {
                if *count == 1 {
                    return vec![*min];
                }
                let (lo, hi) = (min.sqrt(), max.sqrt());
                (0..*count)
                    .map(|j| {
                        if j + 1 == *count {
                            *max
                        } else {
                            let a = lo + (hi - lo) * j as f64 / (*count - 1) as f64;
                            a * a
                        }
                    })
                    .collect()
            }
            ProbeLadder::List(v) => v.clone(),
        }
    }

    pub fn probes(&self) -> Vec<CoherentProbe> {
        self.means().into_iter().map(CoherentProbe::new).collect()
    }
}

impl FromStr for ProbeLadder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("probe ladder {s:?}: {why}"));
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad("expected KIND:ARGS"))?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(&e.to_string()))?;
        if nums.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(bad("means must be finite and >= 0"));
        }
        match kind.trim() {
            kind @ ("geometric" | "amplitude") => {
                let [count, min, max] = nums[..] else {
                    return Err(bad("expected J,min,max"));
                };
                if count < 1.0 || count.fract() != 0.0 {
                    return Err(bad("J must be a positive integer"));
                }
                if !(min > 0.0 && max >= min) {
                    return Err(bad("need 0 < min <= max"));
                }
                let count = count as usize;
                Ok(if kind == "geometric" {
                    ProbeLadder::Geometric { count, min, max }
                } else {
                    ProbeLadder::Amplitude { count, min, max }
                })
            }
            "list" => {
                if nums.is_empty() {
                    return Err(bad("empty list"));
                }
                Ok(ProbeLadder::List(nums))
            }
            other => Err(bad(&format!("unknown ladder kind {other:?}"))),
        }
    }
}

impl fmt::Display for ProbeLadder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeLadder::Geometric { count, min, max } => {
                write!(f, "geometric:{count},{min},{max}")
            }
            ProbeLadder::Amplitude { count, min, max } => {
                write!(f, "amplitude:{count},{min},{max}")
            }
            ProbeLadder::List(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "list:{}", parts.join(","))
            }
        }
    }
}

impl Serialize for ProbeLadder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ProbeLadder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
