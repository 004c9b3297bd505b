//! Monte Carlo pulse-train simulator with SPAD dead time and gating policy.
//!
//! Time advances in laser periods. A branch that clicks is dead for the
//! following `dead_time` periods. Under [`GatingPolicy::Smart`] a pulse is
//! only gated when all four branches are ready, so every recorded outcome
//! comes from a fully armed detector.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorParams, BRANCHES, OUTCOMES};
use crate::error::{Error, Result};
use crate::probes::CoherentProbe;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatingPolicy {
    /// Gate only when every SPAD is out of dead time.
    #[default]
    Smart,
    /// Gate every pulse; dead SPADs cannot click.
    Naive,
    /// No dead time at all.
    Ideal,
}

impl FromStr for GatingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smart" => Ok(GatingPolicy::Smart),
            "naive" => Ok(GatingPolicy::Naive),
            "ideal" => Ok(GatingPolicy::Ideal),
            _ => Err(Error::Config(format!("unknown gating policy {s:?}"))),
        }
    }
}

impl fmt::Display for GatingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GatingPolicy::Smart => "smart",
            GatingPolicy::Naive => "naive",
            GatingPolicy::Ideal => "ideal",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Laser repetition rate in Hz.
    pub rep_rate: f64,
    /// Dead interval after a click, in laser periods.
    pub dead_time: u32,
    pub gating: GatingPolicy,
    pub seed: u64,
    /// Gated pulses to record per probe.
    pub pulses_per_probe: u64,
    /// Independent RNG streams per probe. Output depends on this value, not
    /// on the number of worker threads.
    pub shards: u32,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            rep_rate: 9.0e4,
            dead_time: 10,
            gating: GatingPolicy::Smart,
            seed: 1,
            pulses_per_probe: 100_000,
            shards: 1,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate > 0.0) || !self.rep_rate.is_finite() {
            return Err(Error::param(format!(
                "rep_rate {} must be > 0",
                self.rep_rate
            )));
        }
        if self.pulses_per_probe == 0 {
            return Err(Error::param("pulses_per_probe must be >= 1"));
        }
        if self.shards == 0 {
            return Err(Error::param("shards must be >= 1"));
        }
        Ok(())
    }

    /// Length of one laser period in seconds.
    pub fn period(&self) -> f64 {
        1.0 / self.rep_rate
    }
}

/// Outcome counts per probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStats {
    pub mean_photons: Vec<f64>,
    /// `counts[j][n]`: number of gates on probe `j` reporting `n` clicks.
    pub counts: Vec<[u64; OUTCOMES]>,
    /// Laser pulses that elapsed while acquiring each probe.
    pub offered_pulses: Vec<u64>,
}

impl OutcomeStats {
    /// Builds stats from counts; offered pulses default to the gated count.
    pub fn from_counts(mean_photons: Vec<f64>, counts: Vec<[u64; OUTCOMES]>) -> Result<Self> {
        let offered = counts.iter().map(|c| c.iter().sum()).collect();
        let stats = Self {
            mean_photons,
            counts,
            offered_pulses: offered,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.mean_photons.len();
        if j == 0 {
            return Err(Error::Schema("no probes in outcome statistics".into()));
        }
        if self.counts.len() != j || self.offered_pulses.len() != j {
            return Err(Error::Schema(
                "probe, count and pulse lists differ in length".into(),
            ));
        }
        for (idx, ((mean, c), offered)) in self
            .mean_photons
            .iter()
            .zip(&self.counts)
            .zip(&self.offered_pulses)
            .enumerate()
        {
            if !(*mean >= 0.0) || !mean.is_finite() {
                return Err(Error::Schema(format!(
                    "probe {idx}: bad mean photon number {mean}"
                )));
            }
            let gated: u64 = c.iter().sum();
            if gated == 0 {
                return Err(Error::Schema(format!("probe {idx}: no gated pulses")));
            }
            if *offered < gated {
                return Err(Error::Schema(format!(
                    "probe {idx}: {offered} offered pulses < {gated} gated"
                )));
            }
        }
        Ok(())
    }

    pub fn probes(&self) -> usize {
        self.mean_photons.len()
    }

    pub fn gated_pulses(&self, j: usize) -> u64 {
        self.counts[j].iter().sum()
    }

    pub fn probe_list(&self) -> Vec<CoherentProbe> {
        (0..self.probes())
            .map(|j| CoherentProbe {
                mean_photons: self.mean_photons[j],
                pulses: self.gated_pulses(j),
            })
            .collect()
    }

    /// `xi[n][j] = counts[j][n] / gated[j]`, a `5 x J` matrix.
    pub fn frequencies(&self) -> DMatrix<f64> {
        DMatrix::from_fn(OUTCOMES, self.probes(), |n, j| {
            self.counts[j][n] as f64 / self.gated_pulses(j) as f64
        })
    }

    pub fn frequency_column(&self, j: usize) -> [f64; OUTCOMES] {
        let g = self.gated_pulses(j) as f64;
        std::array::from_fn(|n| self.counts[j][n] as f64 / g)
    }

    /// Fraction of laser pulses that were gated, per probe.
    pub fn throughput(&self) -> Vec<f64> {
        (0..self.probes())
            .map(|j| self.gated_pulses(j) as f64 / self.offered_pulses[j] as f64)
            .collect()
    }
}

/// Accepted-gate fraction over the whole run.
pub fn throughput_report(stats: &OutcomeStats) -> f64 {
    let gated: u64 = (0..stats.probes()).map(|j| stats.gated_pulses(j)).sum();
    let offered: u64 = stats.offered_pulses.iter().sum();
    gated as f64 / offered as f64
}

fn sample_photons<R: Rng + ?Sized>(photons: &Option<Poisson<f64>>, rng: &mut R) -> u64 {
    match photons {
        Some(d) => d.sample(rng) as u64,
        None => 0,
    }
}

/// Fires one gate with the given armed branches; returns the clicked mask.
fn fire<R: Rng + ?Sized>(
    params: &DetectorParams,
    photons: u64,
    armed: [bool; BRANCHES],
    rng: &mut R,
) -> [bool; BRANCHES] {
    let mut clicked = [false; BRANCHES];
    for _ in 0..photons {
        let u: f64 = rng.random();
        let mut branch = BRANCHES - 1;
        let mut acc = 0.0;
        for g in 0..BRANCHES {
            acc += params.split[g];
            if u < acc {
                branch = g;
                break;
            }
        }
        if rng.random::<f64>() < params.eta[branch] {
            clicked[branch] = true;
        }
    }
    for g in 0..BRANCHES {
        if rng.random::<f64>() < params.p_dark[g] {
            clicked[g] = true;
        }
        clicked[g] &= armed[g];
    }
    clicked
}

/// One pulse on a fully armed detector: number of clicking branches.
pub fn simulate_pulse<R: Rng + ?Sized>(
    params: &DetectorParams,
    mean_photons: f64,
    rng: &mut R,
) -> usize {
    let dist = poisson(mean_photons);
    let m = sample_photons(&dist, rng);
    fire(params, m, [true; BRANCHES], rng)
        .iter()
        .filter(|&&c| c)
        .count()
}

fn poisson(mean: f64) -> Option<Poisson<f64>> {
    if mean > 0.0 {
        Some(Poisson::new(mean).expect("positive finite mean"))
    } else {
        None
    }
}

#[derive(Default)]
struct ShardTally {
    counts: [u64; OUTCOMES],
    offered: u64,
}

fn run_shard(
    params: &DetectorParams,
    mean: f64,
    sim: &SimulationConfig,
    gates: u64,
    rng: &mut ChaCha8Rng,
) -> ShardTally {
    let photons = poisson(mean);
    let dead_time = match sim.gating {
        GatingPolicy::Ideal => 0,
        _ => sim.dead_time,
    };
    // Remaining dead periods per branch, including the current one.
    let mut dead = [0u32; BRANCHES];
    let mut tally = ShardTally::default();
    let mut gated = 0;
    while gated < gates {
        tally.offered += 1;
        let armed = dead.map(|d| d == 0);
        let gate = match sim.gating {
            GatingPolicy::Smart => armed.iter().all(|&a| a),
            GatingPolicy::Naive | GatingPolicy::Ideal => true,
        };
        let clicked = if gate {
            let m = sample_photons(&photons, rng);
            let clicked = fire(params, m, armed, rng);
            tally.counts[clicked.iter().filter(|&&c| c).count()] += 1;
            gated += 1;
            clicked
        } else {
            [false; BRANCHES]
        };
        for g in 0..BRANCHES {
            if clicked[g] {
                dead[g] = dead_time;
            } else if dead[g] > 0 {
                dead[g] -= 1;
            }
        }
    }
    tally
}

/// RNG for shard `shard` of probe `probe`, independent of thread scheduling.
fn shard_rng(seed: u64, probe: usize, shard: u32, shards: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(probe as u64 * shards as u64 + shard as u64);
    rng
}

/// Simulates the acquisition of every probe.
pub fn run_experiment(
    params: &DetectorParams,
    probes: &[CoherentProbe],
    sim: &SimulationConfig,
) -> Result<OutcomeStats> {
    params.validate()?;
    sim.validate()?;
    if probes.is_empty() {
        return Err(Error::param("empty probe list"));
    }
    if let Some(p) = probes
        .iter()
        .find(|p| !(p.mean_photons >= 0.0) || !p.mean_photons.is_finite())
    {
        return Err(Error::param(format!(
            "mean photon number {} must be >= 0",
            p.mean_photons
        )));
    }
    let shards = sim.shards;
    let jobs: Vec<(usize, u32)> = (0..probes.len())
        .flat_map(|j| (0..shards).map(move |s| (j, s)))
        .collect();
    let tallies: Vec<ShardTally> = jobs
        .par_iter()
        .map(|&(j, s)| {
            let base = sim.pulses_per_probe / shards as u64;
            let extra = u64::from((s as u64) < sim.pulses_per_probe % shards as u64);
            let mut rng = shard_rng(sim.seed, j, s, shards);
            run_shard(params, probes[j].mean_photons, sim, base + extra, &mut rng)
        })
        .collect();

    let mut counts = vec![[0u64; OUTCOMES]; probes.len()];
    let mut offered = vec![0u64; probes.len()];
    for (&(j, _), t) in jobs.iter().zip(&tallies) {
        for n in 0..OUTCOMES {
            counts[j][n] += t.counts[n];
        }
        offered[j] += t.offered;
    }
    Ok(OutcomeStats {
        mean_photons: probes.iter().map(|p| p.mean_photons).collect(),
        counts,
        offered_pulses: offered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(gating: GatingPolicy, dead_time: u32, pulses: u64) -> SimulationConfig {
        SimulationConfig {
            gating,
            dead_time,
            pulses_per_probe: pulses,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn dark_free_vacuum_never_clicks() {
        let params = DetectorParams::new([0.3; 4], [0.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!((0..10_000).all(|_| simulate_pulse(&params, 0.0, &mut rng) == 0));
    }

    #[test]
    fn ideal_detector_saturates_on_bright_pulses() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fours = (0..10_000)
            .filter(|_| simulate_pulse(&DetectorParams::ideal(), 100.0, &mut rng) == 4)
            .count();
        assert!(fours as f64 / 1e4 >= 0.99);
    }

    #[test]
    fn zero_dead_time_makes_policies_coincide() {
        let p = DetectorParams::calibrated();
        let probes = [CoherentProbe::new(3.0), CoherentProbe::new(20.0)];
        let ideal = run_experiment(&p, &probes, &sim(GatingPolicy::Ideal, 0, 5_000)).unwrap();
        for g in [GatingPolicy::Smart, GatingPolicy::Naive] {
            let other = run_experiment(&p, &probes, &sim(g, 0, 5_000)).unwrap();
            assert_eq!(other, ideal);
        }
        assert_eq!(throughput_report(&ideal), 1.0);
    }

    #[test]
    fn ideal_policy_ignores_dead_time() {
        let p = DetectorParams::calibrated();
        let probes = [CoherentProbe::new(10.0)];
        let a = run_experiment(&p, &probes, &sim(GatingPolicy::Ideal, 0, 2_000)).unwrap();
        let b = run_experiment(&p, &probes, &sim(GatingPolicy::Ideal, 25, 2_000)).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.throughput(), vec![1.0]);
    }

    #[test]
    fn counts_sum_to_gated_pulses() {
        let p = DetectorParams::calibrated();
        let probes = [CoherentProbe::new(1.0), CoherentProbe::new(40.0)];
        let cfg = SimulationConfig {
            pulses_per_probe: 1_001,
            shards: 4,
            ..sim(GatingPolicy::Smart, 10, 1_001)
        };
        let stats = run_experiment(&p, &probes, &cfg).unwrap();
        for j in 0..2 {
            assert_eq!(stats.gated_pulses(j), 1_001);
            assert!(stats.offered_pulses[j] > 1_001);
            let f = stats.frequency_column(j);
            assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_pulse_single_count() {
        let p = DetectorParams::new([0.5; 4], [0.0; 4]).unwrap();
        let stats = run_experiment(
            &p,
            &[CoherentProbe::new(0.0)],
            &sim(GatingPolicy::Smart, 10, 1),
        )
        .unwrap();
        assert_eq!(stats.counts[0], [1, 0, 0, 0, 0]);
    }

    #[test]
    fn rejects_bad_config() {
        let p = DetectorParams::calibrated();
        let probes = [CoherentProbe::new(1.0)];
        assert!(run_experiment(&p, &probes, &sim(GatingPolicy::Smart, 1, 0)).is_err());
        let cfg = SimulationConfig {
            rep_rate: 0.0,
            ..SimulationConfig::default()
        };
        assert!(run_experiment(&p, &probes, &cfg).is_err());
        assert!(run_experiment(&p, &[], &SimulationConfig::default()).is_err());
        assert!(run_experiment(
            &p,
            &[CoherentProbe::new(-2.0)],
            &SimulationConfig::default()
        )
        .is_err());
    }

    #[test]
    fn stats_validation() {
        assert!(OutcomeStats::from_counts(vec![], vec![]).is_err());
        assert!(OutcomeStats::from_counts(vec![1.0], vec![[0; 5]]).is_err());
        assert!(OutcomeStats::from_counts(vec![1.0, 2.0], vec![[1; 5]]).is_err());
        let s = OutcomeStats::from_counts(vec![1.0], vec![[3, 1, 0, 0, 0]]).unwrap();
        assert_eq!(s.frequency_column(0), [0.75, 0.25, 0.0, 0.0, 0.0]);
    }
}
