//! Seeded synthetic feeders with known phase membership.
//!
//! Each phase has a base profile `1 + Σ_h A_h cos(2π h t / 24 + φ_h)` built
//! from the first six daily harmonics; a meter reads its phase's profile plus
//! independent white noise. Transformers are assigned whole to one phase.

use std::fmt::Write as _;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterAssignment, ClusterLabel};
use crate::format::num;
use crate::ingestion::{
    format_timestamp, FeederDataset, MeterLink, MeterReadings, PeriodId, Topology,
};
use crate::spectral::{DEFAULT_DAILY_HARMONICS, HOURS_PER_DAY};
use crate::{Error, Result};

pub const PHASES: usize = 3;

type HarmonicTable = [[f64; DEFAULT_DAILY_HARMONICS]; PHASES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub feeder_id: String,
    /// One dataset per period; all share topology and phase membership.
    pub periods: Vec<PeriodId>,
    pub n_meters: usize,
    pub n_transformers: usize,
    pub phase_fractions: [f64; PHASES],
    /// Per-phase amplitude of daily harmonics 1..=6 (per-unit).
    pub daily_harmonic_amps: HarmonicTable,
    /// Per-phase phase offset of daily harmonics 1..=6 (radians).
    pub daily_harmonic_offsets: HarmonicTable,
    /// White-noise standard deviation on the per-unit scale.
    pub noise_sigma: f64,
    /// Probability that a meter loses one random hour in a period.
    pub missing_rate: f64,
    /// Multiplier turning per-unit values into volts.
    pub nominal_voltage: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            feeder_id: "F".into(),
            periods: vec![
                PeriodId::new(2021, 6).unwrap(),
                PeriodId::new(2021, 7).unwrap(),
            ],
            n_meters: 26,
            n_transformers: 11,
            phase_fractions: [13.0 / 26.0, 8.0 / 26.0, 5.0 / 26.0],
            daily_harmonic_amps: [
                [0.020, 0.008, 0.004, 0.003, 0.002, 0.001],
                [0.016, 0.010, 0.005, 0.002, 0.002, 0.001],
                [0.012, 0.006, 0.007, 0.004, 0.001, 0.002],
            ],
            daily_harmonic_offsets: [
                [0.0, 0.5, 1.0, 1.5, 2.0, 2.5],
                [2.1, 2.6, 0.2, 1.1, 0.7, 3.0],
                [4.2, 1.3, 2.4, 0.4, 2.9, 1.7],
            ],
            noise_sigma: 0.01,
            missing_rate: 0.0,
            nominal_voltage: 240.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.periods.is_empty() {
            return bad("at least one period is required".into());
        }
        if self.n_meters == 0 || self.n_transformers == 0 {
            return bad("n_meters and n_transformers must be positive".into());
        }
        if self.n_transformers > self.n_meters {
            return bad(format!(
                "{} transformers cannot each serve at least one of {} meters",
                self.n_transformers, self.n_meters
            ));
        }
        if self
            .phase_fractions
            .iter()
            .any(|f| !f.is_finite() || *f < 0.0)
        {
            return bad("phase fractions must be non-negative".into());
        }
        let total: f64 = self.phase_fractions.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("phase fractions sum to {total}, expected 1"));
        }
        let occupied = self.phase_sizes().iter().filter(|&&s| s > 0).count();
        if occupied > self.n_transformers {
            return bad(format!(
                "{occupied} occupied phases need at least as many transformers, got {}",
                self.n_transformers
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma {} must be finite and >= 0",
                self.noise_sigma
            ));
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate {} outside [0, 1]", self.missing_rate));
        }
        if !(self.nominal_voltage > 0.0 && self.nominal_voltage.is_finite()) {
            return bad("nominal_voltage must be positive".into());
        }
        Ok(())
    }

    /// Meters per phase: `phase_fractions × n_meters`, rounded by largest
    /// remainder so the sizes add up to `n_meters`.
    pub fn phase_sizes(&self) -> [usize; PHASES] {
        let exact: Vec<f64> = self
            .phase_fractions
            .iter()
            .map(|f| f * self.n_meters as f64)
            .collect();
        let mut sizes: [usize; PHASES] = [0; PHASES];
        for (s, e) in sizes.iter_mut().zip(&exact) {
            *s = e.floor() as usize;
        }
        let mut order: Vec<usize> = (0..PHASES).collect();
        order.sort_by(|&i, &j| {
            (exact[j] - exact[j].floor())
                .total_cmp(&(exact[i] - exact[i].floor()))
                .then(i.cmp(&j))
        });
        let short = self.n_meters.saturating_sub(sizes.iter().sum());
        for &p in order.iter().cycle().take(short) {
            sizes[p] += 1;
        }
        sizes
    }

    /// Samples in one period.
    pub fn hours(&self, period: PeriodId) -> usize {
        period.hours()
    }

    /// Per-unit profile value of `phase` at hour `t`.
    pub fn base_profile(&self, phase: usize, t: usize) -> f64 {
        let day = std::f64::consts::TAU * (t % HOURS_PER_DAY) as f64 / HOURS_PER_DAY as f64;
        1.0 + (0..DEFAULT_DAILY_HARMONICS)
            .map(|h| {
                self.daily_harmonic_amps[phase][h]
                    * ((h + 1) as f64 * day + self.daily_harmonic_offsets[phase][h]).cos()
            })
            .sum::<f64>()
    }
}

/// Generated datasets for every configured period plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthStudy {
    pub datasets: Vec<FeederDataset>,
    pub topology: Topology,
    pub ground_truth: ClusterAssignment,
}

/// The first configured period only.
pub fn generate_feeder(config: &SynthConfig) -> Result<(FeederDataset, ClusterAssignment)> {
    let mut study = generate_study(config)?;
    Ok((study.datasets.swap_remove(0), study.ground_truth))
}

pub fn generate_study(config: &SynthConfig) -> Result<SynthStudy> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let sizes = config.phase_sizes();
    let transformers_per_phase = allocate_transformers(&sizes, config.n_transformers);

    // (phase, transformer index) for every meter.
    let mut slots: Vec<(usize, usize)> = Vec::with_capacity(config.n_meters);
    let mut next_transformer = 0;
    for phase in 0..PHASES {
        let count = transformers_per_phase[phase];
        let first = next_transformer;
        next_transformer += count;
        for i in 0..sizes[phase] {
            let t = if i < count {
                first + i
            } else {
                first + rng.random_range(0..count)
            };
            slots.push((phase, t));
        }
    }
    slots.shuffle(&mut rng);
    let mut transformer_names: Vec<usize> = (0..config.n_transformers).collect();
    transformer_names.shuffle(&mut rng);

    let meter_width = digits(config.n_meters);
    let transformer_width = digits(config.n_transformers);
    let meters: Vec<(String, usize, String)> = slots
        .iter()
        .enumerate()
        .map(|(i, &(phase, t))| {
            (
                format!("M{:0w$}", i + 1, w = meter_width),
                phase,
                format!("T{:0w$}", transformer_names[t] + 1, w = transformer_width),
            )
        })
        .collect();

    let topology = Topology::from_links(meters.iter().map(|(m, _, t)| {
        (
            m.clone(),
            MeterLink {
                transformer_id: t.clone(),
                feeder_id: config.feeder_id.clone(),
            },
        )
    }))?;
    let ground_truth = ClusterAssignment::new(
        meters
            .iter()
            .map(|(m, p, _)| (m.clone(), ClusterLabel(*p)))
            .collect::<IndexMap<_, _>>(),
        "truth",
    );

    let noise = Normal::new(0.0, config.noise_sigma)
        .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
    let datasets = config
        .periods
        .iter()
        .enumerate()
        .map(|(index, &period)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(index as u64 + 1);
            let hours = period.hours();
            let profiles: Vec<Vec<f64>> = (0..PHASES)
                .map(|p| (0..hours).map(|t| config.base_profile(p, t)).collect())
                .collect();
            let readings = meters
                .iter()
                .map(|(meter_id, phase, _)| {
                    let mut samples: Vec<Option<f64>> = profiles[*phase]
                        .iter()
                        .map(|&v| Some(config.nominal_voltage * (v + noise.sample(&mut rng))))
                        .collect();
                    if rng.random_bool(config.missing_rate) {
                        let hole = rng.random_range(0..hours);
                        samples[hole] = None;
                    }
                    MeterReadings {
                        meter_id: meter_id.clone(),
                        samples,
                    }
                })
                .collect();
            FeederDataset {
                feeder_id: config.feeder_id.clone(),
                period,
                meters: readings,
                topology: topology.clone(),
            }
        })
        .collect();

    Ok(SynthStudy {
        datasets,
        topology,
        ground_truth,
    })
}

/// One transformer per occupied phase, then each extra transformer to the
/// phase with the most meters per transformer that can still take one.
fn allocate_transformers(sizes: &[usize; PHASES], total: usize) -> [usize; PHASES] {
    let mut counts = sizes.map(|s| usize::from(s > 0));
    let mut remaining = total - counts.iter().sum::<usize>();
    while remaining > 0 {
        let pick = (0..PHASES)
            .filter(|&p| counts[p] > 0 && counts[p] < sizes[p])
            .max_by(|&a, &b| {
                let ra = sizes[a] as f64 / counts[a] as f64;
                let rb = sizes[b] as f64 / counts[b] as f64;
                ra.total_cmp(&rb).then(b.cmp(&a))
            })
            .expect("validated: transformers never exceed meters");
        counts[pick] += 1;
        remaining -= 1;
    }
    counts
}

fn digits(n: usize) -> usize {
    n.to_string().len().max(2)
}

impl SynthStudy {
    /// Readings CSV covering every period, absent rows for missing hours.
    pub fn readings_csv(&self) -> String {
        let mut out = String::from("meter_id,timestamp,voltage\n");
        for ds in &self.datasets {
            for m in &ds.meters {
                for (h, v) in m.samples.iter().enumerate() {
                    if let Some(v) = v {
                        let _ = writeln!(
                            out,
                            "{},{},{}",
                            m.meter_id,
                            format_timestamp(ds.period.timestamp(h)),
                            num(*v)
                        );
                    }
                }
            }
        }
        out
    }

    pub fn topology_csv(&self) -> String {
        let mut out = String::from("meter_id,transformer_id,feeder_id\n");
        for (m, link) in self.topology.meters() {
            let _ = writeln!(out, "{m},{},{}", link.transformer_id, link.feeder_id);
        }
        out
    }

    /// `meter_id,phase` with phases lettered A, B, C.
    pub fn ground_truth_csv(&self) -> String {
        let mut out = String::from("meter_id,phase\n");
        for (m, p) in &self.ground_truth.labels {
            let _ = writeln!(out, "{m},{p}");
        }
        out
    }
}
