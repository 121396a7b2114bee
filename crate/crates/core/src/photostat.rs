//! Heralded photon statistics: a per-pulse Monte Carlo of pair emission into
//! a herald detector and a two-detector HBT arm, the heralded g³ estimator,
//! and an exact enumeration of the expected tallies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::bisect;

/// Pulses simulated from one generator stream.
pub const BLOCK_PULSES: u64 = 1 << 16;

/// Pair-number distribution per pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairDistribution {
    Poissonian,
    /// Negative binomial over `schmidt_modes` thermal modes.
    Thermal,
    /// `⌊µ⌋` pairs, plus one more with probability `µ − ⌊µ⌋`.
    Fixed,
}

/// How signal and idler photon numbers relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emission {
    /// Both arms see the same pair number.
    #[default]
    Pairs,
    /// Each arm draws its own photon number; with a Poissonian distribution
    /// this is the coherent-light benchmark.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceStatModel {
    /// `µ = α·P`, pairs per pulse per mW.
    pub alpha_per_mw: f64,
    pub distribution: PairDistribution,
    pub schmidt_modes: u32,
    pub emission: Emission,
}

impl SourceStatModel {
    pub fn poissonian(alpha_per_mw: f64) -> Self {
        SourceStatModel {
            alpha_per_mw,
            distribution: PairDistribution::Poissonian,
            schmidt_modes: 1,
            emission: Emission::Pairs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_per_mw >= 0.0 && self.alpha_per_mw.is_finite()) {
            return Err(Error::arg("alpha must be finite and >= 0"));
        }
        if self.schmidt_modes == 0 {
            return Err(Error::arg("schmidt_modes must be >= 1"));
        }
        Ok(())
    }

    pub fn mean_pairs(&self, power_mw: f64) -> Result<f64> {
        if !(power_mw >= 0.0 && power_mw.is_finite()) {
            return Err(Error::arg(format!("pump power {power_mw} mW must be >= 0")));
        }
        Ok(self.alpha_per_mw * power_mw)
    }

    /// `P(m)` for `m = 0..=cutoff` at mean `mu`.
    pub fn pmf(&self, mu: f64, cutoff: usize) -> Vec<f64> {
        let mut p = vec![0.0; cutoff + 1];
        match self.distribution {
            PairDistribution::Poissonian => {
                p[0] = (-mu).exp();
                for m in 1..=cutoff {
                    p[m] = p[m - 1] * mu / m as f64;
                }
            }
            PairDistribution::Thermal => {
                let k = f64::from(self.schmidt_modes);
                p[0] = (k / (k + mu)).powf(k);
                let ratio = mu / (mu + k);
                for m in 1..=cutoff {
                    p[m] = p[m - 1] * (m as f64 + k - 1.0) / m as f64 * ratio;
                }
            }
            PairDistribution::Fixed => {
                let base = mu.floor() as usize;
                let frac = mu - mu.floor();
                if base <= cutoff {
                    p[base] = 1.0 - frac;
                }
                if base < cutoff {
                    p[base + 1] = frac;
                }
            }
        }
        p
    }

    /// Smallest cutoff whose tail mass is below `tail`.
    pub fn cutoff_for(&self, mu: f64, tail: f64) -> usize {
        let mut cutoff = (4.0 * mu).ceil() as usize + 8;
        loop {
            let mass: f64 = self.pmf(mu, cutoff).iter().sum();
            if 1.0 - mass < tail || cutoff > 100_000 {
                return cutoff;
            }
            cutoff *= 2;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub efficiency: f64,
    pub dark_count_rate_hz: f64,
    pub coincidence_window_ns: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec {
            efficiency: 0.5,
            dark_count_rate_hz: 110.0,
            coincidence_window_ns: 3.0,
        }
    }
}

impl DetectorSpec {
    pub fn ideal() -> Self {
        DetectorSpec {
            efficiency: 1.0,
            dark_count_rate_hz: 0.0,
            coincidence_window_ns: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::arg(format!("detector efficiency {} outside [0, 1]", self.efficiency)));
        }
        if !(self.dark_count_rate_hz >= 0.0 && self.coincidence_window_ns >= 0.0) {
            return Err(Error::arg("dark count rate and window must be >= 0"));
        }
        if self.dark_probability() > 1.0 {
            return Err(Error::arg("dark count probability per window exceeds 1"));
        }
        Ok(())
    }

    /// Probability of a dark click inside one coincidence window.
    pub fn dark_probability(&self) -> f64 {
        self.dark_count_rate_hz * self.coincidence_window_ns * 1e-9
    }
}

/// Herald detector plus a beam splitter feeding two signal detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeraldedSetup {
    pub idler: DetectorSpec,
    pub transmitted: DetectorSpec,
    pub reflected: DetectorSpec,
    pub splitter_t: f64,
}

impl HeraldedSetup {
    pub fn symmetric(det: DetectorSpec) -> Self {
        HeraldedSetup {
            idler: det,
            transmitted: det,
            reflected: det,
            splitter_t: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.idler.validate()?;
        self.transmitted.validate()?;
        self.reflected.validate()?;
        if !(0.0..=1.0).contains(&self.splitter_t) {
            return Err(Error::arg(format!("splitter transmission {} outside [0, 1]", self.splitter_t)));
        }
        Ok(())
    }
}

/// Herald (1), transmitted (2) and reflected (3) coincidence tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CountsRecord {
    pub n1: u64,
    pub n12: u64,
    pub n13: u64,
    pub n123: u64,
    pub pulses: u64,
}

impl CountsRecord {
    fn merge(self, o: CountsRecord) -> CountsRecord {
        CountsRecord {
            n1: self.n1 + o.n1,
            n12: self.n12 + o.n12,
            n13: self.n13 + o.n13,
            n123: self.n123 + o.n123,
            pulses: self.pulses + o.pulses,
        }
    }

    pub fn to_key_value(&self) -> String {
        format!(
            "pulses = {}\nn1 = {}\nn12 = {}\nn13 = {}\nn123 = {}\n",
            self.pulses, self.n1, self.n12, self.n13, self.n123
        )
    }
}

/// Inverse-CDF sampler over a truncated pmf.
struct PairSampler {
    cdf: Vec<f64>,
}

impl PairSampler {
    fn new(model: &SourceStatModel, mu: f64) -> Self {
        let cutoff = model.cutoff_for(mu, 1e-16);
        let mut acc = 0.0;
        let cdf = model
            .pmf(mu, cutoff)
            .into_iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        PairSampler { cdf }
    }

    fn sample(&self, rng: &mut impl Rng) -> u32 {
        let u: f64 = rng.random();
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.cdf.len() - 1) as u32
    }
}

fn simulate_block(sampler: &PairSampler, model: &SourceStatModel, setup: &HeraldedSetup, seed: u64, block: u64, pulses: u64) -> CountsRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let (eta_i, eta_t, eta_r) = (setup.idler.efficiency, setup.transmitted.efficiency, setup.reflected.efficiency);
    let (d1, d2, d3) = (
        setup.idler.dark_probability(),
        setup.transmitted.dark_probability(),
        setup.reflected.dark_probability(),
    );
    let t = setup.splitter_t;
    let mut rec = CountsRecord {
        pulses,
        ..CountsRecord::default()
    };
    for _ in 0..pulses {
        let m_signal = sampler.sample(&mut rng);
        let m_idler = match model.emission {
            Emission::Pairs => m_signal,
            Emission::Independent => sampler.sample(&mut rng),
        };
        let mut c1 = rng.random::<f64>() < d1;
        let mut c2 = rng.random::<f64>() < d2;
        let mut c3 = rng.random::<f64>() < d3;
        for _ in 0..m_idler {
            c1 |= rng.random::<f64>() < eta_i;
        }
        for _ in 0..m_signal {
            if rng.random::<f64>() < t {
                c2 |= rng.random::<f64>() < eta_t;
            } else {
                c3 |= rng.random::<f64>() < eta_r;
            }
        }
        if c1 {
            rec.n1 += 1;
            rec.n12 += u64::from(c2);
            rec.n13 += u64::from(c3);
            rec.n123 += u64::from(c2 && c3);
        }
    }
    rec
}

/// Monte Carlo over `pulses` pulses. Pulses are split into blocks of
/// [`BLOCK_PULSES`], each drawing from stream `block` of a generator seeded
/// with `seed`, so the result does not depend on the worker count.
pub fn simulate_counts(model: &SourceStatModel, power_mw: f64, setup: &HeraldedSetup, pulses: u64, seed: u64) -> Result<CountsRecord> {
    model.validate()?;
    setup.validate()?;
    if pulses == 0 {
        return Err(Error::arg("pulses must be >= 1"));
    }
    let mu = model.mean_pairs(power_mw)?;
    let sampler = PairSampler::new(model, mu);
    let blocks = pulses.div_ceil(BLOCK_PULSES);
    Ok((0..blocks)
        .into_par_iter()
        .map(|b| {
            let n = BLOCK_PULSES.min(pulses - b * BLOCK_PULSES);
            simulate_block(&sampler, model, setup, seed, b, n)
        })
        .reduce(CountsRecord::default, CountsRecord::merge))
}

/// `N₁·N₁₂₃ / (N₁₂·N₁₃)`.
pub fn g3_heralded(counts: &CountsRecord) -> Result<f64> {
    if counts.n12 == 0 || counts.n13 == 0 {
        return Err(Error::InsufficientStatistics {
            n1: counts.n1,
            n12: counts.n12,
            n13: counts.n13,
            n123: counts.n123,
        });
    }
    Ok(counts.n1 as f64 * counts.n123 as f64 / (counts.n12 as f64 * counts.n13 as f64))
}

/// g³ and its standard error. Herald events are treated as a multinomial
/// over {both, only 2, only 3, neither} and the error is propagated to first
/// order. With no triples the error is that of a single triple count.
pub fn g3_with_error(counts: &CountsRecord) -> Result<(f64, f64)> {
    let g = g3_heralded(counts)?;
    let n = counts.n1 as f64;
    let a = counts.n123 as f64;
    let ab = counts.n12 as f64;
    let ac = counts.n13 as f64;
    let h = n / (ab * ac);
    if counts.n123 == 0 {
        return Ok((g, h));
    }
    let b = ab - a;
    let c = ac - a;
    let d = n - ab - c;
    let grad = [
        h + g * (1.0 / n - 1.0 / ab - 1.0 / ac),
        g * (1.0 / n - 1.0 / ab),
        g * (1.0 / n - 1.0 / ac),
        g / n,
    ];
    let p = [a / n, b / n, c / n, d / n];
    let mean: f64 = p.iter().zip(&grad).map(|(p, g)| p * g).sum();
    let sq: f64 = p.iter().zip(&grad).map(|(p, g)| p * g * g).sum();
    Ok((g, (n * (sq - mean * mean)).max(0.0).sqrt()))
}

/// Expected tallies per pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedTallies {
    pub p1: f64,
    pub p12: f64,
    pub p13: f64,
    pub p123: f64,
}

impl ExpectedTallies {
    pub fn g3(&self) -> Result<f64> {
        if !(self.p12 > 0.0 && self.p13 > 0.0) {
            return Err(Error::InsufficientStatistics {
                n1: 0,
                n12: 0,
                n13: 0,
                n123: 0,
            });
        }
        Ok(self.p1 * self.p123 / (self.p12 * self.p13))
    }
}

/// Exact expected tallies from a sum over pair numbers `m ≤ m_cutoff` and
/// all click outcomes.
pub fn expected_tallies(model: &SourceStatModel, power_mw: f64, setup: &HeraldedSetup, m_cutoff: usize) -> Result<ExpectedTallies> {
    model.validate()?;
    setup.validate()?;
    let mu = model.mean_pairs(power_mw)?;
    let pmf = model.pmf(mu, m_cutoff);
    let tail = 1.0 - pmf.iter().sum::<f64>();
    if tail >= 1e-12 {
        return Err(Error::TailMass { cutoff: m_cutoff, tail });
    }
    let t = setup.splitter_t;
    let (q1, q2, q3) = (
        1.0 - setup.idler.dark_probability(),
        1.0 - setup.transmitted.dark_probability(),
        1.0 - setup.reflected.dark_probability(),
    );
    let (a_i, a_t, a_r) = (
        1.0 - setup.idler.efficiency,
        1.0 - t * setup.transmitted.efficiency,
        1.0 - (1.0 - t) * setup.reflected.efficiency,
    );
    let a_tr = 1.0 - t * setup.transmitted.efficiency - (1.0 - t) * setup.reflected.efficiency;

    // Conditional click probabilities given m photons in an arm.
    let herald = |m: i32| 1.0 - q1 * a_i.powi(m);
    let signal = |m: i32| {
        let none2 = q2 * a_t.powi(m);
        let none3 = q3 * a_r.powi(m);
        let none23 = q2 * q3 * a_tr.powi(m);
        (1.0 - none2, 1.0 - none3, 1.0 - none2 - none3 + none23)
    };

    let mut e = ExpectedTallies {
        p1: 0.0,
        p12: 0.0,
        p13: 0.0,
        p123: 0.0,
    };
    match model.emission {
        Emission::Pairs => {
            for (m, p) in pmf.iter().enumerate() {
                let h = herald(m as i32);
                let (s2, s3, s23) = signal(m as i32);
                e.p1 += p * h;
                e.p12 += p * h * s2;
                e.p13 += p * h * s3;
                e.p123 += p * h * s23;
            }
        }
        Emission::Independent => {
            let (mut h, mut s2, mut s3, mut s23) = (0.0, 0.0, 0.0, 0.0);
            for (m, p) in pmf.iter().enumerate() {
                h += p * herald(m as i32);
                let (a, b, c) = signal(m as i32);
                s2 += p * a;
                s3 += p * b;
                s23 += p * c;
            }
            e = ExpectedTallies {
                p1: h,
                p12: h * s2,
                p13: h * s3,
                p123: h * s23,
            };
        }
    }
    Ok(e)
}

/// Exact expected g³ (see [`expected_tallies`]).
pub fn g3_enumerate(model: &SourceStatModel, power_mw: f64, setup: &HeraldedSetup, m_cutoff: usize) -> Result<f64> {
    expected_tallies(model, power_mw, setup, m_cutoff)?.g3()
}

/// g³ from enumeration at mean pair number `mu`, with an automatic cutoff.
pub fn g3_exact_at_mu(model: &SourceStatModel, mu: f64, setup: &HeraldedSetup) -> Result<f64> {
    let unit = SourceStatModel {
        alpha_per_mw: mu,
        ..*model
    };
    g3_enumerate(&unit, 1.0, setup, unit.cutoff_for(mu, 1e-14))
}

/// `α` such that the exact g³ at `power_mw` equals `target_g3`.
pub fn calibrate_alpha(model: &SourceStatModel, setup: &HeraldedSetup, power_mw: f64, target_g3: f64) -> Result<f64> {
    if !(power_mw > 0.0) {
        return Err(Error::arg("calibration power must be > 0"));
    }
    let mu = bisect(
        |mu| g3_exact_at_mu(model, mu, setup).unwrap_or(f64::NAN) - target_g3,
        1e-4,
        5.0,
        1e-12,
    )?;
    Ok(mu / power_mw)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub power_mw: f64,
    pub mean_pairs: f64,
    pub g3: f64,
    pub stderr: f64,
    pub counts: CountsRecord,
}

/// Monte-Carlo g³ at each power. Point `i` uses seed `seed + i`.
pub fn g3_power_sweep(
    model: &SourceStatModel,
    setup: &HeraldedSetup,
    powers_mw: &[f64],
    pulses_per_point: u64,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if powers_mw.is_empty() {
        return Err(Error::arg("power list is empty"));
    }
    powers_mw
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let counts = simulate_counts(model, p, setup, pulses_per_point, seed.wrapping_add(i as u64))?;
            let (g3, stderr) = g3_with_error(&counts)?;
            Ok(SweepPoint {
                power_mw: p,
                mean_pairs: model.mean_pairs(p)?,
                g3,
                stderr,
                counts,
            })
        })
        .collect()
}
