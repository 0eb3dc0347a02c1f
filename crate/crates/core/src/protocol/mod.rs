//! Block-level simulator of the two-stage key-renewal scheme and of the
//! per-block wiretap baseline.
//!
//! Channel coding is abstracted away: a block carries exactly
//! `round(n1 · rate / ln 2)` bits for each lane. Key and data bits are
//! seeded pseudo-random sequences and the one-time pad is a real XOR, so
//! every encrypted block is decrypted and compared.

mod bits;

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bits::{otp, parse_bits, random_bits, BitString, KeyBuffer};

use crate::bounds::{FixedPointSolution, MainFixedPoint, Scenario, FIXED_POINT_TOL};
use crate::error::{Error, Result};
use crate::fading::{ChannelState, FadingDistribution};
use crate::numerics::{Integrator, RngSeed, DEFAULT_NODES};
use crate::policy::{calibrate, Csi, PolicyFamily, PowerPolicy};
use crate::rates::{breakdown, key_rate, otp_rate_cap, KeyShare, RateBreakdown};

pub const DEFAULT_N1: u64 = 10_000;
pub const DEFAULT_BACKOFF: f64 = 0.05;

/// Per-block CSV header.
pub const CSV_HEADER: &str = "m,l,h_m,h_e,power,r_main,r_eve,r_s,r_s_prime,r_s_dprime,key_consumed,key_generated,data_delivered,insecure_bits,outage";
const CSV_BITS_HEADER: &str = "r_main_bits,r_eve_bits,r_s_bits,r_s_prime_bits,r_s_dprime_bits";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Two-stage scheme, transmitter knows both gains.
    FullCsi,
    /// Two-stage scheme, transmitter knows only the main gain.
    MainCsi,
    /// Independent wiretap code in every block; no key.
    Baseline,
}

impl Scheme {
    pub fn default_policy(&self) -> PolicyFamily {
        match self {
            Scheme::FullCsi => PolicyFamily::FullInversion,
            Scheme::MainCsi => PolicyFamily::MainInversion,
            Scheme::Baseline => PolicyFamily::Constant,
        }
    }

    fn csi(&self) -> Csi {
        match self {
            Scheme::MainCsi => Csi::Main,
            _ => Csi::Full,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::FullCsi => "full",
            Scheme::MainCsi => "main",
            Scheme::Baseline => "baseline",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" | "full-csi" => Ok(Scheme::FullCsi),
            "main" | "main-csi" => Ok(Scheme::MainCsi),
            "baseline" | "wiretap" => Ok(Scheme::Baseline),
            other => Err(Error::Parse(format!("unknown scheme `{other}` (full, main, baseline)"))),
        }
    }
}

/// What happens in the first super-block, before any key exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Send data anyway; the pad lane goes out unencrypted and is counted
    /// insecure.
    #[default]
    Insecure,
    /// Send no data; the super-block only generates key.
    Dedicated,
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "insecure" => Ok(InitMode::Insecure),
            "dedicated" => Ok(InitMode::Dedicated),
            other => Err(Error::Parse(format!("unknown init mode `{other}` (insecure, dedicated)"))),
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Insecure => "insecure",
            InitMode::Dedicated => "dedicated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// super-blocks
    pub b: usize,
    /// blocks per super-block
    pub a: usize,
    /// symbols per block
    pub n1: u64,
    pub p_bar: f64,
    pub scheme: Scheme,
    /// `None` picks the scheme default.
    pub policy: Option<PolicyFamily>,
    pub dist_m: FadingDistribution,
    pub dist_e: FadingDistribution,
    pub backoff: f64,
    pub seed: RngSeed,
    pub init: InitMode,
    /// Key-share function for the full-CSI scheme.
    pub share: KeyShare,
    /// Quadrature nodes for the rate schedule.
    pub nodes: usize,
}

impl SimConfig {
    pub fn new(scheme: Scheme, dist_m: FadingDistribution, dist_e: FadingDistribution, p_bar: f64) -> Self {
        Self {
            b: 10,
            a: 100,
            n1: DEFAULT_N1,
            p_bar,
            scheme,
            policy: None,
            dist_m,
            dist_e,
            backoff: DEFAULT_BACKOFF,
            seed: RngSeed::new(0, 0),
            init: InitMode::default(),
            share: KeyShare::EAVESDROPPER,
            nodes: DEFAULT_NODES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 || self.a == 0 || self.n1 == 0 {
            return Err(Error::Argument(format!(
                "b, a and n1 must be >= 1 (got b={}, a={}, n1={})",
                self.b, self.a, self.n1
            )));
        }
        if !(0.0..1.0).contains(&self.backoff) {
            return Err(Error::Argument(format!("backoff must lie in [0, 1), got {}", self.backoff)));
        }
        if !(self.p_bar >= 0.0 && self.p_bar.is_finite()) {
            return Err(Error::Argument(format!("average power must be finite and >= 0, got {}", self.p_bar)));
        }
        KeyShare::new(self.share.floor)?;
        self.dist_m.validate()?;
        self.dist_e.validate()
    }

    /// Total channel uses n = b·a·n1.
    pub fn channel_uses(&self) -> u64 {
        (self.b * self.a) as u64 * self.n1
    }

    pub fn policy_family(&self) -> PolicyFamily {
        self.policy.unwrap_or_else(|| self.scheme.default_policy())
    }
}

/// Rates fixed before the run starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Pad-lane data rate after backoff, nats per channel use.
    pub otp_rate: f64,
    pub otp_bits_per_block: u64,
    /// E[R_s′] (full CSI).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key_rate_expected: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub otp_rate_cap: Option<f64>,
    /// R* (main CSI).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_point: Option<FixedPointSolution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub m: usize,
    pub l: usize,
    pub state: ChannelState,
    pub power: f64,
    pub rates: RateBreakdown,
    pub key_consumed: u64,
    pub key_generated: u64,
    pub data_delivered: u64,
    pub insecure_bits: u64,
    /// Bits delivered on the pad lane (encrypted or not).
    pub otp_bits: u64,
    pub starved: bool,
    pub outage: bool,
}

impl BlockRecord {
    pub fn secure_bits(&self) -> u64 {
        self.data_delivered - self.insecure_bits
    }
}

/// Key-buffer sizes in bits after each block.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BufferTrajectory {
    pub available: Vec<u64>,
    pub pending: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub policy: PowerPolicy,
    pub schedule: Schedule,
    /// Blocks after super-block 1 whose pad lane lacked key.
    pub starvation_events: usize,
    pub insecure_fraction: f64,
    /// Insecure share of the pad lane alone.
    pub otp_insecure_fraction: f64,
    pub outage_fraction: f64,
    pub otp_bits_total: u64,
    pub otp_bits_first_superblock: u64,
    /// Smallest per-block secure delivery over the blocks that can be
    /// protected (after super-block 1 for the two-stage schemes).
    pub min_secure_bits: u64,
    pub roundtrip_ok: bool,
    pub key_balance_ok: bool,
    pub buffer: BufferTrajectory,
    pub records: Vec<BlockRecord>,
}

fn to_bits(n1: u64, rate: f64) -> u64 {
    (n1 as f64 * crate::nats_to_bits(rate)).round() as u64
}

const STATE_STREAM: u64 = 0;
const DATA_STREAM: u64 = 1;
const KEY_STREAM: u64 = 2;

fn stream(seed: RngSeed, lane: u64) -> RngSeed {
    seed.with_stream(seed.stream.wrapping_mul(3).wrapping_add(lane))
}

fn schedule(config: &SimConfig, policy: &PowerPolicy, quad: &Integrator) -> Result<Schedule> {
    let (dm, de) = (&config.dist_m, &config.dist_e);
    let keep = 1.0 - config.backoff;
    let s = match config.scheme {
        Scheme::FullCsi => {
            let key = key_rate(policy, dm, de, config.share, quad)?;
            let cap = otp_rate_cap(policy, dm, de);
            let otp_rate = keep * key.min(cap);
            Schedule {
                otp_rate,
                otp_bits_per_block: to_bits(config.n1, otp_rate),
                key_rate_expected: Some(key),
                otp_rate_cap: Some(cap),
                fixed_point: None,
            }
        }
        Scheme::MainCsi => {
            let scenario = Scenario::new(*dm, *de, config.p_bar)?;
            let sol = MainFixedPoint::new(&scenario, *policy, quad).solve(FIXED_POINT_TOL)?;
            let otp_rate = keep * sol.rate;
            Schedule {
                otp_rate,
                otp_bits_per_block: to_bits(config.n1, otp_rate),
                key_rate_expected: None,
                otp_rate_cap: None,
                fixed_point: Some(sol),
            }
        }
        Scheme::Baseline => Schedule {
            otp_rate: 0.0,
            otp_bits_per_block: 0,
            key_rate_expected: None,
            otp_rate_cap: None,
            fixed_point: None,
        },
    };
    Ok(s)
}

/// Runs one simulation. Deterministic in `config`.
pub fn simulate(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let quad = Integrator::new(config.nodes)?;
    let family = config.policy_family();
    let csi = config.scheme.csi();
    if !family.usable_with(csi) {
        return Err(Error::Capability { family: family.name().into() });
    }
    let mut policy = calibrate(family, &config.dist_m, &config.dist_e, config.p_bar, &quad)?;
    policy.csi = csi;
    let sched = schedule(config, &policy, &quad)?;

    let mut state_rng = stream(config.seed, STATE_STREAM).rng();
    let mut data_rng = stream(config.seed, DATA_STREAM).rng();
    let mut key_rng = stream(config.seed, KEY_STREAM).rng();
    let (sm, se) = (config.dist_m.sampler(), config.dist_e.sampler());

    let blocks = config.a * config.b;
    let mut records = Vec::with_capacity(blocks);
    let mut buffer = BufferTrajectory {
        available: Vec::with_capacity(blocks),
        pending: Vec::with_capacity(blocks),
    };
    let mut keys = KeyBuffer::new();
    let mut roundtrip_ok = true;
    let mut starvation_events = 0;
    let reserve = sched.fixed_point.map_or(0.0, |s| s.rate);

    for m in 1..=config.b {
        let first = m == 1;
        for l in 1..=config.a {
            let state = ChannelState::new_unchecked(sm.draw(&mut state_rng), se.draw(&mut state_rng));
            let power = policy.power(state)?;
            let q = match config.scheme {
                Scheme::FullCsi => config.share.eval(state),
                _ => state.h_e,
            };
            let mut rates = breakdown(power, state, q);
            rates.r_o = sched.otp_rate;
            let mut rec = BlockRecord {
                m,
                l,
                state,
                power,
                rates,
                key_consumed: 0,
                key_generated: 0,
                data_delivered: 0,
                insecure_bits: 0,
                otp_bits: 0,
                starved: false,
                outage: false,
            };

            match config.scheme {
                Scheme::Baseline => {
                    rec.outage = state.h_e >= state.h_m;
                    rec.data_delivered = to_bits(config.n1, rates.r_s);
                }
                Scheme::FullCsi | Scheme::MainCsi => {
                    let want = sched.otp_bits_per_block;
                    if first {
                        if config.init == InitMode::Insecure {
                            rec.otp_bits = want;
                            rec.insecure_bits = want;
                        }
                    } else if want > 0 {
                        match keys.take(want as usize) {
                            Some(key) => {
                                let data = random_bits(&mut data_rng, want as usize);
                                let cipher = otp(&data, key)?;
                                roundtrip_ok &= otp(&cipher, key)? == data;
                                rec.key_consumed = want;
                                rec.otp_bits = want;
                            }
                            None => {
                                rec.starved = true;
                                starvation_events += 1;
                            }
                        }
                    }
                    let direct = match config.scheme {
                        Scheme::FullCsi if !(first && config.init == InitMode::Dedicated) => {
                            to_bits(config.n1, rates.r_s_dprime)
                        }
                        _ => 0,
                    };
                    rec.data_delivered = rec.otp_bits + direct;
                    let key_rate = match config.scheme {
                        Scheme::FullCsi => rates.r_s_prime,
                        _ => (rates.r_main - reserve - rates.r_eve).max(0.0),
                    };
                    rec.key_generated = to_bits(config.n1, key_rate);
                    keys.deposit(&random_bits(&mut key_rng, rec.key_generated as usize));
                }
            }
            buffer.available.push(keys.available() as u64);
            buffer.pending.push(keys.pending() as u64);
            records.push(rec);
        }
        keys.promote();
    }

    let sum = |f: fn(&BlockRecord) -> u64| records.iter().map(f).sum::<u64>();
    let delivered = sum(|r| r.data_delivered);
    let insecure = sum(|r| r.insecure_bits);
    let otp_total = sum(|r| r.otp_bits);
    let otp_first = records.iter().filter(|r| r.m == 1).map(|r| r.otp_bits).sum::<u64>();
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let steady = |r: &&BlockRecord| config.scheme == Scheme::Baseline || r.m > 1;
    let min_secure_bits = records.iter().filter(steady).map(BlockRecord::secure_bits).min().unwrap_or(0);
    let outages = records.iter().filter(|r| r.outage).count();

    let mut report = SimReport {
        config: config.clone(),
        policy,
        schedule: sched,
        starvation_events,
        insecure_fraction: ratio(insecure, delivered),
        otp_insecure_fraction: ratio(otp_first, otp_total),
        outage_fraction: outages as f64 / blocks as f64,
        otp_bits_total: otp_total,
        otp_bits_first_superblock: otp_first,
        min_secure_bits,
        roundtrip_ok,
        key_balance_ok: true,
        buffer,
        records,
    };
    report.key_balance_ok = key_balance_check(&report)?;
    Ok(report)
}

/// Key consumed and generated per super-block, indexed from 0.
pub fn superblock_ledger(report: &SimReport) -> (Vec<u64>, Vec<u64>) {
    let b = report.records.iter().map(|r| r.m).max().unwrap_or(0);
    let mut consumed = vec![0; b];
    let mut generated = vec![0; b];
    for r in &report.records {
        consumed[r.m - 1] += r.key_consumed;
        generated[r.m - 1] += r.key_generated;
    }
    (consumed, generated)
}

/// True iff every super-block m ≥ 2 consumed no more key than super-block
/// m − 1 generated.
pub fn key_balance_check(report: &SimReport) -> Result<bool> {
    if report.records.is_empty() {
        return Err(Error::Precondition("key balance needs a report with at least one block".into()));
    }
    let (consumed, generated) = superblock_ledger(report);
    Ok((1..consumed.len()).all(|m| consumed[m] <= generated[m - 1]))
}

impl SimReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Precondition(format!("report serialization: {e}")))
    }

    /// Per-block CSV; `with_bits` appends the rates in bits per channel use.
    pub fn to_csv(&self, with_bits: bool) -> String {
        let mut out = String::with_capacity(128 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        if with_bits {
            out.push(',');
            out.push_str(CSV_BITS_HEADER);
        }
        out.push('\n');
        for r in &self.records {
            let x = &r.rates;
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.m,
                r.l,
                r.state.h_m,
                r.state.h_e,
                r.power,
                x.r_main,
                x.r_eve,
                x.r_s,
                x.r_s_prime,
                x.r_s_dprime,
                r.key_consumed,
                r.key_generated,
                r.data_delivered,
                r.insecure_bits,
                u8::from(r.outage)
            );
            if with_bits {
                for v in [x.r_main, x.r_eve, x.r_s, x.r_s_prime, x.r_s_dprime] {
                    let _ = write!(out, ",{}", crate::nats_to_bits(v));
                }
            }
            out.push('\n');
        }
        out
    }

    /// One-line summary.
    pub fn summary(&self) -> String {
        format!(
            "starvation={} insecure_frac={} outage_frac={} roundtrip={}",
            self.starvation_events,
            self.insecure_fraction,
            self.outage_fraction,
            if self.roundtrip_ok { "ok" } else { "FAIL" }
        )
    }
}
