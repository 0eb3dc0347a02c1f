//! Power-control families and their calibration to the long-term average
//! power constraint E[P(h)] = P̄.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{inverse_min_moment, ChannelState, FadingDistribution, InverseMoment};
use crate::numerics::Integrator;

/// Channel knowledge available at the transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Csi {
    /// Both h_m and h_e known.
    Full,
    /// Only h_m known.
    Main,
}

/// A policy family before its scale constant is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PolicyFamily {
    Constant,
    FullInversion,
    MainInversion,
    /// `h_min: None` leaves the cutoff free for the optimizer.
    TruncatedMainInversion { h_min: Option<f64> },
}

impl PolicyFamily {
    /// CSI the family needs in order to be evaluated.
    pub fn required_csi(&self) -> Csi {
        match self {
            PolicyFamily::FullInversion => Csi::Full,
            _ => Csi::Main,
        }
    }

    pub fn usable_with(&self, csi: Csi) -> bool {
        csi == Csi::Full || self.required_csi() == Csi::Main
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyFamily::Constant => "const",
            PolicyFamily::FullInversion => "full-inv",
            PolicyFamily::MainInversion => "main-inv",
            PolicyFamily::TruncatedMainInversion { .. } => "trunc-inv",
        }
    }
}

impl fmt::Display for PolicyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyFamily::TruncatedMainInversion { h_min: Some(h) } => write!(f, "trunc-inv:{h}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for PolicyFamily {
    type Err = Error;

    /// Grammar: `const`, `full-inv`, `main-inv`, `trunc-inv[:<h_min>]`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.split_once(':') {
            None => match lower.as_str() {
                "const" => Ok(PolicyFamily::Constant),
                "full-inv" => Ok(PolicyFamily::FullInversion),
                "main-inv" => Ok(PolicyFamily::MainInversion),
                "trunc-inv" => Ok(PolicyFamily::TruncatedMainInversion { h_min: None }),
                _ => Err(Error::Parse(format!("unknown policy `{s}`"))),
            },
            Some(("trunc-inv", v)) => {
                let h: f64 = v.parse().map_err(|e| Error::Parse(format!("`{s}`: {e}")))?;
                if !(h > 0.0 && h.is_finite()) {
                    return Err(Error::Parse(format!("`{s}`: cutoff must be positive")));
                }
                Ok(PolicyFamily::TruncatedMainInversion { h_min: Some(h) })
            }
            Some(_) => Err(Error::Parse(format!("unknown policy `{s}`"))),
        }
    }
}

/// Power rule with its scale fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PowerRule {
    Constant { power: f64 },
    /// P(h) = c / min(h_m, h_e)
    FullInversion { c: f64 },
    /// P(h_m) = c / h_m
    MainInversion { c: f64 },
    /// P(h_m) = c / h_m for h_m ≥ h_min, else 0
    TruncatedMainInversion { c: f64, h_min: f64 },
}

/// A calibrated power-control policy together with the CSI it runs under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPolicy {
    pub rule: PowerRule,
    pub csi: Csi,
}

impl PowerPolicy {
    pub fn new(rule: PowerRule, csi: Csi) -> Self {
        Self { rule, csi }
    }

    /// Policy running under the least CSI its rule needs.
    pub fn from_rule(rule: PowerRule) -> Self {
        let csi = match rule {
            PowerRule::FullInversion { .. } => Csi::Full,
            _ => Csi::Main,
        };
        Self { rule, csi }
    }

    pub fn family(&self) -> PolicyFamily {
        match self.rule {
            PowerRule::Constant { .. } => PolicyFamily::Constant,
            PowerRule::FullInversion { .. } => PolicyFamily::FullInversion,
            PowerRule::MainInversion { .. } => PolicyFamily::MainInversion,
            PowerRule::TruncatedMainInversion { h_min, .. } => {
                PolicyFamily::TruncatedMainInversion { h_min: Some(h_min) }
            }
        }
    }

    /// The scale constant (the power itself for the constant family).
    pub fn scale(&self) -> f64 {
        match self.rule {
            PowerRule::Constant { power } => power,
            PowerRule::FullInversion { c }
            | PowerRule::MainInversion { c }
            | PowerRule::TruncatedMainInversion { c, .. } => c,
        }
    }

    /// Power allocated in `state`.
    pub fn power(&self, state: ChannelState) -> Result<f64> {
        if let (PowerRule::FullInversion { .. }, Csi::Main) = (self.rule, self.csi) {
            return Err(Error::Capability { family: "full-inv".into() });
        }
        Ok(self.power_at(state))
    }

    pub(crate) fn power_at(&self, state: ChannelState) -> f64 {
        match self.rule {
            PowerRule::Constant { power } => power,
            PowerRule::FullInversion { c } => c / state.min_gain(),
            PowerRule::MainInversion { c } => c / state.h_m,
            PowerRule::TruncatedMainInversion { c, h_min } => {
                if state.h_m >= h_min {
                    c / state.h_m
                } else {
                    0.0
                }
            }
        }
    }

    /// Kinks of P(h) in h_m for fixed h_e.
    pub(crate) fn kinks(&self, h_e: f64) -> Vec<f64> {
        match self.rule {
            PowerRule::FullInversion { .. } => vec![h_e],
            PowerRule::TruncatedMainInversion { h_min, .. } => vec![h_min],
            _ => Vec::new(),
        }
    }
}

/// E[P(h)] by quadrature.
pub fn expected_power(
    policy: &PowerPolicy,
    dist_m: &FadingDistribution,
    dist_e: &FadingDistribution,
    quad: &Integrator,
) -> Result<f64> {
    let p = *policy;
    Ok(quad
        .expect2(dist_m, dist_e, |h| p.power_at(h), &[], |h_e| p.kinks(h_e))?
        .mean)
}

/// E[1{h_m ≥ h_min} / h_m].
pub fn truncated_inverse_moment(
    dist_m: &FadingDistribution,
    h_min: f64,
    quad: &Integrator,
) -> Result<f64> {
    quad.expect1(dist_m, |x| if x >= h_min { 1.0 / x } else { 0.0 }, &[h_min])
}

/// Fixes the scale of `family` so that E[P(h)] = `p_bar`.
pub fn calibrate(
    family: PolicyFamily,
    dist_m: &FadingDistribution,
    dist_e: &FadingDistribution,
    p_bar: f64,
    quad: &Integrator,
) -> Result<PowerPolicy> {
    if !(p_bar >= 0.0 && p_bar.is_finite()) {
        return Err(Error::Argument(format!("average power must be finite and >= 0, got {p_bar}")));
    }
    let rule = match family {
        PolicyFamily::Constant => PowerRule::Constant { power: p_bar },
        PolicyFamily::FullInversion => match inverse_min_moment(dist_m, dist_e, quad)? {
            InverseMoment::Finite(m) => PowerRule::FullInversion { c: p_bar / m },
            InverseMoment::Divergent => {
                return Err(Error::NonInvertible { moment: "E[1/min(h_m, h_e)]".into() })
            }
        },
        PolicyFamily::MainInversion => match dist_m.inverse_moment() {
            InverseMoment::Finite(m) => PowerRule::MainInversion { c: p_bar / m },
            InverseMoment::Divergent => {
                return Err(Error::NonInvertible { moment: "E[1/h_m]".into() })
            }
        },
        PolicyFamily::TruncatedMainInversion { h_min: None } => {
            return Err(Error::Argument("trunc-inv needs a cutoff to be calibrated".into()))
        }
        PolicyFamily::TruncatedMainInversion { h_min: Some(h_min) } => {
            let m = truncated_inverse_moment(dist_m, h_min, quad)?;
            if m > 0.0 {
                PowerRule::TruncatedMainInversion { c: p_bar / m, h_min }
            } else if p_bar == 0.0 {
                PowerRule::TruncatedMainInversion { c: 0.0, h_min }
            } else {
                return Err(Error::Constraint(format!(
                    "cutoff {h_min} leaves no main-channel mass to spend power on"
                )));
            }
        }
    };
    Ok(PowerPolicy::from_rule(rule))
}
