//! Channel power-gain laws, channel states and the inverse moments that
//! decide whether channel inversion is feasible.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numerics::{Integrator, RngSeed};

/// One fading realization: main and eavesdropper power gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub h_m: f64,
    pub h_e: f64,
}

impl ChannelState {
    pub fn new(h_m: f64, h_e: f64) -> Result<Self> {
        if !(h_m > 0.0 && h_m.is_finite() && h_e > 0.0 && h_e.is_finite()) {
            return Err(Error::Argument(format!(
                "channel gains must be positive and finite (h_m={h_m}, h_e={h_e})"
            )));
        }
        Ok(Self { h_m, h_e })
    }

    pub(crate) fn new_unchecked(h_m: f64, h_e: f64) -> Self {
        Self { h_m, h_e }
    }

    pub fn min_gain(&self) -> f64 {
        self.h_m.min(self.h_e)
    }
}

/// Law of a channel power gain. All parameters are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FadingDistribution {
    /// `scale · Y` with `Y` chi-square with `dof` degrees of freedom.
    ChiSquare { dof: u32, scale: f64 },
    Gamma { shape: f64, scale: f64 },
    Exponential { mean: f64 },
    /// Point mass; not absolutely continuous.
    Degenerate { value: f64 },
}

/// Result of an inverse-moment computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseMoment {
    Finite(f64),
    Divergent,
}

impl InverseMoment {
    pub fn finite(self) -> Option<f64> {
        match self {
            InverseMoment::Finite(v) => Some(v),
            InverseMoment::Divergent => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, InverseMoment::Finite(_))
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Argument(format!("{name} must be positive and finite, got {v}")))
    }
}

impl FadingDistribution {
    pub fn chi_square(dof: u32) -> Result<Self> {
        Self::chi_square_scaled(dof, 1.0)
    }

    pub fn chi_square_scaled(dof: u32, scale: f64) -> Result<Self> {
        if dof == 0 {
            return Err(Error::Argument("chi-square needs dof >= 1".into()));
        }
        Ok(Self::ChiSquare { dof, scale: positive("chi-square scale", scale)? })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        Ok(Self::Gamma {
            shape: positive("gamma shape", shape)?,
            scale: positive("gamma scale", scale)?,
        })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        Ok(Self::Exponential { mean: positive("exponential mean", mean)? })
    }

    pub fn degenerate(value: f64) -> Result<Self> {
        Ok(Self::Degenerate { value: positive("degenerate value", value)? })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::ChiSquare { dof, scale } => Self::chi_square_scaled(dof, scale).map(|_| ()),
            Self::Gamma { shape, scale } => Self::gamma(shape, scale).map(|_| ()),
            Self::Exponential { mean } => Self::exponential(mean).map(|_| ()),
            Self::Degenerate { value } => Self::degenerate(value).map(|_| ()),
        }
    }

    /// Gamma (shape, scale) representation of the continuous families.
    pub fn as_gamma(&self) -> Option<(f64, f64)> {
        match *self {
            Self::ChiSquare { dof, scale } => Some((dof as f64 / 2.0, 2.0 * scale)),
            Self::Gamma { shape, scale } => Some((shape, scale)),
            Self::Exponential { mean } => Some((1.0, mean)),
            Self::Degenerate { .. } => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Self::Degenerate { .. })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Degenerate { value } => value,
            _ => {
                let (k, theta) = self.as_gamma().expect("continuous family");
                k * theta
            }
        }
    }

    /// Infimum of the support (0 for the continuous families).
    pub fn support_inf(&self) -> f64 {
        match *self {
            Self::Degenerate { value } => value,
            _ => 0.0,
        }
    }

    /// Supremum of the support (∞ for the continuous families).
    pub fn support_sup(&self) -> f64 {
        match *self {
            Self::Degenerate { value } => value,
            _ => f64::INFINITY,
        }
    }

    /// Density at `x > 0`.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Argument(format!("density argument must be positive, got {x}")));
        }
        match *self {
            Self::Degenerate { .. } => Err(Error::NotContinuous(self.to_string())),
            Self::ChiSquare { dof, scale } => {
                let y = x / scale;
                let half = dof as f64 / 2.0;
                let log_p = (half - 1.0) * y.ln() - y / 2.0 - half * 2f64.ln() - ln_gamma(half);
                Ok(log_p.exp() / scale)
            }
            Self::Exponential { mean } => Ok((-x / mean).exp() / mean),
            Self::Gamma { shape, scale } => Ok(gamma_pdf(shape, scale, x)),
        }
    }

    /// Density closure for hot quadrature loops. `None` for point masses.
    pub(crate) fn density(&self) -> Option<impl Fn(f64) -> f64> {
        let (k, theta) = self.as_gamma()?;
        let log_norm = -ln_gamma(k) - k * theta.ln();
        Some(move |x: f64| {
            if x <= 0.0 {
                return 0.0;
            }
            ((k - 1.0) * x.ln() - x / theta + log_norm).exp()
        })
    }

    /// Exponent `a` with density ~ C·x^a near 0; E[1/X] is finite iff
    /// `a > 0`. `None` for point masses, which put no mass near zero.
    pub fn small_x_exponent(&self) -> Option<f64> {
        self.as_gamma().map(|(k, _)| k - 1.0)
    }

    pub fn sampler(&self) -> Sampler {
        match *self {
            Self::ChiSquare { dof, scale } => {
                Sampler::ChiSquare(ChiSquared::new(dof as f64).expect("validated dof"), scale)
            }
            Self::Gamma { shape, scale } => {
                Sampler::Gamma(Gamma::new(shape, scale).expect("validated gamma"))
            }
            Self::Exponential { mean } => Sampler::Exp(Exp::new(1.0 / mean).expect("validated mean")),
            Self::Degenerate { value } => Sampler::Const(value),
        }
    }

    /// `n` iid draws, reproducible for a given seed.
    pub fn sample(&self, seed: RngSeed, n: usize) -> Vec<f64> {
        let mut rng = seed.rng();
        let s = self.sampler();
        (0..n).map(|_| s.draw(&mut rng)).collect()
    }

    /// E[1/h]. Finite iff the density vanishes at 0 (shape > 1).
    pub fn inverse_moment(&self) -> InverseMoment {
        match *self {
            Self::Degenerate { value } => InverseMoment::Finite(1.0 / value),
            _ => {
                let (k, theta) = self.as_gamma().expect("continuous family");
                if k > 1.0 {
                    InverseMoment::Finite(1.0 / ((k - 1.0) * theta))
                } else {
                    InverseMoment::Divergent
                }
            }
        }
    }
}

fn gamma_pdf(shape: f64, scale: f64, x: f64) -> f64 {
    ((shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()).exp()
}

/// E[1/min(h_m, h_e)] for independent gains.
///
/// Near zero the density of the minimum behaves like the sum of the two
/// densities, so the moment is finite iff every continuous coordinate has a
/// positive small-x exponent. Divergence is decided from that rule; the
/// finite value comes from 2-D quadrature split on the diagonal.
pub fn inverse_min_moment(
    dist_m: &FadingDistribution,
    dist_e: &FadingDistribution,
    quad: &Integrator,
) -> Result<InverseMoment> {
    let divergent = [dist_m, dist_e]
        .iter()
        .filter_map(|d| d.small_x_exponent())
        .any(|a| a <= 0.0);
    if divergent {
        return Ok(InverseMoment::Divergent);
    }
    let est = quad.expect2(dist_m, dist_e, |h| 1.0 / h.min_gain(), &[], |h_e| vec![h_e])?;
    Ok(InverseMoment::Finite(est.mean))
}

/// Draw source for one fading law.
#[derive(Debug, Clone, Copy)]
pub enum Sampler {
    ChiSquare(ChiSquared<f64>, f64),
    Gamma(Gamma<f64>),
    Exp(Exp<f64>),
    Const(f64),
}

impl Sampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Guard against the (measure-zero) exact zero so states stay valid.
        let v = match self {
            Sampler::ChiSquare(d, s) => s * d.sample(rng),
            Sampler::Gamma(d) => d.sample(rng),
            Sampler::Exp(d) => d.sample(rng),
            Sampler::Const(v) => return *v,
        };
        v.max(f64::MIN_POSITIVE)
    }
}

impl fmt::Display for FadingDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::ChiSquare { dof, scale: 1.0 } => write!(f, "chisq:{dof}"),
            Self::ChiSquare { dof, scale } => write!(f, "chisq:{dof}:{scale}"),
            Self::Gamma { shape, scale } => write!(f, "gamma:{shape}:{scale}"),
            Self::Exponential { mean } => write!(f, "exp:{mean}"),
            Self::Degenerate { value } => write!(f, "const:{value}"),
        }
    }
}

impl FromStr for FadingDistribution {
    type Err = Error;

    /// Grammar: `chisq:<dof>[:<scale>]`, `gamma:<shape>:<scale>`,
    /// `exp:<mean>`, `const:<value>`; case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let mut parts = lower.split(':');
        let kind = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let num = |i: usize| -> Result<f64> {
            args.get(i)
                .ok_or_else(|| Error::Parse(format!("`{s}`: missing parameter {}", i + 1)))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("`{s}`: {e}")))
        };
        let arity = |lo: usize, hi: usize| -> Result<()> {
            if args.len() < lo || args.len() > hi {
                Err(Error::Parse(format!("`{s}`: wrong number of parameters")))
            } else {
                Ok(())
            }
        };
        let dist = match kind {
            "chisq" | "chi2" => {
                arity(1, 2)?;
                let dof: u32 = args[0]
                    .parse()
                    .map_err(|e| Error::Parse(format!("`{s}`: degrees of freedom: {e}")))?;
                let scale = if args.len() == 2 { num(1)? } else { 1.0 };
                Self::chi_square_scaled(dof, scale)
            }
            "gamma" => {
                arity(2, 2)?;
                Self::gamma(num(0)?, num(1)?)
            }
            "exp" => {
                arity(1, 1)?;
                Self::exponential(num(0)?)
            }
            "const" => {
                arity(1, 1)?;
                Self::degenerate(num(0)?)
            }
            other => return Err(Error::Parse(format!("unknown distribution `{other}` in `{s}`"))),
        };
        dist.map_err(|e| Error::Parse(format!("`{s}`: {e}")))
    }
}
