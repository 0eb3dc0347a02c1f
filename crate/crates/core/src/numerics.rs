//! Numeric kernels shared by the bound and simulation code: Gauss–Legendre
//! quadrature on finite intervals and on the half-line, bisection, golden
//! section maximization and seeded Monte Carlo expectations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{ChannelState, FadingDistribution};

/// Default number of quadrature nodes per dimension (and per piece).
pub const DEFAULT_NODES: usize = 200;

/// Default Monte Carlo sample count.
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

/// A numeric estimate of an expectation.
///
/// Quadrature results carry `stderr == 0`; Monte Carlo results carry the
/// standard error of the sample mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(mean: f64, samples: usize) -> Self {
        Self {
            mean,
            stderr: 0.0,
            samples: samples.max(1),
        }
    }

    /// Pools estimates computed on disjoint sample sets (e.g. disjoint
    /// streams). The result does not depend on the order of `parts`.
    pub fn pool(parts: &[Estimate]) -> Option<Estimate> {
        let total: usize = parts.iter().map(|p| p.samples).sum();
        if total == 0 {
            return None;
        }
        let n = total as f64;
        // Sort by (mean, samples) so the float summation order is fixed.
        let mut sorted = parts.to_vec();
        sorted.sort_by(|a, b| a.mean.total_cmp(&b.mean).then(a.samples.cmp(&b.samples)));
        let mean = sorted.iter().map(|p| p.mean * p.samples as f64).sum::<f64>() / n;
        // Reconstruct per-part sums of squares from the sample variances.
        let ss: f64 = sorted
            .iter()
            .map(|p| {
                let k = p.samples as f64;
                let var = p.stderr * p.stderr * k;
                var * (k - 1.0).max(0.0) + k * (p.mean - mean).powi(2)
            })
            .sum();
        let var = if total > 1 { ss / (n - 1.0) } else { 0.0 };
        Some(Estimate {
            mean,
            stderr: (var / n).sqrt(),
            samples: total,
        })
    }
}

/// Seed and stream selecting one reproducible pseudo-random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Gauss–Legendre rule mapped onto the unit interval (0, 1).
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule. Nodes are roots of P_n found by Newton
    /// iteration from the Chebyshev-like initial guess.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("quadrature needs at least one node".into()));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] -> (0, 1)
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights on (0, 1).
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        let width = b - a;
        let mut acc = 0.0;
        for (i, (t, w)) in self.iter().enumerate() {
            let x = a + width * t;
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFinite { node: i, x, value: v });
            }
            acc += w * v;
        }
        Ok(acc * width)
    }

    /// Integral of `f` over `[start, ∞)` via x = start + scale·t/(1−t).
    pub fn integrate_tail<F: Fn(f64) -> f64>(&self, f: F, start: f64, scale: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (i, (t, w)) in self.iter().enumerate() {
            let s = 1.0 - t;
            let x = start + scale * t / s;
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFinite { node: i, x, value: v });
            }
            acc += w * v * scale / (s * s);
        }
        Ok(acc)
    }

    /// Integral over (0, ∞) split at the given breakpoints. Breakpoints
    /// outside (0, ∞) are ignored; the last piece is a tail integral with
    /// the given scale.
    pub fn integrate_pieces<F: Fn(f64) -> f64>(
        &self,
        f: F,
        breaks: &[f64],
        tail_scale: f64,
    ) -> Result<f64> {
        let mut pts: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|b| b.is_finite() && *b > 0.0)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut acc = 0.0;
        let mut lo = 0.0;
        for &p in &pts {
            acc += self.integrate(&f, lo, p)?;
            lo = p;
        }
        acc += self.integrate_tail(&f, lo, tail_scale)?;
        Ok(acc)
    }
}

/// Expectations over fading laws by piecewise Gauss–Legendre quadrature.
///
/// Continuous laws are integrated over (0, ∞) split at caller-supplied
/// breakpoints (kinks of the integrand); point masses are evaluated
/// directly. Joint expectations over independent (h_m, h_e) use h_e as the
/// outer variable, so inner breakpoints may depend on it.
#[derive(Debug, Clone)]
pub struct Integrator {
    rule: GaussLegendre,
}

impl Integrator {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes < 8 {
            return Err(Error::Argument(format!(
                "quadrature needs at least 8 nodes, got {nodes}"
            )));
        }
        Ok(Self { rule: GaussLegendre::new(nodes)? })
    }

    pub fn nodes(&self) -> usize {
        self.rule.len()
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }

    /// E[f(X)] for X ~ `dist`.
    pub fn expect1<F: Fn(f64) -> f64>(
        &self,
        dist: &FadingDistribution,
        f: F,
        breaks: &[f64],
    ) -> Result<f64> {
        match dist.density() {
            None => {
                let v = f(dist.mean());
                if !v.is_finite() {
                    return Err(Error::NonFinite { node: 0, x: dist.mean(), value: v });
                }
                Ok(v)
            }
            Some(pdf) => self
                .rule
                .integrate_pieces(|x| weighted(f(x), pdf(x)), breaks, dist.mean()),
        }
    }

    /// E[f(h)] for independent h_m ~ `dist_m`, h_e ~ `dist_e`.
    pub fn expect2<F, B>(
        &self,
        dist_m: &FadingDistribution,
        dist_e: &FadingDistribution,
        f: F,
        outer_breaks: &[f64],
        inner_breaks: B,
    ) -> Result<Estimate>
    where
        F: Fn(ChannelState) -> f64,
        B: Fn(f64) -> Vec<f64>,
    {
        let inner = |h_e: f64| -> Result<f64> {
            let breaks = inner_breaks(h_e);
            self.expect1(dist_m, |h_m| f(ChannelState::new_unchecked(h_m, h_e)), &breaks)
        };
        // Inner errors cannot cross the outer closure boundary directly.
        let failure = std::cell::RefCell::new(None);
        let mean = self.expect1(
            dist_e,
            |h_e| match inner(h_e) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            outer_breaks,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let evals = self.nodes() * self.nodes();
        Ok(Estimate::exact(mean?, evals))
    }
}

// f·pdf with 0·∞ taken as 0 where the density has underflowed.
fn weighted(f: f64, pdf: f64) -> f64 {
    if pdf == 0.0 && !f.is_nan() {
        0.0
    } else {
        f * pdf
    }
}

// Legendre polynomial P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integral of `f` over (0, ∞) with the map x = t/(1−t) and `nodes`
/// Gauss–Legendre points on (0, 1). `f` must already include any density
/// weight.
pub fn integrate_halfline<F: Fn(f64) -> f64>(f: F, nodes: usize) -> Result<f64> {
    if nodes < 8 {
        return Err(Error::Argument(format!(
            "half-line quadrature needs at least 8 nodes, got {nodes}"
        )));
    }
    GaussLegendre::new(nodes)?.integrate_tail(f, 0.0, 1.0)
}

/// Root of `g` on `[lo, hi]` by bisection, stopping once the bracket is no
/// wider than `tol`.
pub fn bisect<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    bisect_counted(g, lo, hi, tol).map(|(x, _)| x)
}

/// As [`bisect`], also returning the number of halvings performed.
pub fn bisect_counted<G: Fn(f64) -> f64>(
    g: G,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<(f64, usize)> {
    if !(tol > 0.0) || !(lo <= hi) {
        return Err(Error::Argument(format!(
            "bisect needs lo <= hi and tol > 0 (lo={lo}, hi={hi}, tol={tol})"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    let ga = g(a);
    let gb = g(b);
    if ga.is_nan() || gb.is_nan() {
        return Err(Error::NonFinite {
            node: 0,
            x: if ga.is_nan() { a } else { b },
            value: f64::NAN,
        });
    }
    if ga == 0.0 {
        return Ok((a, 0));
    }
    if gb == 0.0 {
        return Ok((b, 0));
    }
    if ga.signum() == gb.signum() {
        return Err(Error::NoBracket { lo, hi, g_lo: ga, g_hi: gb });
    }
    let rising = ga < 0.0;
    let mut iterations = 0;
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        iterations += 1;
        let gm = g(mid);
        if gm == 0.0 {
            return Ok((mid, iterations));
        }
        if (gm < 0.0) == rising {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((0.5 * (a + b), iterations))
}

/// Maximizer of a unimodal `f` on `[lo, hi]` by golden-section search.
/// Returns the midpoint of the final bracket and the value there.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    if !(lo < hi) {
        return Err(Error::Argument(format!("golden_max needs lo < hi (lo={lo}, hi={hi})")));
    }
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("golden_max needs tol > 0, got {tol}")));
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)))
}

/// Monte Carlo estimate of E[f(h)] with h_m ~ `dist_m` and h_e ~ `dist_e`
/// drawn independently from the stream selected by `seed`.
pub fn mc_expect<F: Fn(ChannelState) -> f64>(
    f: F,
    dist_m: &FadingDistribution,
    dist_e: &FadingDistribution,
    n: usize,
    seed: RngSeed,
) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::Argument("Monte Carlo needs at least one sample".into()));
    }
    let mut rng = seed.rng();
    let sm = dist_m.sampler();
    let se = dist_e.sampler();
    // Welford accumulation keeps the variance stable at 10^7 samples.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        let state = ChannelState::new_unchecked(sm.draw(&mut rng), se.draw(&mut rng));
        let v = f(state);
        if !v.is_finite() {
            return Err(Error::NonFinite { node: i, x: state.h_m, value: v });
        }
        let k = (i + 1) as f64;
        let delta = v - mean;
        mean += delta / k;
        m2 += delta * (v - mean);
    }
    let var = if n > 1 { m2 / (n as f64 - 1.0) } else { 0.0 };
    Ok(Estimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        samples: n,
    })
}
