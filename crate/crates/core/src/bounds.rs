//! Upper and lower bounds on the delay-limited secrecy capacity, the
//! high-SNR limit, and the search over policy-family parameters.
//!
//! Policy optimization is a menu of families with at most one free scalar
//! each (the truncation cutoff or the key-share floor), searched by golden
//! section. The bounds are therefore bounds within those families.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{inverse_min_moment, FadingDistribution};
use crate::numerics::{bisect_counted, golden_max, Integrator};
use crate::policy::{calibrate, Csi, PolicyFamily, PowerPolicy};
use crate::rates::{
    delay_floor, direct_secret_floor, ergodic_secrecy_rate, key_rate, otp_rate_cap,
    reserved_key_rate, KeyShare,
};

/// Feasibility slack for lower-bound certificates.
pub const CERTIFICATE_TOL: f64 = 1e-9;

/// Channel laws and average power for one bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub dist_m: FadingDistribution,
    pub dist_e: FadingDistribution,
    pub p_bar: f64,
}

impl Scenario {
    pub fn new(dist_m: FadingDistribution, dist_e: FadingDistribution, p_bar: f64) -> Result<Self> {
        if !(p_bar >= 0.0 && p_bar.is_finite()) {
            return Err(Error::Argument(format!("average power must be finite and >= 0, got {p_bar}")));
        }
        dist_m.validate()?;
        dist_e.validate()?;
        Ok(Self { dist_m, dist_e, p_bar })
    }

    pub fn with_power(&self, p_bar: f64) -> Self {
        Self { p_bar, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    /// nats per channel use
    pub value: f64,
    pub policy: Option<PowerPolicy>,
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Lower bounds: the rate constraints hold at `value`. Always true for
    /// upper bounds.
    pub certificate: bool,
}

impl BoundResult {
    fn zero(policy: Option<PowerPolicy>) -> Self {
        Self {
            value: 0.0,
            policy,
            diagnostics: BTreeMap::new(),
            warnings: Vec::new(),
            certificate: true,
        }
    }
}

/// How the key-share function q(h) = max(h_e, floor) is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareChoice {
    Search,
    Fixed(KeyShare),
}

pub fn default_full_menu() -> Vec<PolicyFamily> {
    vec![PolicyFamily::Constant, PolicyFamily::FullInversion, PolicyFamily::MainInversion]
}

pub fn default_main_menu() -> Vec<PolicyFamily> {
    vec![PolicyFamily::Constant, PolicyFamily::MainInversion]
}

struct Candidate {
    value: f64,
    policy: PowerPolicy,
    diagnostics: BTreeMap<String, f64>,
    certificate: bool,
}

// Runs `eval` for every usable family of `menu`, optimizing a free cutoff,
// and keeps the best. Infeasible families are skipped with a warning; if
// none is left the constant-power policy is reported.
fn best_over_menu<E>(
    scenario: &Scenario,
    menu: &[PolicyFamily],
    csi: Csi,
    quad: &Integrator,
    eval: E,
) -> Result<BoundResult>
where
    E: Fn(&PowerPolicy) -> Result<Candidate>,
{
    let mut warnings = Vec::new();
    let mut best: Option<Candidate> = None;
    let consider = |c: Candidate, best: &mut Option<Candidate>| {
        if best.as_ref().is_none_or(|b| c.value > b.value) {
            *best = Some(c);
        }
    };
    for fam in menu {
        if !fam.usable_with(csi) {
            warnings.push(format!("{fam} skipped: needs full CSI"));
            continue;
        }
        match fam {
            PolicyFamily::TruncatedMainInversion { h_min: None } => {
                match best_cutoff(scenario, quad, &eval) {
                    Ok(c) => consider(c, &mut best),
                    Err(e) => warnings.push(format!("{fam} skipped: {e}")),
                }
            }
            _ => match calibrate(*fam, &scenario.dist_m, &scenario.dist_e, scenario.p_bar, quad) {
                Ok(policy) => consider(eval(&policy)?, &mut best),
                Err(e @ (Error::NonInvertible { .. } | Error::Constraint(_))) => {
                    warnings.push(format!("{fam} skipped: {e}"))
                }
                Err(e) => return Err(e),
            },
        }
    }
    let best = match best {
        Some(b) => b,
        None => {
            warnings.push("no feasible family in menu; reporting constant power".into());
            let policy = calibrate(
                PolicyFamily::Constant,
                &scenario.dist_m,
                &scenario.dist_e,
                scenario.p_bar,
                quad,
            )?;
            eval(&policy)?
        }
    };
    Ok(BoundResult {
        value: best.value.max(0.0),
        policy: Some(best.policy),
        diagnostics: best.diagnostics,
        warnings,
        certificate: best.certificate,
    })
}

fn best_cutoff<E>(scenario: &Scenario, quad: &Integrator, eval: &E) -> Result<Candidate>
where
    E: Fn(&PowerPolicy) -> Result<Candidate>,
{
    let at = |log_h: f64| -> Result<Candidate> {
        let fam = PolicyFamily::TruncatedMainInversion { h_min: Some(log_h.exp()) };
        let policy = calibrate(fam, &scenario.dist_m, &scenario.dist_e, scenario.p_bar, quad)?;
        eval(&policy)
    };
    let mean = scenario.dist_m.mean();
    let (lo, hi) = ((mean * 1e-3).ln(), (mean * 10.0).ln());
    let (arg, _) = golden_max(|u| at(u).map(|c| c.value).unwrap_or(f64::NEG_INFINITY), lo, hi, 1e-3)?;
    let mut c = at(arg)?;
    c.diagnostics.insert("h_min".into(), arg.exp());
    Ok(c)
}

fn upper_candidate(scenario: &Scenario, policy: &PowerPolicy, quad: &Integrator) -> Result<Candidate> {
    let (dm, de) = (&scenario.dist_m, &scenario.dist_e);
    let r_d = delay_floor(policy, dm, de);
    let r_s = ergodic_secrecy_rate(policy, dm, de, quad)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("r_s_expected".into(), r_s);
    diagnostics.insert("r_d_floor".into(), r_d);
    diagnostics.insert("scale".into(), policy.scale());
    Ok(Candidate { value: r_s.min(r_d), policy: *policy, diagnostics, certificate: true })
}

fn upper(scenario: &Scenario, menu: &[PolicyFamily], csi: Csi, quad: &Integrator) -> Result<BoundResult> {
    if scenario.p_bar == 0.0 {
        return Ok(BoundResult::zero(None));
    }
    best_over_menu(scenario, menu, csi, quad, |p| upper_candidate(scenario, p, quad))
}

/// Full-CSI upper bound: max over policies of min{E[R_s], ess-inf r_main}.
pub fn upper_full(scenario: &Scenario, menu: &[PolicyFamily], quad: &Integrator) -> Result<BoundResult> {
    upper(scenario, menu, Csi::Full, quad)
}

/// Main-CSI upper bound; only families that depend on h_m alone.
pub fn upper_main(scenario: &Scenario, menu: &[PolicyFamily], quad: &Integrator) -> Result<BoundResult> {
    upper(scenario, menu, Csi::Main, quad)
}

/// Value of the full-CSI scheme for one policy and key share: the
/// one-time-pad rate is a constant
/// `r_o = min{E[R_s′], ess-inf min(r_main, r_eve)}` and the value is
/// `ess-inf R_s″ + r_o`.
pub fn full_scheme_value(
    scenario: &Scenario,
    policy: &PowerPolicy,
    share: KeyShare,
    quad: &Integrator,
) -> Result<BoundResult> {
    let c = lower_full_candidate(scenario, policy, share, quad)?;
    Ok(BoundResult {
        value: c.value,
        policy: Some(c.policy),
        diagnostics: c.diagnostics,
        warnings: Vec::new(),
        certificate: c.certificate,
    })
}

fn lower_full_candidate(
    scenario: &Scenario,
    policy: &PowerPolicy,
    share: KeyShare,
    quad: &Integrator,
) -> Result<Candidate> {
    let (dm, de) = (&scenario.dist_m, &scenario.dist_e);
    let key = key_rate(policy, dm, de, share, quad)?;
    let cap = otp_rate_cap(policy, dm, de);
    let r_o = key.min(cap);
    let dprime = direct_secret_floor(policy, dm, de, share);
    let certificate = r_o <= key + CERTIFICATE_TOL && r_o <= cap + CERTIFICATE_TOL;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("key_rate_expected".into(), key);
    diagnostics.insert("r_o_cap".into(), cap);
    diagnostics.insert("r_o_chosen".into(), r_o);
    diagnostics.insert("r_s_dprime_floor".into(), dprime);
    diagnostics.insert("r_d_floor".into(), delay_floor(policy, dm, de));
    diagnostics.insert("key_share_floor".into(), share.floor);
    diagnostics.insert("scale".into(), policy.scale());
    Ok(Candidate { value: dprime + r_o, policy: *policy, diagnostics, certificate })
}

fn lower_full_best_share(
    scenario: &Scenario,
    policy: &PowerPolicy,
    choice: ShareChoice,
    quad: &Integrator,
) -> Result<Candidate> {
    let share = match choice {
        ShareChoice::Fixed(s) => return lower_full_candidate(scenario, policy, s, quad),
        ShareChoice::Search => KeyShare::EAVESDROPPER,
    };
    let base = lower_full_candidate(scenario, policy, share, quad)?;
    // With a continuous gain the direct-share floor is 0 for every floor
    // value, and E[R_s′] is non-increasing in it, so q = h_e is optimal.
    if !(scenario.dist_m.is_degenerate() && scenario.dist_e.is_degenerate()) {
        return Ok(base);
    }
    let top = 2.0 * scenario.dist_m.mean().max(scenario.dist_e.mean());
    let objective = |k: f64| {
        lower_full_candidate(scenario, policy, KeyShare { floor: k }, quad)
            .map(|c| c.value)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let (k, v) = golden_max(objective, 0.0, top, 1e-9 * top)?;
    if v > base.value {
        lower_full_candidate(scenario, policy, KeyShare { floor: k }, quad)
    } else {
        Ok(base)
    }
}

/// Full-CSI lower bound achieved by the two-stage one-time-pad scheme.
pub fn lower_full(
    scenario: &Scenario,
    menu: &[PolicyFamily],
    share: ShareChoice,
    quad: &Integrator,
) -> Result<BoundResult> {
    if scenario.p_bar == 0.0 {
        return Ok(BoundResult::zero(None));
    }
    best_over_menu(scenario, menu, Csi::Full, quad, |p| {
        lower_full_best_share(scenario, p, share, quad)
    })
}

/// The main-CSI rate equation R = min{K(R), R_d}, with
/// K(R) = E[(r_main − R − r_eve)^+] and R_d the delay floor.
#[derive(Debug, Clone)]
pub struct MainFixedPoint<'a> {
    scenario: &'a Scenario,
    policy: PowerPolicy,
    quad: &'a Integrator,
    r_d: f64,
}

/// Solution of [`MainFixedPoint`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub rate: f64,
    pub r_d: f64,
    pub key_rate_at_rate: f64,
    pub iterations: usize,
}

impl<'a> MainFixedPoint<'a> {
    pub fn new(scenario: &'a Scenario, policy: PowerPolicy, quad: &'a Integrator) -> Self {
        let r_d = delay_floor(&policy, &scenario.dist_m, &scenario.dist_e);
        Self { scenario, policy, quad, r_d }
    }

    pub fn delay_floor(&self) -> f64 {
        self.r_d
    }

    pub fn key_rate(&self, reserve: f64) -> Result<f64> {
        reserved_key_rate(&self.policy, &self.scenario.dist_m, &self.scenario.dist_e, reserve, self.quad)
    }

    /// f(R) = R − min{K(R), R_d}; strictly increasing.
    pub fn residual(&self, rate: f64) -> Result<f64> {
        Ok(rate - self.key_rate(rate)?.min(self.r_d))
    }

    /// Solves f(R) = 0 on [0, R_d]. f(0) ≤ 0 ≤ f(R_d), so the bracket is
    /// always valid.
    pub fn solve(&self, tol: f64) -> Result<FixedPointSolution> {
        if self.r_d <= 0.0 {
            return Ok(FixedPointSolution { rate: 0.0, r_d: 0.0, key_rate_at_rate: 0.0, iterations: 0 });
        }
        let failure = std::cell::RefCell::new(None);
        let f = |r: f64| match self.residual(r) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        };
        let (rate, iterations) = bisect_counted(f, 0.0, self.r_d, tol)?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(FixedPointSolution {
            rate,
            r_d: self.r_d,
            key_rate_at_rate: self.key_rate(rate)?,
            iterations,
        })
    }
}

/// Bisection tolerance for the main-CSI fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-10;

fn lower_main_candidate(scenario: &Scenario, policy: &PowerPolicy, quad: &Integrator) -> Result<Candidate> {
    let sol = MainFixedPoint::new(scenario, *policy, quad).solve(FIXED_POINT_TOL)?;
    // the rate is the bracket midpoint, so allow the bisection width
    let slack = CERTIFICATE_TOL.max(2.0 * FIXED_POINT_TOL);
    let certificate = sol.rate <= sol.key_rate_at_rate + slack && sol.rate <= sol.r_d + slack;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("r_d_floor".into(), sol.r_d);
    diagnostics.insert("key_rate_at_fixed_point".into(), sol.key_rate_at_rate);
    diagnostics.insert("fixed_point_iterations".into(), sol.iterations as f64);
    diagnostics.insert("r_s_expected".into(), ergodic_secrecy_rate(policy, &scenario.dist_m, &scenario.dist_e, quad)?);
    diagnostics.insert("scale".into(), policy.scale());
    Ok(Candidate { value: sol.rate, policy: *policy, diagnostics, certificate })
}

/// Main-CSI lower bound: the largest R with R ≤ R_d and
/// R ≤ E[(r_main − R − r_eve)^+].
pub fn lower_main(scenario: &Scenario, menu: &[PolicyFamily], quad: &Integrator) -> Result<BoundResult> {
    if scenario.p_bar == 0.0 {
        return Ok(BoundResult::zero(None));
    }
    best_over_menu(scenario, menu, Csi::Main, quad, |p| lower_main_candidate(scenario, p, quad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighSnrLimit {
    pub value: f64,
    /// E[1/min(h_m, h_e)] is finite, so full inversion is feasible.
    pub invertible: bool,
}

/// E[(ln(h_m/h_e))^+], the common high-SNR limit of the full-CSI bounds.
pub fn high_snr_limit(
    dist_m: &FadingDistribution,
    dist_e: &FadingDistribution,
    quad: &Integrator,
) -> Result<HighSnrLimit> {
    let value = quad
        .expect2(dist_m, dist_e, |h| (h.h_m / h.h_e).ln().max(0.0), &[], |h_e| vec![h_e])?
        .mean;
    let invertible = inverse_min_moment(dist_m, dist_e, quad)?.is_finite();
    Ok(HighSnrLimit { value, invertible })
}

/// All four bounds and the high-SNR limit at one average power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    pub p_bar: f64,
    pub upper_full: BoundResult,
    pub lower_full: BoundResult,
    pub upper_main: BoundResult,
    pub lower_main: BoundResult,
    pub high_snr_limit: HighSnrLimit,
}

pub fn all_bounds(
    scenario: &Scenario,
    full_menu: &[PolicyFamily],
    main_menu: &[PolicyFamily],
    share: ShareChoice,
    quad: &Integrator,
) -> Result<BoundSet> {
    Ok(BoundSet {
        p_bar: scenario.p_bar,
        upper_full: upper_full(scenario, full_menu, quad)?,
        lower_full: lower_full(scenario, full_menu, share, quad)?,
        upper_main: upper_main(scenario, main_menu, quad)?,
        lower_main: lower_main(scenario, main_menu, quad)?,
        high_snr_limit: high_snr_limit(&scenario.dist_m, &scenario.dist_e, quad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{mc_expect, RngSeed};
    use crate::policy::PowerRule;
    use crate::rates::RateFunctional;
    use approx::assert_abs_diff_eq;

    fn dist(s: &str) -> FadingDistribution {
        s.parse().unwrap()
    }

    fn scen(m: &str, e: &str, p: f64) -> Scenario {
        Scenario::new(dist(m), dist(e), p).unwrap()
    }

    fn quad() -> Integrator {
        Integrator::new(200).unwrap()
    }

    #[test]
    fn zero_power_gives_zero() {
        let q = quad();
        let s = scen("chisq:4", "chisq:4", 0.0);
        let set = all_bounds(&s, &default_full_menu(), &default_main_menu(), ShareChoice::Search, &q).unwrap();
        for v in [set.upper_full.value, set.lower_full.value, set.upper_main.value, set.lower_main.value] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn identical_point_masses_give_zero() {
        let q = quad();
        for p in [1.0, 100.0] {
            let s = scen("const:2", "const:2", p);
            assert_eq!(upper_full(&s, &default_full_menu(), &q).unwrap().value, 0.0);
            assert_eq!(upper_main(&s, &default_main_menu(), &q).unwrap().value, 0.0);
            assert_eq!(lower_main(&s, &default_main_menu(), &q).unwrap().value, 0.0);
            assert_eq!(lower_full(&s, &default_full_menu(), ShareChoice::Search, &q).unwrap().value, 0.0);
        }
    }

    #[test]
    fn upper_full_chisq_30db_branches() {
        let q = quad();
        let s = scen("chisq:4", "chisq:4", 1000.0);
        let res = upper_full(&s, &[PolicyFamily::FullInversion], &q).unwrap();
        let p = res.policy.unwrap();
        let c = p.scale();
        let mc = RateFunctional::Secrecy
            .monte_carlo(&p, &s.dist_m, &s.dist_e, 1_000_000, RngSeed::new(50, 0))
            .unwrap();
        let rs = res.diagnostics["r_s_expected"];
        assert!((rs - mc.mean).abs() < 4.0 * mc.stderr);
        // the secrecy branch binds: E[R_s] ≈ 0.44 ≪ ln(1 + c)
        assert_abs_diff_eq!(res.value, rs.min(c.ln_1p()), epsilon = 1e-15);
        assert!(rs < c.ln_1p());
    }

    #[test]
    fn lower_full_with_inversion_is_min_of_mean_and_cap() {
        // q = h_e and full inversion: value = min{E[R_s], ln(1 + c)}
        let q = quad();
        let s = scen("gamma:2:1", "gamma:2:1", 20.0);
        let policy = calibrate(PolicyFamily::FullInversion, &s.dist_m, &s.dist_e, 20.0, &q).unwrap();
        let res = full_scheme_value(&s, &policy, KeyShare::EAVESDROPPER, &q).unwrap();
        let rs = ergodic_secrecy_rate(&policy, &s.dist_m, &s.dist_e, &q).unwrap();
        assert_abs_diff_eq!(res.value, rs.min(policy.scale().ln_1p()), epsilon = 1e-12);
        assert!(res.certificate);
    }

    #[test]
    fn lower_full_point_masses() {
        let q = quad();
        for (hm, he, p) in [(4.0, 1.0, 1.0), (4.0, 1.0, 50.0), (10.0, 0.2, 3.0)] {
            let s = scen(&format!("const:{hm}"), &format!("const:{he}"), p);
            let policy = PowerPolicy::from_rule(PowerRule::Constant { power: p });
            let res = full_scheme_value(&s, &policy, KeyShare::EAVESDROPPER, &q).unwrap();
            let rm = (p * hm).ln_1p();
            let re = (p * he).ln_1p();
            assert_abs_diff_eq!(res.value, (rm - re).min(re), epsilon = 1e-12);
        }
    }

    #[test]
    fn lower_full_share_search_on_point_masses() {
        // q above h_e moves rate into the direct share, which has a positive
        // floor for point masses; the searched value can only improve.
        let q = quad();
        let s = scen("const:4", "const:1", 1.0);
        let fixed = lower_full(&s, &[PolicyFamily::Constant], ShareChoice::Fixed(KeyShare::EAVESDROPPER), &q).unwrap();
        let searched = lower_full(&s, &[PolicyFamily::Constant], ShareChoice::Search, &q).unwrap();
        assert!(searched.value >= fixed.value - 1e-12);
        // all of R_s can be carried: value → ln(5/2) as q → h_m
        assert_abs_diff_eq!(searched.value, (5.0f64 / 2.0).ln(), epsilon = 1e-6);
        let upper = upper_full(&s, &[PolicyFamily::Constant], &q).unwrap();
        assert!(searched.value <= upper.value + 1e-12);
    }

    #[test]
    fn upper_main_strong_eavesdropper() {
        let q = quad();
        let s = scen("chisq:4", "const:1e9", 100.0);
        let res = upper_main(&s, &[PolicyFamily::MainInversion], &q).unwrap();
        assert!(res.value < 1e-3, "{}", res.value);
    }

    #[test]
    fn upper_main_chisq_20db() {
        let q = quad();
        let s = scen("chisq:4", "chisq:4", 100.0);
        let res = upper_main(&s, &[PolicyFamily::MainInversion], &q).unwrap();
        let c = res.policy.unwrap().scale();
        assert_abs_diff_eq!(c, 200.0, epsilon = 1e-9);
        let p = res.policy.unwrap();
        let mc = mc_expect(
            |h| (c.ln_1p() - (c * h.h_e / h.h_m).ln_1p()).max(0.0),
            &s.dist_m,
            &s.dist_e,
            1_000_000,
            RngSeed::new(51, 0),
        )
        .unwrap();
        let rs = ergodic_secrecy_rate(&p, &s.dist_m, &s.dist_e, &q).unwrap();
        assert!((rs - mc.mean).abs() < 4.0 * mc.stderr);
        assert_abs_diff_eq!(res.value, rs.min(c.ln_1p()), epsilon = 1e-15);
    }

    #[test]
    fn lower_main_degenerate_cases() {
        let q = quad();
        // eavesdropper at least as strong as the main channel in every state
        let s = scen("const:1", "const:2", 10.0);
        assert_eq!(lower_main(&s, &default_main_menu(), &q).unwrap().value, 0.0);
        // eavesdropper blind: K(R) = ln(1 + c) − R even though K(0) = R_d,
        // so the data rate and the key rate split the main rate evenly
        let s = scen("chisq:4", "const:1e-12", 10.0);
        let res = lower_main(&s, &[PolicyFamily::MainInversion], &q).unwrap();
        let c = res.policy.unwrap().scale();
        assert_abs_diff_eq!(res.diagnostics["r_d_floor"], c.ln_1p(), epsilon = 1e-12);
        assert_abs_diff_eq!(res.value, c.ln_1p() / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn lower_main_matches_grid_scan() {
        let q = Integrator::new(64).unwrap();
        let s = scen("chisq:4", "chisq:4", 100.0);
        let policy = calibrate(PolicyFamily::MainInversion, &s.dist_m, &s.dist_e, 100.0, &q).unwrap();
        let fp = MainFixedPoint::new(&s, policy, &q);
        let sol = fp.solve(FIXED_POINT_TOL).unwrap();
        let n = 2000;
        let step = fp.delay_floor() / n as f64;
        let mut prev = f64::NEG_INFINITY;
        let mut scan = None;
        for i in 0..=n {
            let r = i as f64 * step;
            let f = fp.residual(r).unwrap();
            assert!(f > prev);
            prev = f;
            if scan.is_none() && f >= 0.0 {
                scan = Some(r);
            }
        }
        let scan = scan.unwrap();
        assert!((sol.rate - scan).abs() <= step, "{} vs {}", sol.rate, scan);
        assert!(sol.rate > 0.01);
    }

    #[test]
    fn high_snr_limit_exponential() {
        let q = quad();
        let e = dist("exp:1");
        let lim = high_snr_limit(&e, &e, &q).unwrap();
        assert!((lim.value - std::f64::consts::LN_2).abs() < 1e-4, "{}", lim.value);
        assert!(!lim.invertible);
    }

    #[test]
    fn high_snr_limit_symmetric_law() {
        let q = quad();
        let d = dist("gamma:2:1");
        let lim = high_snr_limit(&d, &d, &q).unwrap();
        let abs = q.expect2(&d, &d, |h| (h.h_m / h.h_e).ln().abs(), &[], |h_e| vec![h_e]).unwrap();
        assert_abs_diff_eq!(lim.value, abs.mean / 2.0, epsilon = 1e-8);
        assert!(lim.invertible);
    }

    #[test]
    fn ordering_and_monotonicity_on_grid() {
        let q = Integrator::new(96).unwrap();
        for d in ["chisq:4", "gamma:2:1"] {
            let mut prev = (0.0, 0.0);
            for db in (0..=40).step_by(8) {
                let s = scen(d, d, 10f64.powf(db as f64 / 10.0));
                let set = all_bounds(&s, &default_full_menu(), &default_main_menu(), ShareChoice::Search, &q).unwrap();
                assert!(set.upper_full.value >= set.lower_full.value - 1e-6, "{d} {db}");
                assert!(set.upper_main.value >= set.lower_main.value - 1e-6, "{d} {db}");
                assert!(set.upper_full.value >= set.upper_main.value - 1e-12);
                assert!(set.upper_full.value >= prev.0 - 1e-9);
                assert!(set.lower_full.value >= prev.1 - 1e-9);
                assert!(set.lower_full.certificate && set.lower_main.certificate);
                prev = (set.upper_full.value, set.lower_full.value);
            }
        }
    }

    #[test]
    fn infeasible_menu_falls_back_to_constant() {
        let q = quad();
        let s = scen("exp:1", "exp:1", 10.0);
        let res = upper_full(&s, &[PolicyFamily::FullInversion], &q).unwrap();
        assert_eq!(res.policy.unwrap().family(), PolicyFamily::Constant);
        assert_eq!(res.value, 0.0);
        assert!(!res.warnings.is_empty());
    }

    #[test]
    fn free_cutoff_is_searched() {
        let q = Integrator::new(48).unwrap();
        let s = scen("const:2", "chisq:4", 10.0);
        let res = upper_main(&s, &[PolicyFamily::TruncatedMainInversion { h_min: None }], &q).unwrap();
        assert!(res.diagnostics.contains_key("h_min"));
        assert!(res.value > 0.0);
    }
}
