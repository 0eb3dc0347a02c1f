//! Per-state rates and their expectations / essential infima.
//!
//! For a channel state h and power P = P(h):
//!
//! * `r_main = ln(1 + P·h_m)`, `r_eve = ln(1 + P·h_e)`
//! * `r_s = [r_main − r_eve]^+` (per-state secrecy rate)
//! * `r_s_prime = [r_main − ln(1 + P·q(h))]^+` (key share, q(h) ≥ h_e)
//! * `r_s_dprime = r_s − r_s_prime` (direct secret-data share)
//!
//! Every `[·]^+` argument used here is non-decreasing in h_m for fixed h_e,
//! for all policy families, so its zero crossing is a single breakpoint
//! that the quadrature splits on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{ChannelState, FadingDistribution};
use crate::numerics::{bisect, mc_expect, Estimate, Integrator, RngSeed};
use crate::policy::{Csi, PowerPolicy, PowerRule};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub r_s: f64,
    pub r_s_prime: f64,
    pub r_s_dprime: f64,
    /// One-time-pad data rate; zero until a schedule assigns it.
    pub r_o: f64,
    pub r_main: f64,
    pub r_eve: f64,
}

/// The key-share function q(h) = max(h_e, floor).
///
/// `floor = 0` gives q = h_e: the whole secrecy rate goes to the key.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KeyShare {
    pub floor: f64,
}

impl KeyShare {
    pub const EAVESDROPPER: KeyShare = KeyShare { floor: 0.0 };

    pub fn new(floor: f64) -> Result<Self> {
        if !(floor >= 0.0 && floor.is_finite()) {
            return Err(Error::Argument(format!("key-share floor must be >= 0, got {floor}")));
        }
        Ok(Self { floor })
    }

    pub fn eval(&self, state: ChannelState) -> f64 {
        state.h_e.max(self.floor)
    }
}

fn check_csi(policy: &PowerPolicy) -> Result<()> {
    if let (PowerRule::FullInversion { .. }, Csi::Main) = (policy.rule, policy.csi) {
        return Err(Error::Capability { family: "full-inv".into() });
    }
    Ok(())
}

/// All per-state rates for `state`; `r_o` is left at zero.
pub fn per_state_rates<Q: Fn(ChannelState) -> f64>(
    policy: &PowerPolicy,
    state: ChannelState,
    q: Q,
) -> Result<RateBreakdown> {
    let qv = q(state);
    if !(qv >= state.h_e) {
        return Err(Error::Constraint(format!(
            "key-share function q(h) = {qv} is below h_e = {}",
            state.h_e
        )));
    }
    let p = policy.power(state)?;
    Ok(breakdown(p, state, qv))
}

pub(crate) fn breakdown(p: f64, state: ChannelState, q: f64) -> RateBreakdown {
    let r_main = (p * state.h_m).ln_1p();
    let r_eve = (p * state.h_e).ln_1p();
    let r_s = (r_main - r_eve).max(0.0);
    let r_s_prime = (r_main - (p * q).ln_1p()).max(0.0);
    RateBreakdown {
        r_s,
        r_s_prime,
        // q ≥ h_e makes this non-negative up to rounding
        r_s_dprime: (r_s - r_s_prime).max(0.0),
        r_o: 0.0,
        r_main,
        r_eve,
    }
}

/// Expectation targets shared by the bounds, the simulator and the
/// quadrature-vs-Monte-Carlo validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "functional", rename_all = "snake_case")]
pub enum RateFunctional {
    /// [r_main − r_eve]^+
    Secrecy,
    /// [r_main − ln(1 + P·q(h))]^+
    Key { share: KeyShare },
    /// [r_main − reserve − r_eve]^+
    ReservedKey { reserve: f64 },
    /// P(h)
    Power,
}

impl RateFunctional {
    pub fn name(&self) -> String {
        match self {
            RateFunctional::Secrecy => "secrecy_rate".into(),
            RateFunctional::Key { share } => format!("key_rate(floor={})", share.floor),
            RateFunctional::ReservedKey { reserve } => format!("reserved_key_rate(R={reserve})"),
            RateFunctional::Power => "power".into(),
        }
    }

    /// Argument of the positive part, for the positive-part functionals.
    fn margin(&self, policy: &PowerPolicy, h: ChannelState) -> f64 {
        let p = policy.power_at(h);
        let r_main = (p * h.h_m).ln_1p();
        match *self {
            RateFunctional::Secrecy => r_main - (p * h.h_e).ln_1p(),
            RateFunctional::Key { share } => r_main - (p * share.eval(h)).ln_1p(),
            RateFunctional::ReservedKey { reserve } => r_main - reserve - (p * h.h_e).ln_1p(),
            RateFunctional::Power => p,
        }
    }

    pub fn eval(&self, policy: &PowerPolicy, h: ChannelState) -> f64 {
        match self {
            RateFunctional::Power => policy.power_at(h),
            _ => self.margin(policy, h).max(0.0),
        }
    }

    pub fn quadrature(
        &self,
        policy: &PowerPolicy,
        dist_m: &FadingDistribution,
        dist_e: &FadingDistribution,
        quad: &Integrator,
    ) -> Result<Estimate> {
        check_csi(policy)?;
        let outer: Vec<f64> = match self {
            RateFunctional::Key { share } if share.floor > 0.0 => vec![share.floor],
            _ => Vec::new(),
        };
        let continuous_m = !dist_m.is_degenerate();
        quad.expect2(
            dist_m,
            dist_e,
            |h| self.eval(policy, h),
            &outer,
            |h_e| {
                let mut breaks = policy.kinks(h_e);
                if continuous_m && !matches!(self, RateFunctional::Power) {
                    if let Some(root) = self.crossing(policy, h_e) {
                        breaks.push(root);
                    }
                }
                breaks
            },
        )
    }

    pub fn monte_carlo(
        &self,
        policy: &PowerPolicy,
        dist_m: &FadingDistribution,
        dist_e: &FadingDistribution,
        n: usize,
        seed: RngSeed,
    ) -> Result<Estimate> {
        check_csi(policy)?;
        mc_expect(|h| self.eval(policy, h), dist_m, dist_e, n, seed)
    }

    // Smallest h_m where the margin becomes non-negative, searched in log
    // space; `None` if the margin is already non-negative at the bottom.
    fn crossing(&self, policy: &PowerPolicy, h_e: f64) -> Option<f64> {
        const LO: f64 = -50.0;
        const HI: f64 = 50.0;
        let g = |u: f64| self.margin(policy, ChannelState::new_unchecked(u.exp(), h_e));
        if g(LO) >= 0.0 {
            return None;
        }
        if g(HI) < 0.0 {
            return Some(HI.exp());
        }
        // Sign-only view keeps bisection valid across the jump of the
        // truncated family.
        let s = |u: f64| if g(u) >= 0.0 { 1.0 } else { -1.0 };
        bisect(s, LO, HI, 1e-12).ok().map(f64::exp)
    }
}

/// E[[r_main − r_eve]^+].
pub fn ergodic_secrecy_rate(
    policy: &PowerPolicy,
    dist_m: &FadingDistribution,
    dist_e: &FadingDistribution,
    quad: &Integrator,
) -> Result<f64> {
    Ok(RateFunctional::Secrecy.quadrature(policy, dist_m, dist_e, quad)?.mean)
}

/// E[R_s′(h)] for the key share `share`.
pub fn key_rate(
    policy: &PowerPolicy,
    dist_m: &FadingDistribution,
    dist_e: &FadingDistribution,
    share: KeyShare,
    quad: &Integrator,
) -> Result<f64> {
    Ok(RateFunctional::Key { share }.quadrature(policy, dist_m, dist_e, quad)?.mean)
}

/// E[[r_main − reserve − r_eve]^+]: the key rate left after `reserve`
/// nats/use of every block carry delay-limited data.
pub fn reserved_key_rate(
    policy: &PowerPolicy,
    dist_m: &FadingDistribution,
    dist_e: &FadingDistribution,
    reserve: f64,
    quad: &Integrator,
) -> Result<f64> {
    Ok(RateFunctional::ReservedKey { reserve }.quadrature(policy, dist_m, dist_e, quad)?.mean)
}

/// Essential infimum of r_main = ln(1 + P(h)·h_m) over the support.
///
/// Computed from the family formula and the support bounds; continuous
/// laws have support (0, ∞).
pub fn delay_floor(
    policy: &PowerPolicy,
    dist_m: &FadingDistribution,
    dist_e: &FadingDistribution,
) -> f64 {
    let (inf_m, sup_e) = (dist_m.support_inf(), dist_e.support_sup());
    match policy.rule {
        PowerRule::Constant { power } => (power * inf_m).ln_1p(),
        // P·h_m = c·max(1, h_m/h_e)
        PowerRule::FullInversion { c } => (c * (inf_m / sup_e).max(1.0)).ln_1p(),
        PowerRule::MainInversion { c } => c.ln_1p(),
        PowerRule::TruncatedMainInversion { c, h_min } => {
            if inf_m < h_min {
                0.0
            } else {
                c.ln_1p()
            }
        }
    }
}

/// Essential infimum of min(r_main, r_eve) = ln(1 + P(h)·min(h_m, h_e)):
/// the cap on a constant one-time-pad rate.
pub fn otp_rate_cap(
    policy: &PowerPolicy,
    dist_m: &FadingDistribution,
    dist_e: &FadingDistribution,
) -> f64 {
    let (inf_m, inf_e) = (dist_m.support_inf(), dist_e.support_inf());
    let sup_m = dist_m.support_sup();
    match policy.rule {
        PowerRule::Constant { power } => (power * inf_m.min(inf_e)).ln_1p(),
        PowerRule::FullInversion { c } => c.ln_1p(),
        // P·min = c·min(1, h_e/h_m)
        PowerRule::MainInversion { c } => (c * (inf_e / sup_m).min(1.0)).ln_1p(),
        PowerRule::TruncatedMainInversion { c, h_min } => {
            if inf_m < h_min {
                0.0
            } else {
                (c * (inf_e / sup_m).min(1.0)).ln_1p()
            }
        }
    }
}

/// Essential infimum of r_s″ = r_s − r_s′.
///
/// r_s″ vanishes wherever h_e ≥ floor or r_s = 0. A continuous h_e puts
/// mass on h_e ≥ floor, and a continuous h_m puts mass near h_m = 0 where
/// r_s = 0 for every family, so only a pair of point masses can give a
/// positive floor.
pub fn direct_secret_floor(
    policy: &PowerPolicy,
    dist_m: &FadingDistribution,
    dist_e: &FadingDistribution,
    share: KeyShare,
) -> f64 {
    if dist_m.is_degenerate() && dist_e.is_degenerate() {
        let h = ChannelState::new_unchecked(dist_m.mean(), dist_e.mean());
        breakdown(policy.power_at(h), h, share.eval(h)).r_s_dprime
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{calibrate, PolicyFamily};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn st(h_m: f64, h_e: f64) -> ChannelState {
        ChannelState::new(h_m, h_e).unwrap()
    }

    fn constant(p: f64) -> PowerPolicy {
        PowerPolicy::from_rule(PowerRule::Constant { power: p })
    }

    fn dist(s: &str) -> FadingDistribution {
        s.parse().unwrap()
    }

    #[test]
    fn per_state_examples() {
        let r = per_state_rates(&constant(1.0), st(3.0, 1.0), |h| h.h_e).unwrap();
        assert_abs_diff_eq!(r.r_s, LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(r.r_s_prime, LN_2, epsilon = 1e-15);
        assert_eq!(r.r_s_dprime, 0.0);

        let r = per_state_rates(&constant(1.0), st(1.0, 1.0), |h| h.h_e + 0.5).unwrap();
        assert_eq!(r.r_s, 0.0);

        let r = per_state_rates(&constant(1.0), st(1.0, 3.0), |h| h.h_e).unwrap();
        assert_eq!(r.r_s, 0.0);
        assert_eq!(r.r_s_prime, 0.0);
    }

    #[test]
    fn per_state_rejects_small_q() {
        let err = per_state_rates(&constant(1.0), st(2.0, 1.0), |h| h.h_e * 0.5).unwrap_err();
        assert!(matches!(err, Error::Constraint(_)));
    }

    #[test]
    fn per_state_key_split() {
        // q above h_e moves rate from the key share to the direct share
        let r = per_state_rates(&constant(2.0), st(4.0, 1.0), |_| 2.0).unwrap();
        assert_abs_diff_eq!(r.r_s, (9.0f64 / 3.0).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(r.r_s_prime, (9.0f64 / 5.0).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(r.r_s_dprime, (5.0f64 / 3.0).ln(), epsilon = 1e-14);
    }

    #[test]
    fn ergodic_rate_degenerate_cases() {
        let q = Integrator::new(64).unwrap();
        let two = dist("const:2");
        assert_eq!(ergodic_secrecy_rate(&constant(3.0), &two, &two, &q).unwrap(), 0.0);
        let v = ergodic_secrecy_rate(&constant(1.0), &dist("const:1"), &dist("const:1e-12"), &q)
            .unwrap();
        assert_abs_diff_eq!(v, LN_2, epsilon = 1e-11);
    }

    #[test]
    fn ergodic_rate_matches_monte_carlo_full_inversion() {
        let q = Integrator::new(200).unwrap();
        let d = dist("chisq:4");
        let p = calibrate(PolicyFamily::FullInversion, &d, &d, 100.0, &q).unwrap();
        let quad = ergodic_secrecy_rate(&p, &d, &d, &q).unwrap();
        let mc = RateFunctional::Secrecy
            .monte_carlo(&p, &d, &d, 1_000_000, RngSeed::new(12, 0))
            .unwrap();
        assert!((quad - mc.mean).abs() < 4.0 * mc.stderr, "quad={quad} mc={mc:?}");
    }

    #[test]
    fn quadrature_agrees_with_monte_carlo_across_pairs() {
        let q = Integrator::new(200).unwrap();
        let cases = [
            ("chisq:4", "chisq:4", PolicyFamily::Constant, 10.0),
            ("chisq:4", "chisq:4", PolicyFamily::MainInversion, 100.0),
            ("gamma:2:1", "gamma:2:1", PolicyFamily::FullInversion, 30.0),
            ("gamma:3:1", "exp:2", PolicyFamily::MainInversion, 5.0),
            ("exp:1", "exp:1", PolicyFamily::TruncatedMainInversion { h_min: Some(0.3) }, 10.0),
            ("chisq:6", "gamma:2:1", PolicyFamily::FullInversion, 1.0),
        ];
        for (i, (m, e, fam, p_bar)) in cases.into_iter().enumerate() {
            let (dm, de) = (dist(m), dist(e));
            let p = calibrate(fam, &dm, &de, p_bar, &q).unwrap();
            for f in [
                RateFunctional::Secrecy,
                RateFunctional::Key { share: KeyShare::new(1.5).unwrap() },
                RateFunctional::ReservedKey { reserve: 0.3 },
                RateFunctional::Power,
            ] {
                let a = f.quadrature(&p, &dm, &de, &q).unwrap().mean;
                let b = f.monte_carlo(&p, &dm, &de, 400_000, RngSeed::new(100 + i as u64, 0)).unwrap();
                assert!(
                    (a - b.mean).abs() < 4.0 * b.stderr + 1e-6,
                    "{m}/{e}/{fam} {}: quad={a} mc={b:?}",
                    f.name()
                );
            }
        }
    }

    #[test]
    fn delay_floor_examples() {
        let chi = dist("chisq:4");
        let p = PowerPolicy::from_rule(PowerRule::MainInversion { c: std::f64::consts::E - 1.0 });
        assert_abs_diff_eq!(delay_floor(&p, &chi, &chi), 1.0, epsilon = 1e-15);
        assert_eq!(delay_floor(&constant(5.0), &chi, &chi), 0.0);
        let p = PowerPolicy::from_rule(PowerRule::FullInversion { c: 3.0 });
        assert_abs_diff_eq!(delay_floor(&p, &chi, &chi), 4f64.ln(), epsilon = 1e-15);
        let p = PowerPolicy::from_rule(PowerRule::TruncatedMainInversion { c: 3.0, h_min: 0.5 });
        assert_eq!(delay_floor(&p, &chi, &chi), 0.0);
        assert_abs_diff_eq!(delay_floor(&p, &dist("const:1"), &chi), 4f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn delay_floor_bounds_sampled_states() {
        let q = Integrator::new(128).unwrap();
        let chi = dist("chisq:4");
        for fam in [PolicyFamily::FullInversion, PolicyFamily::MainInversion, PolicyFamily::Constant] {
            let p = calibrate(fam, &chi, &chi, 50.0, &q).unwrap();
            let floor = delay_floor(&p, &chi, &chi);
            let mut rng_m = chi.sample(RngSeed::new(40, 0), 1_000_000).into_iter();
            let hes = chi.sample(RngSeed::new(40, 1), 1_000_000);
            for h_e in hes {
                let h = ChannelState::new_unchecked(rng_m.next().unwrap(), h_e);
                let r = (p.power_at(h) * h.h_m).ln_1p();
                assert!(r >= floor - 1e-12, "{fam}: {r} < {floor}");
            }
        }
    }

    #[test]
    fn full_inversion_feasibility_fact() {
        let p = PowerPolicy::from_rule(PowerRule::FullInversion { c: 7.0 });
        let chi = dist("chisq:4");
        let hm = chi.sample(RngSeed::new(41, 0), 100_000);
        let he = chi.sample(RngSeed::new(41, 1), 100_000);
        let floor = 8f64.ln();
        for (a, b) in hm.into_iter().zip(he) {
            let h = ChannelState::new_unchecked(a, b);
            let r = breakdown(p.power_at(h), h, h.h_e);
            assert!(r.r_main >= floor - 1e-12 && r.r_eve >= floor - 1e-12);
            let binding = if a <= b { r.r_main } else { r.r_eve };
            assert_abs_diff_eq!(binding, floor, epsilon = 1e-12);
        }
    }

    #[test]
    fn otp_cap_and_direct_floor() {
        let chi = dist("chisq:4");
        let full = PowerPolicy::from_rule(PowerRule::FullInversion { c: 3.0 });
        assert_abs_diff_eq!(otp_rate_cap(&full, &chi, &chi), 4f64.ln(), epsilon = 1e-15);
        let main = PowerPolicy::from_rule(PowerRule::MainInversion { c: 3.0 });
        assert_eq!(otp_rate_cap(&main, &chi, &chi), 0.0);
        let c = constant(1.0);
        let (a, b) = (dist("const:4"), dist("const:1"));
        assert_abs_diff_eq!(otp_rate_cap(&c, &a, &b), LN_2, epsilon = 1e-15);
        assert_eq!(direct_secret_floor(&c, &a, &b, KeyShare::EAVESDROPPER), 0.0);
        let v = direct_secret_floor(&c, &a, &b, KeyShare::new(2.0).unwrap());
        assert_abs_diff_eq!(v, (3.0f64 / 2.0).ln(), epsilon = 1e-14);
        assert_eq!(direct_secret_floor(&c, &chi, &b, KeyShare::new(2.0).unwrap()), 0.0);
    }

    #[test]
    fn capability_checked_in_expectations() {
        let q = Integrator::new(32).unwrap();
        let chi = dist("chisq:4");
        let p = PowerPolicy::new(PowerRule::FullInversion { c: 1.0 }, Csi::Main);
        assert!(ergodic_secrecy_rate(&p, &chi, &chi, &q).is_err());
    }

    proptest! {
        #[test]
        fn rates_are_nonnegative(
            h_m in 1e-6f64..1e3, h_e in 1e-6f64..1e3, p in 0.0f64..1e4, extra in 0.0f64..10.0
        ) {
            let h = ChannelState::new_unchecked(h_m, h_e);
            let r = breakdown(p, h, h_e + extra);
            prop_assert!(r.r_s >= 0.0 && r.r_s_prime >= 0.0 && r.r_s_dprime >= 0.0);
            prop_assert!(r.r_main >= 0.0 && r.r_eve >= 0.0);
            prop_assert!(r.r_s_prime <= r.r_s + 1e-12);
            let r0 = breakdown(p, h, h_e);
            prop_assert_eq!(r0.r_s_dprime, 0.0);
        }

        #[test]
        fn positive_part_antisymmetry(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let d = (a - b).max(0.0) - (b - a).max(0.0);
            prop_assert!((d - (a - b)).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
        }
    }
}
