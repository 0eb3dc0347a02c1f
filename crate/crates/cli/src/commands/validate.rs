//! Quadrature against Monte Carlo for every rate functional, plus a grid
//! scan of the main-CSI fixed point.

use dlsec::bounds::{MainFixedPoint, Scenario, FIXED_POINT_TOL};
use dlsec::fading::FadingDistribution;
use dlsec::numerics::{Integrator, RngSeed};
use dlsec::policy::{calibrate, PolicyFamily};
use dlsec::rates::{KeyShare, RateFunctional};
use rayon::prelude::*;

use super::emit;
use crate::args::ValidateArgs;
use crate::error::CliError;

const P_BAR: f64 = 100.0;
const ABS_TOL: f64 = 1e-6;

const PAIRS: [(&str, &str); 6] = [
    ("chisq:4", "chisq:4"),
    ("gamma:2:1", "gamma:2:1"),
    ("chisq:6", "gamma:3:0.5"),
    ("gamma:2.5:2", "chisq:4"),
    ("const:2", "chisq:4"),
    ("chisq:4", "exp:1"),
];

const FAMILIES: [PolicyFamily; 4] = [
    PolicyFamily::Constant,
    PolicyFamily::MainInversion,
    PolicyFamily::FullInversion,
    PolicyFamily::TruncatedMainInversion { h_min: Some(1.0) },
];

fn functionals() -> [RateFunctional; 5] {
    [
        RateFunctional::Power,
        RateFunctional::Secrecy,
        RateFunctional::Key { share: KeyShare::EAVESDROPPER },
        RateFunctional::Key { share: KeyShare { floor: 1.0 } },
        RateFunctional::ReservedKey { reserve: 0.2 },
    ]
}

struct Check {
    label: String,
    functional: String,
    outcome: Result<String, String>,
}

fn dist(s: &str) -> FadingDistribution {
    s.parse().expect("built-in distribution spec")
}

fn mc_checks(args: &ValidateArgs, quad: &Integrator) -> Vec<Check> {
    let pairs = if args.quick { &PAIRS[..2] } else { &PAIRS[..] };
    let samples = args.samples.unwrap_or(if args.quick { 100_000 } else { 1_000_000 });
    let (sigmas, abs_tol) = match args.inject_tolerance {
        Some(t) => (t, 0.0),
        None => (args.sigmas, ABS_TOL),
    };
    let mut jobs = Vec::new();
    for (dm, de) in pairs {
        for fam in FAMILIES {
            for f in functionals() {
                jobs.push((*dm, *de, fam, f));
            }
        }
    }
    jobs.par_iter()
        .enumerate()
        .map(|(i, &(dm, de, fam, f))| {
            let (dm_d, de_d) = (dist(dm), dist(de));
            let label = format!("{dm}/{de} {fam} {}", f.name());
            let outcome = match calibrate(fam, &dm_d, &de_d, P_BAR, quad) {
                Err(e) => Ok(format!("skipped ({e})")),
                Ok(policy) => {
                    let q = f.quadrature(&policy, &dm_d, &de_d, quad);
                    let mc = f.monte_carlo(&policy, &dm_d, &de_d, samples, RngSeed::new(args.seed, i as u64));
                    match (q, mc) {
                        (Ok(q), Ok(mc)) => {
                            let diff = (q.mean - mc.mean).abs();
                            let msg = format!("quad={:.6} mc={:.6} se={:.2e}", q.mean, mc.mean, mc.stderr);
                            if diff <= sigmas * mc.stderr + abs_tol {
                                Ok(msg)
                            } else {
                                Err(msg)
                            }
                        }
                        (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
                    }
                }
            };
            Check { label, functional: f.name(), outcome }
        })
        .collect()
}

fn fixed_point_checks(args: &ValidateArgs, quad: &Integrator) -> Vec<Check> {
    let cases: &[(&str, f64)] = if args.quick {
        &[("chisq:4", 100.0)]
    } else {
        &[("chisq:4", 10.0), ("chisq:4", 100.0), ("chisq:4", 1000.0), ("gamma:2:1", 100.0)]
    };
    let grid_points = if args.quick { 200 } else { 2000 };
    cases
        .par_iter()
        .map(|&(d, p_bar)| {
            let label = format!("{d}/{d} main-inv fixed point at P={p_bar}");
            let outcome = fixed_point_case(dist(d), p_bar, grid_points, quad);
            Check { label, functional: "fixed_point".into(), outcome }
        })
        .collect()
}

fn fixed_point_case(d: FadingDistribution, p_bar: f64, n: usize, quad: &Integrator) -> Result<String, String> {
    let s = Scenario::new(d, d, p_bar).map_err(|e| e.to_string())?;
    let policy = calibrate(PolicyFamily::MainInversion, &d, &d, p_bar, quad).map_err(|e| e.to_string())?;
    let fp = MainFixedPoint::new(&s, policy, quad);
    let sol = fp.solve(FIXED_POINT_TOL).map_err(|e| e.to_string())?;
    let step = sol.r_d / n as f64;
    let f: Vec<f64> = (0..=n)
        .map(|i| fp.residual(i as f64 * step))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    if f.windows(2).any(|w| w[1] <= w[0]) {
        return Err("residual not strictly increasing on the grid".into());
    }
    let first = f.iter().position(|v| *v >= 0.0).unwrap_or(n);
    let grid_root = first as f64 * step;
    let msg = format!("bisection={:.8} grid={:.8} step={:.2e}", sol.rate, grid_root, step);
    if (sol.rate - grid_root).abs() <= step {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    let quad = Integrator::new(args.nodes)?;
    let mut checks = mc_checks(args, &quad);
    checks.extend(fixed_point_checks(args, &quad));
    let mut failed = Vec::new();
    for c in &checks {
        match &c.outcome {
            Ok(msg) => emit(&format!("ok    {}: {msg}", c.label))?,
            Err(msg) => {
                emit(&format!("FAIL  {}: {msg}", c.label))?;
                if !failed.contains(&c.functional) {
                    failed.push(c.functional.clone());
                }
            }
        }
    }
    let n_fail = checks.iter().filter(|c| c.outcome.is_err()).count();
    emit(&format!("{} checks, {} failed", checks.len(), n_fail))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}
