//! Browser bindings: bound curves, fading densities and a key-buffer
//! simulation, each returned as a JSON string for the static page in `www/`.

use dlsec::bounds::{self, Scenario, ShareChoice};
use dlsec::fading::FadingDistribution;
use dlsec::numerics::{Integrator, RngSeed};
use dlsec::protocol::{simulate, Scheme, SimConfig};
use dlsec::db_to_linear;
use serde_json::json;
use wasm_bindgen::prelude::*;

// Coarser than the CLI default so a curve redraws without a visible pause.
const WEB_NODES: usize = 64;
const MAX_POINTS: usize = 400;
const MAX_BLOCKS: usize = 200_000;

fn parse_dist(s: &str) -> Result<FadingDistribution, String> {
    s.parse().map_err(|e: dlsec::Error| e.to_string())
}

/// Bounds over `from_db..=to_db` in steps of `step_db`.
pub fn bound_curves_json(dist_m: &str, dist_e: &str, from_db: f64, to_db: f64, step_db: f64) -> Result<String, String> {
    if !(step_db > 0.0 && to_db >= from_db) {
        return Err("need step > 0 and to >= from".into());
    }
    let n = ((to_db - from_db) / step_db + 1e-9).floor() as usize + 1;
    if n > MAX_POINTS {
        return Err(format!("at most {MAX_POINTS} grid points"));
    }
    let (dm, de) = (parse_dist(dist_m)?, parse_dist(dist_e)?);
    let quad = Integrator::new(WEB_NODES).map_err(|e| e.to_string())?;
    let base = Scenario::new(dm, de, 1.0).map_err(|e| e.to_string())?;
    let (full, main) = (bounds::default_full_menu(), bounds::default_main_menu());
    let mut cols: [Vec<f64>; 5] = Default::default();
    let grid: Vec<f64> = (0..n).map(|i| from_db + i as f64 * step_db).collect();
    let mut run = || -> dlsec::Result<f64> {
        for &db in &grid {
            let s = base.with_power(db_to_linear(db));
            cols[0].push(bounds::upper_full(&s, &full, &quad)?.value);
            cols[1].push(bounds::lower_full(&s, &full, ShareChoice::Search, &quad)?.value);
            cols[2].push(bounds::upper_main(&s, &main, &quad)?.value);
            cols[3].push(bounds::lower_main(&s, &main, &quad)?.value);
        }
        Ok(bounds::high_snr_limit(&dm, &de, &quad)?.value)
    };
    let limit = run().map_err(|e| e.to_string())?;
    cols[4] = vec![limit; n];
    let [uf, lf, um, lm, hl] = cols;
    Ok(json!({
        "snr_db": grid,
        "upper_full": uf,
        "lower_full": lf,
        "upper_main": um,
        "lower_main": lm,
        "high_snr_limit": hl,
    })
    .to_string())
}

/// Density of a gain law on `(0, x_max]`.
pub fn fading_pdf_json(dist: &str, x_max: f64, points: usize) -> Result<String, String> {
    let d = parse_dist(dist)?;
    if !(x_max > 0.0) || !(2..=5000).contains(&points) {
        return Err("need x_max > 0 and 2..=5000 points".into());
    }
    if d.is_degenerate() {
        return Ok(json!({ "point_mass": d.mean(), "x": [], "pdf": [] }).to_string());
    }
    let x: Vec<f64> = (1..=points).map(|i| x_max * i as f64 / points as f64).collect();
    let pdf = x.iter().map(|&v| d.pdf(v)).collect::<dlsec::Result<Vec<f64>>>().map_err(|e| e.to_string())?;
    Ok(json!({ "x": x, "pdf": pdf, "mean": d.mean() }).to_string())
}

/// Key-buffer trajectory and summary of one simulation.
#[allow(clippy::too_many_arguments)]
pub fn simulate_json(
    scheme: &str,
    dist_m: &str,
    dist_e: &str,
    pbar_db: f64,
    a: usize,
    b: usize,
    backoff: f64,
    seed: u64,
) -> Result<String, String> {
    if a.saturating_mul(b) > MAX_BLOCKS {
        return Err(format!("at most {MAX_BLOCKS} blocks in the browser"));
    }
    let scheme: Scheme = scheme.parse().map_err(|e: dlsec::Error| e.to_string())?;
    let mut c = SimConfig::new(scheme, parse_dist(dist_m)?, parse_dist(dist_e)?, db_to_linear(pbar_db));
    c.a = a;
    c.b = b;
    c.backoff = backoff;
    c.seed = RngSeed::new(seed, 0);
    c.nodes = WEB_NODES;
    let r = simulate(&c).map_err(|e| e.to_string())?;
    let secure: Vec<u64> = r.records.iter().map(|x| x.secure_bits()).collect();
    Ok(json!({
        "available": r.buffer.available,
        "pending": r.buffer.pending,
        "secure_bits": secure,
        "otp_bits_per_block": r.schedule.otp_bits_per_block,
        "starvation_events": r.starvation_events,
        "insecure_fraction": r.insecure_fraction,
        "outage_fraction": r.outage_fraction,
        "roundtrip_ok": r.roundtrip_ok,
        "summary": r.summary(),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn bound_curves(dist_m: &str, dist_e: &str, from_db: f64, to_db: f64, step_db: f64) -> Result<String, JsError> {
    bound_curves_json(dist_m, dist_e, from_db, to_db, step_db).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fading_pdf(dist: &str, x_max: f64, points: usize) -> Result<String, JsError> {
    fading_pdf_json(dist, x_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_buffer(
    scheme: &str,
    dist_m: &str,
    dist_e: &str,
    pbar_db: f64,
    a: usize,
    b: usize,
    backoff: f64,
    seed: u32,
) -> Result<String, JsError> {
    simulate_json(scheme, dist_m, dist_e, pbar_db, a, b, backoff, seed.into()).map_err(|e| JsError::new(&e))
}
