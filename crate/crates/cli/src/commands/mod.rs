mod validate;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use dlsec::bounds::{self, BoundSet, Scenario};
use dlsec::numerics::{Integrator, RngSeed};
use dlsec::policy::{calibrate, PolicyFamily};
use dlsec::protocol::{simulate as run_simulation, SimConfig};
use dlsec::rates::KeyShare;
use dlsec::{db_to_linear, nats_to_bits};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{BoundsArgs, ModelArgs, SimulateArgs, SweepArgs};
use crate::error::CliError;

pub use validate::validate;

/// Writes a line to stdout; a closed pipe ends output quietly.
pub(crate) fn emit(line: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{line}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io("<stdout>", e)),
        _ => Ok(()),
    }
}

pub const SWEEP_HEADER: [&str; 6] = ["snr_db", "upper_full", "lower_full", "upper_main", "lower_main", "high_snr_limit"];

fn menus(model: &ModelArgs) -> (Vec<PolicyFamily>, Vec<PolicyFamily>) {
    match model.policy {
        Some(p) => (vec![p], vec![p]),
        None => (bounds::default_full_menu(), bounds::default_main_menu()),
    }
}

// An explicitly requested family must be calibratable; the menu search
// would otherwise skip it silently.
fn check_explicit_policy(model: &ModelArgs, scenario: &Scenario, quad: &Integrator) -> Result<(), CliError> {
    match model.policy {
        None | Some(PolicyFamily::TruncatedMainInversion { h_min: None }) => Ok(()),
        Some(p) => {
            calibrate(p, &scenario.dist_m, &scenario.dist_e, scenario.p_bar, quad)?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct BoundsOutput<'a> {
    snr_db: f64,
    dist_m: String,
    dist_e: String,
    units: &'static str,
    #[serde(flatten)]
    bounds: &'a BoundSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    bits: Option<BTreeMap<&'static str, f64>>,
}

fn bits_view(set: &BoundSet) -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("upper_full", nats_to_bits(set.upper_full.value)),
        ("lower_full", nats_to_bits(set.lower_full.value)),
        ("upper_main", nats_to_bits(set.upper_main.value)),
        ("lower_main", nats_to_bits(set.lower_main.value)),
        ("high_snr_limit", nats_to_bits(set.high_snr_limit.value)),
    ])
}

pub fn bounds(args: &BoundsArgs) -> Result<(), CliError> {
    let m = &args.model;
    let quad = Integrator::new(m.nodes)?;
    let scenario = Scenario::new(m.dist_m, m.dist_e, db_to_linear(args.pbar_db))?;
    check_explicit_policy(m, &scenario, &quad)?;
    let (full, main) = menus(m);
    let set = bounds::all_bounds(&scenario, &full, &main, args.share, &quad)?;
    let out = BoundsOutput {
        snr_db: args.pbar_db,
        dist_m: m.dist_m.to_string(),
        dist_e: m.dist_e.to_string(),
        units: "nats",
        bounds: &set,
        bits: m.bits.then(|| bits_view(&set)),
    };
    let json = serde_json::to_string_pretty(&out).expect("bounds output is serializable");
    emit(&json)
}

/// The SNR grid of a sweep: explicit list or `from..=to` by `step`.
pub fn sweep_grid(args: &SweepArgs) -> Result<Vec<f64>, CliError> {
    let grid = match &args.grid {
        Some(g) => g.clone(),
        None => {
            if !(args.step > 0.0) || !(args.to >= args.from) {
                return Err(CliError::Usage("sweep needs step > 0 and to >= from".into()));
            }
            let n = ((args.to - args.from) / args.step + 1e-9).floor() as usize;
            (0..=n).map(|i| args.from + i as f64 * args.step).collect()
        }
    };
    if grid.is_empty() {
        return Err(CliError::Usage("sweep grid is empty".into()));
    }
    if grid.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(CliError::Usage("sweep grid has a non-numeric point".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Usage("sweep grid must be strictly ascending".into()));
    }
    Ok(grid)
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let m = &args.model;
    let grid = sweep_grid(args)?;
    let quad = Integrator::new(m.nodes)?;
    let base = Scenario::new(m.dist_m, m.dist_e, 1.0)?;
    check_explicit_policy(m, &base, &quad)?;
    let (full, main) = menus(m);
    let limit = bounds::high_snr_limit(&m.dist_m, &m.dist_e, &quad)?.value;
    let rows: Vec<[f64; 5]> = grid
        .par_iter()
        .map(|&db| {
            let s = base.with_power(db_to_linear(db));
            Ok([
                bounds::upper_full(&s, &full, &quad)?.value,
                bounds::lower_full(&s, &full, args.share, &quad)?.value,
                bounds::upper_main(&s, &main, &quad)?.value,
                bounds::lower_main(&s, &main, &quad)?.value,
                limit,
            ])
        })
        .collect::<Result<_, dlsec::Error>>()?;

    let sink: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = SWEEP_HEADER.iter().map(|s| s.to_string()).collect();
    if m.bits {
        header.extend(SWEEP_HEADER[1..].iter().map(|s| format!("{s}_bits")));
    }
    w.write_record(&header)?;
    for (db, row) in grid.iter().zip(&rows) {
        let mut rec = vec![db.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        if m.bits {
            rec.extend(row.iter().map(|v| nats_to_bits(*v).to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io("<sweep output>", e))?;
    Ok(())
}

pub fn sim_config(args: &SimulateArgs) -> Result<SimConfig, CliError> {
    let m = &args.model;
    let mut c = SimConfig::new(args.scheme, m.dist_m, m.dist_e, db_to_linear(args.pbar_db));
    c.a = args.blocks;
    c.b = args.superblocks;
    c.n1 = args.n1;
    c.policy = m.policy;
    c.backoff = args.backoff;
    c.seed = RngSeed::new(args.seed, args.stream);
    c.init = args.init;
    c.share = KeyShare::new(args.share_floor)?;
    c.nodes = m.nodes;
    Ok(c)
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    s.into()
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let config = sim_config(args)?;
    let report = run_simulation(&config)?;
    let json_path = with_extension(&args.out, "json");
    let csv_path = with_extension(&args.out, "csv");
    std::fs::write(&json_path, report.to_json()? + "\n").map_err(|e| CliError::io(&json_path, e))?;
    std::fs::write(&csv_path, report.to_csv(args.model.bits)).map_err(|e| CliError::io(&csv_path, e))?;
    emit(&report.summary())
}
