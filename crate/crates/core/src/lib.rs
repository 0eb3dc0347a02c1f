//! Delay-limited secrecy capacity of block-fading wiretap channels.
//!
//! The crate evaluates upper and lower bounds on the secure rate that can be
//! guaranteed in every fading block, both when the transmitter knows the
//! main and eavesdropper gains (full CSI) and when it only knows the main
//! gain (main CSI). It also simulates the two-stage transmission scheme in
//! which delay-sensitive packets are one-time-padded with key bits that were
//! distributed, at the ergodic secrecy rate, during the previous super-block.
//!
//! All rates are in nats per channel use unless a name says otherwise.
//!
//! ```
//! use dlsec::{bounds, fading::FadingDistribution, numerics::Integrator};
//!
//! let chi4 = FadingDistribution::chi_square(4).unwrap();
//! let quad = Integrator::new(64).unwrap();
//! let limit = bounds::high_snr_limit(&chi4, &chi4, &quad).unwrap();
//! assert!(limit.invertible && limit.value > 0.0);
//! ```

pub mod bounds;
pub mod error;
pub mod fading;
pub mod numerics;
pub mod policy;
pub mod protocol;
pub mod rates;

pub use error::{Error, Result};

/// Converts nats to bits.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// Linear average power from a dB value (unit noise variance).
/// `-inf` dB maps to zero power.
pub fn db_to_linear(db: f64) -> f64 {
    if db == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf(db / 10.0)
    }
}

pub fn linear_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}
