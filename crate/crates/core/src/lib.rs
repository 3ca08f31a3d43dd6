//! Identification of dynamic droop coefficients and decentralized
//! small-signal frequency-stability certificates for grid-connected units.
//!
//! The pipeline is: analytic or measured unit models ([`units`]) are probed
//! by the two-bus identification harness ([`ident`]) to obtain a
//! [`ident::DroopDataset`]; the dataset is certified against the network
//! envelope ([`cert`]) and checked against Bode templates and performance
//! specifications ([`bounds`]). [`oracle`] assembles full networks and
//! computes their spectra as ground truth.

mod cjson;
pub mod bounds;
pub mod cert;
pub mod error;
pub mod freqresp;
pub mod ident;
pub mod lines;
pub mod lti;
pub mod oracle;
pub mod poly;
pub mod units;

pub use error::{Error, Result};
