//! Revenue-maximizing auctions of bandwidth (frequency division) and
//! transmit power (spread spectrum) to strategic users with private,
//! one-dimensional types, plus Monte Carlo machinery that checks incentive
//! compatibility, individual rationality and the revenue identities of the
//! resulting mechanisms.

pub mod config;
pub mod error;
pub mod fd;
pub mod mechanism;
pub mod montecarlo;
pub mod payment;
pub mod rate;
pub mod ss;
pub mod types;
pub mod verification;

pub use error::{Error, Result};
