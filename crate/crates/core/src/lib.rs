//! Energy-efficient NOMA-MEC offloading: closed-form per-pair resource
//! allocation with hybrid SIC ordering and a DQN user-pairing policy.

pub mod channel;
pub mod dqn;
pub mod error;
pub mod grouping;
pub mod harness;
pub mod lambertw;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
