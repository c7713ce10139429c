//! Link-level simulation of a multiuser uplink OTFS-SCMA system with
//! delay-Doppler resource hopping under narrowband and periodic-impulse
//! jamming.

pub mod channel;
pub mod ddcore;
pub mod error;
pub mod fec;
pub mod harness;
pub mod jamming;
pub mod modem;
pub mod receiver;
pub mod scma;
pub mod seed;

pub use ddcore::{DdBlock, DdGrid, LinearOperator, C64};
pub use error::{Error, Result};
