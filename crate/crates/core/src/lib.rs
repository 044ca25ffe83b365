//! Implicit and explicit behavior cloning of facilitator gaze shifts.
//!
//! The library covers the whole pipeline: session ingestion and episode
//! extraction ([`data`]), dense networks ([`nn`]), the energy-based and
//! regression policies ([`policy`]), their training loops ([`train`]), the
//! PD-controlled gaze environment ([`env`]) and evaluation metrics ([`eval`]).

pub mod data;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
