//! Core algorithms for the BK host-parasite model and its branching
//! approximation.
//!
//! The crate covers four concerns, all free of IO:
//!
//! * [`model`]: parameters, the compound offspring law, the sparse
//!   population state and the jump-rate functionals of both processes;
//! * [`sim`]: exact event-by-event simulation producing replayable
//!   [`sim::PathRecord`]s under transition-, infection- or time-based
//!   stop rules;
//! * [`likelihood`]: incremental likelihood ratios between the epidemic
//!   and branching path laws, with the stopping times that make the
//!   stopped ratio a bounded-increment martingale;
//! * [`coupling`] and [`bounds`]: a thinning coupling of the two
//!   processes, and closed-form evaluators for every total-variation,
//!   concentration and relative-closeness bound the library verifies.
//!
//! The crate is `no_std`-compatible (`alloc` required); disable the
//! default `std` feature and enable `libm` to build without the
//! standard library.

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("bk-core requires either the `std` or the `libm` feature");

extern crate alloc;

mod math;

pub mod bounds;
pub mod coupling;
pub mod error;
pub mod likelihood;
pub mod model;
pub mod sim;

pub use error::Error;
pub use model::{ModelParams, OffspringFamily, OffspringLaw, ProcessKind, SparseState};
pub use sim::{Event, EventKind, PathRecord, StopRule};
