//! Booking control for a carrier that must serve every accepted request with
//! a capacitated fleet at the end of the booking horizon.
//!
//! The crate covers instance construction, booking simulation, the routing
//! stack that prices terminal states, a random-forest surrogate of that
//! price, exact and approximate control policies, and a paired evaluation
//! harness.

pub mod bench;
pub mod error;
pub mod features;
pub mod instance;
pub mod io;
pub mod learning;
pub mod policies;
pub mod routing;
pub mod simulator;

pub use error::{Error, Result};
