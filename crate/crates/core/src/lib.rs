//! Goal-predictive shared autonomy viewed as a discrete-time dynamical system
//! that the user steers.
//!
//! The assistance keeps a log goal-probability vector `l`. Each user input
//! adds a per-goal log-likelihood term `v` ([`belief`]), and the assistance
//! applies the action with the highest expected value under `softmax(l)`
//! ([`select`]). In obstacle-free navigation that action has a closed form
//! and the system settles at the belief-weighted goal centroid
//! ([`freespace`]). [`sim`] closes the loop with scripted or live users.

pub mod belief;
pub mod error;
pub mod freespace;
pub mod model;
pub mod scenario;
pub mod select;
pub mod sim;

pub use error::{Error, Result, ValidationError, Violation};
