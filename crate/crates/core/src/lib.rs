//! Tactile adaptive grasping on a simulated parallel gripper.
//!
//! The pipeline has three learned stages:
//!
//! * [`generator`]: a behavior-cloned MLP that maps the first-contact taxel
//!   reading and gripper angle to an initial grasp angle.
//! * [`stability`]: a Gaussian mixture over `(taxels, angle, wrist pose)`
//!   whose likelihood, thresholded via an ROC sweep, decides whether the
//!   current grasp is stable.
//! * [`adapter`]: a two-layer self-attention policy over a sliding window of
//!   taxel changes that outputs corrective angle deltas while the grasp is
//!   judged unstable.
//!
//! [`sim`] and [`tactile`] provide the deterministic 160 Hz gripper and taxel
//! model everything is trained and evaluated on; [`data`] holds the dataset
//! format and scripted demonstrations, and [`bench`] the max-supported-weight
//! comparison.

pub mod adapter;
pub mod bench;
pub mod data;
pub mod error;
mod fit;
pub mod generator;
pub mod nn;
pub mod par;
pub mod sim;
pub mod stability;
pub mod tactile;

pub use error::{Error, Result};
