//! Multi-way relaying over fully-connected interference networks.
//!
//! Every scheme is written once against [`channel::SignalSpace`], so the
//! same code produces numeric samples for symbol-recovery checks and exact
//! symbolic coefficients for rate and interference analysis.

pub mod channel;
pub mod linalg;
pub mod round;
pub mod scheme_y;
pub mod scheme_pairwise;
pub mod scheme_distributed;
pub mod scheme;
pub mod dof;
pub mod converse;
