//! Weibull accelerated failure-time modelling of time-to-visit after mobile
//! notifications, the delta effect of sending now versus waiting, and the
//! send/hold policies built on it.
//!
//! ```
//! use dto_core::survival::{delta_effect, StatePair, WeibullParams};
//!
//! let pre = WeibullParams::new(0.05, 0.7).unwrap();
//! let post = WeibullParams::new(0.08, 0.7).unwrap();
//! let d = delta_effect(&StatePair::new(pre, post, 6.0).unwrap(), 24.0).unwrap();
//! assert!(d > 0.0);
//! ```

pub mod error;
pub mod evaluation;
pub mod io;
pub mod pipeline;
pub mod policy;
pub mod schema;
pub mod scoring;
pub mod simulator;
pub mod survival;
pub mod trainers;

pub use error::{Error, Result};
