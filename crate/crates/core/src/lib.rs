//! Direction-of-arrival estimation with multi-port (multi-mode) antennas.

pub mod basis;
pub mod bounds;
pub mod calibration;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod response;
pub mod signal;

pub use basis::{BasisKind, BasisSpec, Direction, C64};
pub use error::{Error, Result};
