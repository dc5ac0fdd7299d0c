//! Parseval K-SVD: learning dictionaries whose synthesis and analysis
//! operators form a Parseval frame, plus the sparse coding, imaging and
//! frame-theory tooling around it.

pub mod applications;
pub mod error;
pub mod frames;
pub mod imaging;
pub mod io;
pub mod ksvd;
pub mod matrix;
pub mod parseval;
pub mod sparse;
pub mod theory;

pub use error::{Error, Result};
pub use frames::Dictionary;
pub use matrix::{Mat, Vector};
