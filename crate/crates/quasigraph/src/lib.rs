//! Invariant graphs and quasi-graphs ("bony graphs") of skew products over
//! expanding Markov circle maps, with box-dimension estimation two
//! independent ways: solving the generalized Bowen pressure equation and
//! direct box counting.

pub mod circle;
pub mod error;
pub mod markov;

pub use circle::Angle;
pub use error::{Error, Result};
pub use markov::{CylinderWord, MarkovMap, MoranCover};
