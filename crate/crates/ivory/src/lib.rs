//! Bäcklund transformations of confocal quadrics.
//!
//! All linear algebra is complex and bilinear: `|x|^2` means `xᵀx`, and an
//! orthogonal matrix satisfies `MᵀM = I`.  The modules build on each other in
//! the order they are declared.

pub mod error;
pub mod sjcore;
pub mod quadric;
pub mod deform;
pub mod backlund;
pub mod permute;
#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
pub type CMat = nalgebra::DMatrix<C64>;
pub type CVec = nalgebra::DVector<C64>;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
