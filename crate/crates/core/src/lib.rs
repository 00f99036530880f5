//! Numerics for partially hyperbolic endomorphisms of the 2-torus.
//!
//! The crate is `no_std` (with `alloc`); file formats, the command line and
//! thread pools live in the `toral-lab` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bump;
pub mod exec;
pub mod hyperbolicity;
pub mod linalg;
pub mod linear;
pub mod models;
pub mod periodic;
pub mod semiconj;
pub mod torus;
pub mod util;
