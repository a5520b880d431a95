//! Isomorphism testing for p-groups of class 2, exponent p and genus 2 via
//! their systems of alternating forms over finite fields.

pub mod algebra;
pub mod bench;
pub mod brute;
pub mod error;
pub mod forms;
pub mod gen;
pub mod gf;
pub mod groups;
pub mod io;
pub mod linalg;
pub mod pencil;
pub mod adjten;
pub mod pfaffian;

pub use error::{Error, Result};
