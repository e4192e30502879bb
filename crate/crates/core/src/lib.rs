//! Detection of latent units of measurement ("quanta") and latent square
//! grids in archaeological measurement sets and post-hole plans.
//!
//! The pipeline pieces:
//!
//! * [`measurements`] turns wall-face tables and building dimensions into
//!   sets of lengths;
//! * [`quantogram`] scans the cosine quantogram over frequency, builds a
//!   Monte Carlo comparison boundary and locates peaks;
//! * [`circstats`] provides von Mises fitting, circular mixtures and the
//!   axiality test;
//! * [`rasterclean`] and [`postholes`] extract post-hole points from a plan
//!   and test them for perpendicular structure;
//! * [`gridfit`] splits buildings between two grids and fits grid offsets.

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circstats;
pub mod error;
pub mod gridfit;
pub mod measurements;
pub mod postholes;
pub mod quantogram;
pub mod rasterclean;
pub mod rng;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
