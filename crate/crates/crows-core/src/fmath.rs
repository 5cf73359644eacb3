//! Float transcendentals routed through one implementation.
//!
//! `no_std` builds have no inherent `f64::exp`/`tanh`/..., and letting std
//! builds silently pick the platform libm would make results depend on the
//! build configuration. Calling through `num_traits::Float` (backed by the
//! pure-Rust `libm`) keeps every configuration on identical code.

use num_traits::Float;

pub(crate) fn exp(x: f64) -> f64 {
    Float::exp(x)
}

pub(crate) fn ln(x: f64) -> f64 {
    Float::ln(x)
}

pub(crate) fn tanh(x: f64) -> f64 {
    Float::tanh(x)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    Float::sqrt(x)
}

pub(crate) fn powi(x: f64, n: i32) -> f64 {
    Float::powi(x, n)
}

pub(crate) fn cos(x: f64) -> f64 {
    Float::cos(x)
}
