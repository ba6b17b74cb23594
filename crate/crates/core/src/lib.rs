//! Rank-n non-abelian zeta invariants of elliptic-curve reductions.
//!
//! The crate is organized around a trace pipeline: an elliptic curve over the
//! rationals is reduced modulo primes ([`ec`]), the trace of Frobenius feeds
//! an exact-rational recursion for the rank-n beta and a-invariants ([`zeta`]),
//! and those invariants drive normalized angle statistics ([`satotate`]) and
//! rank-stratified family averages ([`murmuration`]). [`dataio`] handles curve
//! ingestion and persistent trace caching.
//!
//! All beta / a-invariant arithmetic is exact (arbitrary-precision rationals);
//! floating-point values are derived views. Bound checks against irrational
//! quantities are resolved by exact squaring, never by epsilon comparison.

pub mod dataio;
pub mod ec;
pub mod error;
pub mod murmuration;
pub mod numfmt;
pub mod primes;
pub mod satotate;
pub mod zeta;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
