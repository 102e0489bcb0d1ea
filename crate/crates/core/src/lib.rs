//! Numerical machinery for the one-level density of holomorphic newform
//! families: Petersson and Ng trace-formula averages, explicit-formula
//! prime sums, Kuznetsov-layer Bessel transforms and Eisenstein
//! coefficients of Γ₀(N).

pub mod arith;
pub mod density;
pub mod eisenstein;
pub mod petersson;
pub mod error;
pub mod kuznetsov;
pub mod quad;
pub mod specfun;
pub mod sum;
pub mod testfn;

pub use error::{Error, Result};
