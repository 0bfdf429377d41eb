//! Adaptive integration of finite fields, exact-divergence likelihoods and
//! push-forward sampling.

mod field;
mod nll;
mod rk45;

pub use field::{fd_divergence, AffineField, ConditionalField, FiniteField, LearnedField, OtField, ZeroField};
pub use nll::{nll, nll_one, sample, NllRecord, NllReport, Prior};
pub use rk45::{rk45, Rk45Config, Rk45Stats};
