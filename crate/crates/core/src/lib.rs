//! Minimal observable clade sizes of Λ-coalescents with infinite-sites mutation.
//!
//! * [`rates`]: Λ measures and merger rates.
//! * [`sim`]: genealogy simulation, mutation placement and per-leaf clade statistics.
//! * [`moments`]: exact finite-`n` moment recursions and `n → ∞` limit laws.
//! * [`oracle`]: brute-force exact moments for small `n`.
//! * [`report`]: experiment configs, Monte Carlo comparisons and file output.
//!
//! Arithmetic on rates is generic over [`Scalar`]; the aliases below fix the two
//! scalars used in practice.

pub mod error;
pub mod moments;
pub mod oracle;
pub mod quadrature;
pub mod rates;
pub mod report;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use rates::{lambda_bk, total_rate, LambdaSpec, MeasureClass, RateTable};
pub use scalar::Scalar;

/// Exact rational scalar.
pub type Rational = num_rational::BigRational;

pub type Rates = RateTable<f64>;
pub type ExactRates = RateTable<Rational>;
pub type Moments = moments::MomentTable<f64>;
pub type ExactMoments = moments::MomentTable<Rational>;
pub type LimitMoment = moments::LimitMomentResult<f64>;
pub type ExactLimitMoment = moments::LimitMomentResult<Rational>;
