//! Exact moments of `X_n` and `O_n` for finite `n`, and the limit laws of `O_n/n`.

mod limits;
mod recursion;

pub use limits::{
    absorption_laplace, absorption_mixture, bsc_limit_beta, dust_mean_misprinted, limit_mean_dust,
    limit_moment_laplace, limit_moment_nodust, limit_moments_growth, BetaLimit, LimitMethod, LimitMomentResult,
};
pub use recursion::{
    kingman_moments, merge_coefficients, moment_table, moment_table_with, moments_o, moments_x, moments_x_with, MomentTable,
    XRecursion,
};
