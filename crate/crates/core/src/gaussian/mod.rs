//! Special functions and quadrature primitives shared by every level evaluator.

mod integral;
mod quadrature;
mod special;

pub use integral::{i1, GaussianQuadratic, I1Partials, QuadraticTangent};
pub use quadrature::{cached_rule, expect_gaussian, gauss_hermite, QuadRule, MAX_NODES};
pub use special::{erf, erfc, erfcx, norm_cdf, norm_pdf, norm_sf, FRAC_1_SQRT_2PI};
