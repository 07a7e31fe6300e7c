//! Localized parametrix boundary-domain integral equations for 3×3 elliptic systems
//! with variable coefficients, plus Wiener-Hopf symbol tools.

pub mod expr;
pub mod geometry;
pub mod lbdie;
pub mod localizers;
pub mod pde_model;
pub mod potentials;
pub mod quadrature;
pub mod wiener_hopf;
