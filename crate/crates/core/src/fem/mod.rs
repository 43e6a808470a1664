//! Taylor-Hood discretization: quadrature, basis functions, assembly and field norms.

pub mod assembly;
pub mod basis;
pub mod field;
pub mod quadrature;

pub use assembly::{assemble_p1_mass, assemble_stokes, DofMap, StokesSystem};
pub use basis::{eval_basis, Family};
pub use field::{
    abs_integral_linear, divergence_metrics, field_norm, p1_error_l2, p2_error_h1_semi, DiscreteField,
    DivergenceMetrics, NormKind, Space,
};
pub use quadrature::{quadrature_rule, QuadratureRule};
