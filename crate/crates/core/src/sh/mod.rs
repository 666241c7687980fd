//! Spherical-harmonics basis, quadrature analysis and rotation.

pub mod basis;
pub mod rotation;

pub use basis::{
    acn, degree_order, n_coeffs, order_from_channels, sh_analysis, sh_basis, sh_synthesis,
    sh_vector, sh_vector_into, ShBasisMatrix,
};
pub use rotation::{rotate_sh, wigner_d_azimuth, wigner_d_matrix, EulerZyz, WignerDMatrix};
