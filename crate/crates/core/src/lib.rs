//! Finite-element construction of Green's functions for parabolic systems
//! with (possibly nonlocal) Robin boundary conditions, plus numerical
//! verification of the associated quantitative estimates: coercivity, energy
//! inequalities, Gaussian kernel bounds, duality, decay and log bounds.
//!
//! All numerics are generic over the scalar type via [`scalar::Real`];
//! concrete `f64` aliases live at the crate root.

pub mod assembly;
pub mod coeff;
pub mod coercivity;
pub mod green;
pub mod mesh;
pub mod oracle;
pub mod parabolic;
pub mod problem;
pub mod quadrature;
pub mod scalar;
pub mod verify;

pub use scalar::Real;

/// `f64` mesh.
pub type Mesh64 = mesh::Mesh<f64>;
/// `f64` coefficient tensor.
pub type CoefficientField64 = coeff::CoefficientField<f64>;
/// `f64` Robin boundary operator.
pub type RobinOperator64 = coeff::RobinOperator<f64>;
/// `f64` sparse matrix.
pub type SparseMatrix64 = assembly::SparseMatrix<f64>;
/// `f64` problem bundle.
pub type RobinProblem64 = problem::RobinProblem<f64>;
/// `f64` trajectory.
pub type Trajectory64 = parabolic::Trajectory<f64>;
