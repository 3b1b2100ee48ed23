pub mod hardy;
pub mod npa;
pub mod qmath;
pub mod real;
pub mod scenario;
pub mod selftest;
pub mod tree;

pub use real::Real;

pub type CMatrix = qmath::Matrix<f64>;
pub type PureState = qmath::PureState<f64>;
pub type ProjectiveMeasurement = qmath::ProjectiveMeasurement<f64>;
pub type JordanDecomposition = qmath::JordanDecomposition<f64>;
pub type SchmidtDecomposition = qmath::SchmidtDecomposition<f64>;
pub type RealMatrix = qmath::RealMatrix<f64>;
