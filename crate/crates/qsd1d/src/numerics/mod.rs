//! Shared numerical kernels: quadrature, tridiagonal eigensolves, dense
//! matrix exponential, interpolation.

pub mod expm;
pub mod interp;
pub mod quad;
pub mod tridiag;
