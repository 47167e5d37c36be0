//! Finite elements for the fractional Laplacian on a disk.
//!
//! Solves the homogeneous Dirichlet problem (-Delta)^s u = f on a
//! two-dimensional domain with piecewise linear elements. The nonlocal
//! bilinear form couples every element pair, so the stiffness matrix is
//! dense; touching pairs are integrated with Duffy-type quadrature and the
//! integral over the exterior of an enclosing ball reduces to a radial
//! closed form.
//!
//! Pipeline: [`mesh`] (generation, I/O, pair classification),
//! [`quadtables`] (rules and generator matrices), [`kernels`]
//! (element-pair blocks), [`assembly`] (dense stiffness matrix and load
//! vector), [`solver`] (Cholesky / CG), [`analytic`] (exact solutions on
//! the unit disk and error norms).

pub mod analytic;
pub mod assembly;
pub mod cli;
pub mod kernels;
pub mod mesh;
pub mod quadtables;
pub mod solver;
