//! Construction and spectral stability of shock-fronted travelling waves in
//! a reaction-nonlinear-diffusion model with composite (viscous +
//! fourth-order) regularisation.
//!
//! The crate is organised around the singular-perturbation decomposition of
//! the travelling-wave problem:
//!
//! * [`model`] — parameters, the nonlinear diffusivity/reaction/potential,
//!   and classification of equilibria and folded singularities;
//! * [`layer`] — the fast layer problem: shock-height selection by equal-area
//!   and generalised-area rules, and the (delta, w) bifurcation branch;
//! * [`reduced`] — the slow desingularised flow: singular heteroclinics,
//!   parameter continuation, and the global singular bifurcations
//!   (tangency, nonmonotone waves, FS-to-S connections, canard waves);
//! * [`melnikov`] — smooth and piecewise-smooth Melnikov integrals along
//!   computed heteroclinics;
//! * [`fullwave`] — the full 4D heteroclinic as a collocation boundary-value
//!   problem for eps > 0;
//! * [`spectral`] — dispersion relations, large-eigenvalue asymptotics and
//!   the Riccati-Evans point-spectrum search by contour winding.

pub mod acceptance;
pub mod cxlinalg;
pub mod fullwave;
pub mod layer;
pub mod melnikov;
pub mod model;
pub mod ode;
pub mod poly;
pub mod quad;
pub mod reduced;
pub mod roots;
pub mod spectral;

pub use model::ModelParams;
