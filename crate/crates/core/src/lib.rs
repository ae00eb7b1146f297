//! Stochastic point vortices driven by environmental transport noise on the
//! flat torus, observables of their empirical measure, and a pseudo-spectral
//! solver for the limiting 2D Navier-Stokes vorticity equation.

pub mod basis;
pub mod density;
pub mod diagnostics;
pub mod dynamics;
pub mod kernel;
pub mod noise;
pub mod rng;
pub mod spectral;
pub mod sum;
pub mod torus;
