//! Joint 2-D phase unwrapping and denoising.
//!
//! The reconstruction solves
//!
//! ```text
//! min_{u, v} ||Psi^T u||_1  s.t.  ||v||_2 <= eps_n,
//!                                 ||q - grad(u + v)||_1 <= eps_w,
//!                                 u[0] = 0
//! ```
//!
//! where `q` is the wrapped gradient of the observation and `Psi` an
//! orthonormal wavelet basis (scaling coefficients excluded from the norm),
//! using a Chambolle-Pock primal-dual iteration.
//!
//! ```no_run
//! use phasecp::{phase, solver, synth};
//!
//! let spec = synth::PhantomSpec::new(synth::PhantomKind::Gaussian, 64, 64, 10.0);
//! let x = synth::make_phantom(&spec).unwrap();
//! let q = phase::wrapped_gradient(&phase::wrap_image(&x));
//! let cfg = solver::SolverConfig::for_grid(64, 64, 0.0, 0.0).unwrap();
//! let result = solver::solve(&q, cfg).unwrap();
//! println!("{} iterations", result.iterations);
//! ```

pub mod baseline;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod phase;
pub mod prox;
pub mod solver;
pub mod synth;
pub mod wavelet;

pub use error::{Error, Result};
pub use phase::{GradientField, PhaseImage, WrappedImage};
