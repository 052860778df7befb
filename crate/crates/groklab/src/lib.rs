//! Numerical laboratory for grokking on finite-group arithmetic.
//!
//! Two-layer networks `Ŷ = σ(XW)V` trained on `(h₁, h₂) ↦ h₁h₂`, the
//! Stage-II energy landscape that governs hidden-feature emergence, and
//! numeric checks for the structural results about it.
//!
//! ```
//! use groklab::groupkit::Group;
//! use groklab::taskgen::full_task;
//! use groklab::energyscape::{ascend, AscentConfig, Task};
//! use groklab::netdyn::Activation;
//!
//! let g = Group::cyclic(11);
//! let task = Task::full(&full_task(&g), Activation::Quadratic);
//! let w0 = groklab::rng::normal_vec(&mut groklab::rng::stream(7, 0), 22);
//! let res = ascend(&w0, &task, &AscentConfig::default()).unwrap();
//! assert!(res.converged);
//! assert!((res.energy - 11.0 / 4.0).abs() < 1e-6);
//! ```

pub mod energyscape;
pub mod error;
pub mod groupkit;
pub mod netdyn;
pub mod numkit;
pub mod rng;
pub mod taskgen;
pub mod theoremlab;

pub use error::{Error, Result};
pub use numkit::Mat;
