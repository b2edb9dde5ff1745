//! Generalized Morton array layouts.
//!
//! * [`layout`]: rank-sequence layouts, their index maps, counting and enumeration.
//! * [`cache`]: trace-driven multi-level LRU cache simulation.
//! * [`patterns`]: memory access traces of matrix, stencil and factorization kernels.
//! * [`fitness`]: cycle estimate and fitness of a layout, with a memoized evaluator.
//! * [`evolve`]: (mu, lambda) evolution strategy over layouts.
//! * [`cli`]: the `genmorton` command-line tool.

pub mod bits;
pub mod cache;
pub mod cli;
pub mod evolve;
pub mod fitness;
pub mod layout;
pub mod patterns;

pub use layout::{count_layouts, enumerate_layouts, Layout, LayoutError, Shape};
