//! Finite-depth approximations of continuum random trees built by recursive
//! grafting of random strings of beads, embedded in sparse `l1` coordinates
//! indexed by Ulam-Harris words.
//!
//! The crate is organised by layer:
//!
//! * [`word`], [`point`], [`measure`], [`tree`]: exact data structures.
//! * [`samplers`]: Poisson-Dirichlet strings and their variants.
//! * [`grafting`]: the grafting map in abstract and embedded form.
//! * [`builder`]: recursive builds, bead splitting and line breaking.
//! * [`metrics`]: Hausdorff, Prokhorov and Wasserstein computations.
//! * [`analysis`]: Malthusian exponent, martingales, energies, box counting.
//! * [`levy`]: growth-fragmentation cumulants and cell simulation.

pub mod analysis;
pub mod builder;
pub mod error;
pub mod grafting;
pub mod levy;
pub mod measure;
pub mod metrics;
pub mod point;
pub mod rng;
pub mod samplers;
pub mod stats;
pub mod tree;
pub mod word;

pub use error::{Error, Result};
pub use measure::{Cdf, TreeMeasure};
pub use point::{l1_distance, SparsePoint};
pub use samplers::{GeneralizedString, StringSampler};
pub use tree::{EmbeddedTree, Segment};
pub use word::UlamWord;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
