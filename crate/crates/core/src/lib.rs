//! Model reduction for quantum feedback networks described by Ito generator
//! matrices: closing internal feedback loops, adiabatically eliminating fast
//! degrees of freedom, and checking that the two reductions commute.
//!
//! Both reductions are Schur complements. [`blockmat`] supplies the block
//! algebra, [`generator`] the generator and scaled-family types, [`reduce`]
//! the reductions, and [`dynamics`] a master-equation oracle used to check
//! them. [`spec_file`] and [`cli`] provide the JSON file format and the
//! `itoreduce` command.

pub mod blockmat;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod generator;
pub mod dynamics;
pub mod random;
pub mod reduce;
pub mod report;
pub mod spec_file;

pub use blockmat::{BlockOperatorMatrix, BlockPartition, ComplexMatrix, C64};
pub use error::{Error, Result};
pub use generator::{ChannelRole, ItoGeneratorMatrix, ScaledGeneratorFamily, SlhTriple, SubspaceDecomposition};
pub use report::ReductionReport;
