//! Red-flag corruption-risk indicators for public procurement and their
//! validation through multidimensional graded response models.
//!
//! The crate is `no_std` (with `alloc`): it holds the numerical core only.
//! File formats, ingestion and the command-line pipeline live in the
//! `redflag` crate.
#![no_std]

extern crate alloc;

pub mod correlation;
pub mod discretize;
pub mod flags;
pub mod grm;
pub mod matrix;
pub mod records;
pub mod selection;
pub mod special;

pub use correlation::{correlation_matrix, CorrelationMethod, CorrelationReport};
pub use discretize::{discretize_matrix, CategoricalMatrix, ThresholdSet};
pub use flags::{build_indicator_matrix, FlagId, FlagSpec, IndicatorMatrix, Polarity};
pub use grm::{fit, FitConfig, FitResult, GrmParams, RotatedSolution};
pub use matrix::Matrix;
pub use records::{AwardCriterion, ContractRecord, ProcedureType};
pub use selection::{select_dimension, Criterion, SelectionReport, SelectionRow};
