//! Smart-meter phase identification.
//!
//! Each meter's hourly voltage trace for a month is mean-normalized, moved to
//! its real sine-cosine Fourier representation, and compressed to a handful of
//! harmonic pairs (by default the first six multiples of the daily frequency).
//! The compressed coefficient vectors are clustered with Ward agglomerative
//! clustering and the tree is cut into `k` groups (three phases by default).
//!
//! Results are checked two ways: meters on one distribution transformer must
//! land in a single cluster ([`validation::transformer_purity`]), and cluster
//! membership must not change between months ([`validation::stability`]).
//!
//! Module map:
//!
//! - [`ingestion`]: CSV loading, completeness filtering, normalization
//! - [`spectral`]: harmonic transform, masking, reconstruction, error metric
//! - [`clustering`]: Ward linkage and tree cuts
//! - [`validation`]: purity and cross-period stability reports
//! - [`embedding`]: classical MDS for 2D plots
//! - [`synth`]: seeded synthetic feeders with known phases
//! - [`pipeline`]: the end-to-end commands behind the `phasecluster` binary

pub mod clustering;
pub mod embedding;
mod error;
pub mod format;
pub mod ingestion;
pub mod linalg;
pub mod pipeline;
pub mod spectral;
pub mod synth;
pub mod validation;

pub use error::{Error, ErrorKind, Result};
