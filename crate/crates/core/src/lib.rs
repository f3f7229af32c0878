//! A desk-scale laboratory for generative retrieval scaling laws.
//!
//! The crate covers the full loop:
//!
//! * [`corpus`]: documents, queries and relevance judgments, either generated
//!   synthetically with known relevance or loaded from JSON-lines files.
//! * [`identifier`]: document identifiers, both query-overlap n-grams and
//!   residual-quantization code sequences, plus their inverse indexes.
//! * [`seqmodel`]: a capacity-parameterized recurrent model that generates
//!   identifiers from queries, trained with teacher-forced cross-entropy.
//! * [`decode`]: constrained beam search, analytical FLOPs accounting and
//!   document scoring.
//! * [`metrics`]: contrastive generation loss and the usual ranking metrics.
//! * [`scalefit`]: Levenberg fitting of saturating power laws and the joint
//!   model/data law.
//! * [`harness`]: sweep orchestration, manifests, CSV/JSON output and SVG
//!   plots.

pub mod corpus;
pub mod decode;
pub mod error;
pub mod harness;
pub mod identifier;
pub mod metrics;
pub mod scalefit;
pub mod seqmodel;

pub(crate) mod util;

pub use error::{Error, Result};
