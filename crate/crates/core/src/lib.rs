//! Mention-pair coreference resolution trained with an actor-critic objective.
//!
//! Pipeline: [`corpus`] loads documents and token embeddings; [`span`] builds and
//! prunes candidate mention spans; [`env`] is the decision process whose agent links
//! each mention to an antecedent, rewarded by a learned biaffine pair scorer;
//! [`trainer`] learns the actor, critic, scorer and span model jointly; [`decode`]
//! runs the greedy policy; [`metrics`] scores predicted clusters.

pub mod corpus;
pub mod decode;
pub mod document;
pub mod env;
pub mod error;
pub mod metrics;
pub mod model;
pub mod span;
pub mod trainer;

pub use document::{Cluster, Document, Span};
pub use error::{CorefError, Result};
pub use model::{CorefModel, EpochRecord, Sidecar};
