//! Noisy-MAX belief networks with leaks: exact family semantics, inference
//! oracles, subnetwork extraction with leak folding, version diffs, a canonical
//! file format, and a layered network generator.

pub mod error;
pub mod format;
pub mod generate;
pub mod graph;
pub mod inference;
pub mod layout;
pub mod model;
pub mod noisymax;
pub mod subnet;
pub mod versioning;

pub use error::{Error, Result};
pub use format::{load_network, save_network, FrequencyMap};
pub use generate::{gen_random, GeneratorParams};
pub use inference::{compare_marginals, eliminate, enumerate_joint, MarginalTable};
pub use layout::{compute_layout, LayoutResult};
pub use model::{
    validate_network, CumulativeVector, Evidence, Network, Node, NodeId, NoisyMaxFamily, OrderedDomain,
    ValidationReport,
};
pub use noisymax::{expand_cpt, oracle_cpt, Cpt};
pub use subnet::{extract_subnetwork, select_view, soundness_audit, MarginalPolicy, Relation, Subnetwork, ViewSpec};
pub use versioning::{apply_diff, diff, version_id, NetworkDiff};
