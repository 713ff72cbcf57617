//! Schema-derived fuzzing for HTTP APIs.
//!
//! The crate loads an OpenAPI 2 or 3 document, rewrites the JSON Schemas it
//! contains into a canonical form, generates valid and deliberately invalid
//! requests from them, and checks the responses of the service under test
//! against HTTP and schema semantics. Failures are shrunk and grouped into
//! unique defects.
//!
//! Module map:
//!
//! * [`schema`] loads documents, inlines references and extracts operations and links.
//! * [`canonical`] rewrites schemas to a normal form, merges and negates them.
//! * [`validate`] is an independent validator used as the test oracle.
//! * [`choice`], [`pattern`], [`format`] and [`generate`] turn schemas into values.
//! * [`transport`] builds, serialises and sends concrete requests.
//! * [`oracle`] holds the response checks and defect keys.
//! * [`stateful`] drives link-based request sequences.
//! * [`engine`] runs campaigns, shrinks failures and writes reports.
//! * [`demo`] is a small service with known defects used for end-to-end tests.

pub mod canonical;
pub mod cases;
pub mod choice;
pub mod demo;
pub mod engine;
pub mod format;
pub mod generate;
pub mod http;
mod json;
pub mod oracle;
pub mod pattern;
pub mod schema;
pub mod stateful;
pub mod transport;
pub mod validate;

pub use schema::{extract_link_graph, extract_operations, load_document, resolve_references};
pub use canonical::{canonicalise, merge_constraints, negate_for_testing, CanonicalSchema};
pub use validate::validate_instance;
pub use choice::ChoiceSequence;
pub use engine::{emit_report, run_campaign, CampaignConfig, RunReport};

/// Version string used in the default `User-Agent` header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
