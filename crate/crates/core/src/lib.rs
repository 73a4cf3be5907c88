//! Agentic knowledge-graph environment and trajectory synthesis.
//!
//! The crate is organized along the data flow:
//!
//! * [`kg`]: triple storage, entity resolution, CVT flattening, SPARQL templates
//! * [`toolbox`]: the agent's `get_relations` / `get_triples` tools with BM25 ranking
//! * [`walk`]: constrained random walks producing reasoning paths
//! * [`gateway`]: chat/embedding client with a scripted offline stub
//! * [`agent`]: tag grammar, episode loop and trajectory schema
//! * [`synth`]: question synthesis, filtering, feedback simulation and assembly
//! * [`eval`]: rejection sampling, contamination analysis and metrics

pub mod agent;
pub mod eval;
pub mod gateway;
pub mod kg;
pub mod limit;
pub mod synth;
pub mod toolbox;
pub mod walk;

pub use kg::{Direction, Entity, EntityId, GraphStore, KgError, KnowledgeGraph, Triple, TripleRecord};
