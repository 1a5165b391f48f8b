//! Wire format of the completion endpoint and JSONL persistence, so recorded
//! and simulated runs go through the same pipeline.

pub mod jsonl;
#[cfg(feature = "live")]
pub mod live;
pub mod wire;

pub use jsonl::{
    load_pool, load_runs, persist_pool, persist_runs, write_pool, write_runs, SCHEMA_VERSION,
};
pub use wire::{
    build_request, parse_response, response_to_wire, Message, ParseWarning, ParsedResponse,
    PromptTemplate, RunContext, WireRequest,
};
