//! Local medical-assistant stack: corpus ingestion, character chunking,
//! embedding, exact and scalar-quantized vector search, hardware-aware model
//! selection, a retrieval-grounded chat chain, and an authenticated HTTP
//! gateway tying them together.

pub mod chunk;
pub mod embed;
pub mod index;
pub mod ingest;
pub mod select;
pub mod rag;
pub mod adapter;
pub mod bench;
pub mod cli;
pub mod gateway;
