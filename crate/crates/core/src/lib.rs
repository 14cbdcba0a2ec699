//! Benchmarking toolkit for geoparsers: corpora, matching, metrics,
//! baseline and remote geoparsers, and archived experiments.

pub mod corpus;
pub mod experiment;
pub mod gazetteer;
pub mod geoparse;
pub mod matching;
pub mod metrics;
pub mod store;
