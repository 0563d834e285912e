//! Lane-change duration analysis: trajectory ingestion, lane-change
//! extraction, parametric survival fits and accelerated failure time
//! regression.

pub mod aft;
pub mod extraction;
pub mod fitting;
pub mod ingest;
pub mod survival;
pub mod synth;
