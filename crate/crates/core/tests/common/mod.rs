//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;
pub mod metric_oracle;
pub mod pipeline;
