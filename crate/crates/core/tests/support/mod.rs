//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

pub mod metric_oracle;
pub mod policy_oracle;
