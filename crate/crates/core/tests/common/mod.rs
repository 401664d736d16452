//! Oracles and fixtures shared by the integration tests. The oracles never
//! call into the crate's Bessel or GIG code paths.
#![allow(dead_code)]
pub mod fixtures;
pub mod jghd_oracle;
pub mod oracle;
