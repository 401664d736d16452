//! Clustering with mixtures of joint generalized hyperbolic distributions.
//!
//! Layers, bottom up: [`special_fns`] (log-scale Bessel `K_ν`), [`gig`]
//! (generalized inverse Gaussian law), [`jghd`] (one mixture component),
//! [`ecm`] (the fitter), [`select`] (BIC grid search), [`metrics`] (ARI),
//! [`dataio`] (datasets and exports) and [`cli`].

pub mod cli;
pub mod dataio;
pub mod ecm;
pub mod error;
pub mod gig;
pub mod jghd;
pub mod metrics;
pub mod select;
pub mod special_fns;

pub use error::{Error, Result};
