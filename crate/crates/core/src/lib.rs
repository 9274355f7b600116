//! Subalgebraic identification of discrete-time polynomial observer systems
//! from finite sets of output time series.

pub mod error;
pub mod genred;
mod linalg;
pub mod model;
pub mod monomials;
pub mod numred;
pub mod pipeline;
pub mod toolkit;

pub use error::{Error, Result};
pub use genred::{eliminate_products, eval_monomial_map, Factorization, MonomialMap};
pub use model::{
    deserialize_model, initial_states_from_past, predict_from_past, predict_one_step, serialize_model,
    ObserverModel, PastStateMap, PredictionReport, Provenance, Scaling,
};
pub use monomials::{
    build_data_matrix, enumerate_power_matrix, eval_monomial_vector, lex_compare, partition_power_matrix,
    PowerMatrix, PowerVector,
};
pub use numred::{lk_reduce, mdtrunc, svd_trunc, LkReduced, MdTrunc, SvdTruncResult, TruncationTable};
pub use pipeline::{build_window_vectors, identify, IdentConfig, IdentDiagnostics, StateBound, TimeSeriesSet};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/monomials.md")]
    pub struct Monomials;
    #[doc = include_str!("../../../book/src/truncation.md")]
    pub struct Truncation;
    #[doc = include_str!("../../../book/src/generators.md")]
    pub struct Generators;
    #[doc = include_str!("../../../book/src/identification.md")]
    pub struct Identification;
    #[doc = include_str!("../../../book/src/observer.md")]
    pub struct Observer;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
