//! Learned approximate query processing.
//!
//! The pipeline turns a table into a model that answers aggregate queries
//! without scanning data:
//!
//! 1. [`querygen`] samples flat aggregate queries from a query template,
//! 2. [`executor`] labels them by exact full-scan evaluation,
//! 3. [`encoder`] turns each query into a fixed-shape binary matrix,
//! 4. [`nnet`] fits an LSTM regressor from matrices to labels,
//! 5. [`metrics`] scores the model (NRMSE, latency, throughput) and profiles
//!    the data (entropy, input variance).
//!
//! [`store`] holds the immutable columnar table everything above reads from.

pub mod encoder;
pub mod executor;
pub mod hash;
pub mod metrics;
pub mod nnet;
pub mod querygen;
pub mod store;
pub mod synth;

pub use encoder::{EncodedQuery, TokenVocabulary};
pub use executor::GroupByResult;
pub use nnet::{LstmModel, ModelConfig, TrainReport};
pub use querygen::{
    AggregationFunction, AggregationTarget, BetweenFilter, FlatQuery, GroupByQuery, InFilter,
    LabeledQuery, QueryTemplate,
};
pub use store::{AttributeKind, AttributeSchema, ContinuousStats, Dataset};
