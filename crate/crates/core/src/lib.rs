pub mod agg;
pub mod array;
pub mod catalog;
pub mod cluster;
pub mod config;
pub mod csv;
pub mod engine;
pub mod error;
pub mod expr;
pub mod gen;
pub mod golden;
pub mod lang;
pub mod loader;
pub mod migrate;
pub mod planner;
pub mod rel;
pub mod snapshot;
pub mod text;
pub mod value;

pub use error::{Error, ParseError, Position, Result};
pub use value::{compare, coerce, Field, ResultSet, Row, Schema, Value, ValueKind};
pub use cluster::Cluster;
