//! The AllSet layer: two multiset functions, nodes to hyperedges and back.

mod grouping;
mod layer;
mod multiset;
pub mod theorems;

pub use grouping::{Direction, Grouping, Structure, MAX_PAIR_STATES};
pub use layer::{AllSetGraph, AllSetLayer, AllSetLayerSpec, AllSetNetwork, AllSetNetworkSpec, Variant};
pub use multiset::{
    AggregatorSpec, MultisetFunction, MultisetFunctionSpec, PostSpec, SecondArg, SetTransformerSpec, WeightRule,
};
