//! GC layers, corruption operators and the shared-encoder, four-head network.

mod corruption;
mod network;

pub use corruption::{
    corrupt_embeddings, corrupt_features, select_columns, CorruptionKind, CorruptionSpec,
    ReconstructionMode,
};
pub use network::{
    forward, forward_all, forward_with, gc_forward, gc_forward_sparse, init_parameters, Architecture, AuxTasks,
    DropoutStreams, ErTarget, GraphInputs, HeadOutputs, MultiTaskModel, ParamGroup, Parameter,
};
