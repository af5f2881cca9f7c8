//! Activation memory planning for layer-wise CNN inference.
//!
//! Consecutive layers share one flat arena: each layer writes its output a
//! small offset below its input and overwrites input words as soon as no
//! later sliding window needs them. [`model`] computes that offset per layer,
//! [`planner`] lifts it to a whole network, [`oracle`] checks both against a
//! brute-force lifetime analysis and a bit-exact in-arena executor, and
//! [`netfile`]/[`report`]/[`cli`] are the file and command-line surface.

pub mod cli;
pub mod error;
pub mod model;
pub mod netfile;
pub mod oracle;
pub mod planner;
pub mod report;
pub mod sweep;

pub use error::{Error, Result};
pub use model::{
    apply_packing, derive_dims, min_layer_memory, min_offset, ping_pong_pair_memory, Binding,
    DerivedDims, LayerModel, LayerSpec, OffsetAnalysis, PointerParams,
};
pub use oracle::{
    execute_network_in_arena, execute_network_reference, min_safe_offset_bruteforce, random_input,
    random_weights, trace_layer, verify_layer, verify_layer_against, AccessTrace, ExecMode,
    LayerWeights, OracleReport, Tensor, Verdict,
};
pub use planner::{
    count_parameters, minimality_witness, pingpong_network, plan_network, savings_report,
    LayerPlan, MemoryPlan, NetworkSpec,
};
