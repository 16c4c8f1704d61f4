//! Workload data model: quantized tensors, layer descriptors, loop nests,
//! block sparsity and PE output-stage semantics.

pub mod layer;
pub mod loopnest;
pub mod requant;
pub mod sparsity;
pub mod svm;
pub mod tensor;
pub mod workload;

pub use layer::{validate_layer, Activation, LayerDescriptor, LayerKind};
pub use loopnest::{derive_loop_nest, Dataflow, LoopNest};
pub use requant::{output_stage, requantize, NlFunction, NlfgTable};
pub use sparsity::{apply_block_sparsity, SparsityIndexMap};
pub use svm::{Norm, SvmModel};
pub use tensor::{Precision, QuantTensor};
pub use workload::{LayerSpec, SvmHost, Workload};
