//! Golden reference executors and bundle I/O.

pub mod bundle;
pub mod exec;

pub use bundle::{host_decisions, Blob, GoldenBundle};
pub use exec::{
    adapt_input, conv1d_dilated_ref, conv2d_ref, deconv2d_ref, dense_ref, maxpool_ref, nlfg_exact,
    run_chain, run_layer, svm_decision, svm_decision_ref, svm_norm_layer_ref, svm_norm_ref,
};
