//! Comparison strategies: full exchange (FedE/FedEP, FedEPL), no exchange
//! (Single), co-distilled low/high-dimensional tables (FedE-KD) and
//! SVD-compressed updates (FedE-SVD, FedE-SVD+).

mod fede;
mod kd;
mod single;
mod svd;
mod svdplus;

pub use fede::{fede_round, fedepl_dimension, full_uploads};
pub use kd::{kd_local_loss, kd_round, kd_train_epoch, kl_divergence, DualEmbeddingTable, KdScores};
pub use single::single_baseline;
pub use svd::{
    orthogonality_regularizer, orthogonality_regularizer_grad, svd_compress, svd_params, svd_restore,
    thin_svd, SvdConfig, SvdFactors,
};
pub use svdplus::{fede_svd_round, svdplus_final_epoch, svdplus_objective, UpdateFactors};
