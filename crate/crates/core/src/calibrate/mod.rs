//! Parameter estimation from frame stacks: total gain by photon transfer,
//! read variance from dark frames, Tukey-lambda shape by PPCC, and the
//! quantization-aware fit over the five-family distribution set.

mod fit;
mod photon;
mod ppcc;

pub use fit::{
    fit_distribution_set, fit_distribution_set_detailed, fit_family_censored, fit_per_channel,
    BinnedSample, DistributionSetFit, FamilyFit, FitOptions,
};
pub use photon::{
    estimate_read_variance, estimate_row_sigma, fit_mean_variance_line, photon_transfer_fit,
    stack_mean_variance, PhotonTransferFit,
};
pub use ppcc::{filliben_medians, ppcc_tukey_lambda, tukey_lambda_line_fit, PpccResult};
