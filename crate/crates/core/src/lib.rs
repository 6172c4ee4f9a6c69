//! Cramér-Rao-type bounds for amplitude and time-of-arrival estimation from
//! sign-quantized (1-bit), oversampled receive signals.
//!
//! The crate computes the Fisher information of an ideal receiver, a
//! pessimistic Fisher bound for the hard-limited receiver built from the
//! first two moments of the sign samples, and the resulting quantization
//! losses over SNR and oversampling grids. The [`validation`] module holds
//! Monte Carlo and exact small-instance checks of those quantities.

pub mod error;
pub mod fisher;
pub mod linalg;
pub mod noise;
pub mod scenario;
pub mod signal;
pub mod special;
pub mod validation;

pub use error::{Error, Result};
pub use fisher::{
    bound_pair, fisher_1bit_bound, fisher_ideal, loss_ratios, quantized_cov, quantized_mean,
    quantized_mean_jacobian, quantized_moments, BoundPair, FisherMatrix, LossPoint, QuantizedCov,
    QuantizedMoments,
};
pub use noise::{build_covariance, psd_solve, sample_noise, NoiseCov};
pub use scenario::{adc_power, emit_table, equal_complexity_loss, run_sweep, AdcModel, SweepSpec};
pub use signal::{
    generate_code, normalize_power, pilot_value, pulse, pulse_derivative, sample_signal, ChannelParams,
    PilotConfig, PilotSamples, SignalEval,
};
pub use special::{bivariate_normal_cdf, q_function, sinc, sine_integral, std_normal_pdf, AccuracyPolicy};

pub use faer;
