//! Bandpass filtering, exponential moving standardization and rest/MI
//! segmentation.
//!
//! ```
//! use migate::signal::{apply_filter, design_butterworth_bandpass};
//!
//! let f = design_butterworth_bandpass(4, 0.5, 38.0, 250.0).unwrap();
//! assert_eq!(f.order(), 8);
//! assert!(f.magnitude(0.0) < 1e-9);
//! let y = apply_filter(&f, &[1.0; 100]);
//! assert_eq!(y.len(), 100);
//! ```

mod butterworth;
mod filter;
mod preprocess;
mod standardize;

pub use butterworth::{design_butterworth_bandpass, Biquad, BiquadCascade};
pub use filter::{apply_filter, filter_channels, filter_in_place, FilterPhase};
pub use preprocess::{segment_trial, Prepared, PreprocessConfig, MI_SECONDS, REST_SECONDS};
pub use standardize::{
    exp_moving_standardize, StandardizerState, DEFAULT_EMS_ALPHA, DEFAULT_EMS_EPS,
};
