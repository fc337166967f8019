//! Signal preprocessing: filter design, filtering, re-referencing,
//! resampling, epoching.

pub mod design;
pub mod filt;
pub mod preprocess;
pub mod resample;

pub use design::{design_filter, Biquad, FilterFamily, FilterSpec, Sos};
pub use filt::{apply_filter, filtfilt, sosfilt};
pub use preprocess::{common_average_reference, segment_epochs};
pub use resample::resample;
