//! Scenario generators, phantoms, metrics and file formats for the
//! stabilisation and dynamic PET studies.

pub mod io;
pub mod metrics;
pub mod phantoms;
pub mod scenario;

pub use io::FrameRecord;
pub use metrics::{mean_ci, psnr, ssim};
pub use scenario::{Frame, PetScenario, PhantomKind, StabilisationScenario};
