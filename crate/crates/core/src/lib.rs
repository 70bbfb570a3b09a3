//! Static background estimation for greyscale sequences where the
//! background is frequently occluded by clutter.
//!
//! The pipeline runs in three stages:
//!
//! 1. each frame is tiled into blocks and every block's pixel vector is
//!    clustered online into weighted representatives ([`repset`]);
//! 2. nodes whose evidence is unambiguous are labelled directly, and the
//!    rest are filled in raster passes that score candidates by a
//!    smoothness prior over spectral clique energies ([`mrf`], [`spectral`]);
//! 3. an optional ICM sweep refines labels until no single-node change
//!    improves its posterior ([`mrf::icm_refine`]).
//!
//! [`eval`] scores estimates against ground truth, [`synth`] generates
//! cluttered test sequences, and [`cli`] wires everything into the
//! `bgestim` binary.
//!
//! ```
//! use bgestim::{estimate_background, EstimatorConfig, FrameSequence, Raster};
//!
//! // A 32x32 scene: a dark square sits over the background for the first
//! // six of ten frames.
//! let frames: Vec<Raster> = (0..10)
//!     .map(|f| {
//!         Raster::from_fn(32, 32, |x, y| {
//!             let occluded = f < 6 && (8..24).contains(&x) && (8..24).contains(&y);
//!             if occluded { 30 } else { 160 }
//!         })
//!     })
//!     .collect();
//! let sequence = FrameSequence::from_frames(frames, 25.0)?;
//!
//! let config = EstimatorConfig { block_size: 8, ..EstimatorConfig::default() };
//! let outcome = estimate_background(&sequence, &config)?;
//! assert_eq!(outcome.background.get(16, 16), 160);
//! # Ok::<(), bgestim::Error>(())
//! ```

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod frame_io;
pub mod mrf;
pub mod report;
pub mod repset;
pub mod snapshot;
pub mod spectral;
pub mod synth;

pub use config::EstimatorConfig;
pub use error::{Error, Result};
pub use eval::{age, clustered_error_pixels, error_pixels, median_oracle, similarity, Mask};
pub use frame_io::{FrameSequence, NodeGrid, Raster};
pub use mrf::{estimate_background, BackgroundGrid, EstimateOutcome, GibbsParams};
pub use repset::{NoiseThresholds, SceneModel};
