//! Hyperspectral scene classification and clutter detection with
//! filter-bank features, locally linear embedding and trial ensembles.
//!
//! ```no_run
//! use hsi_manifold::{datacube, ensemble, features::SpectrumScope};
//!
//! let cube = datacube::load_cube("scene.hdr")?;
//! let mask = datacube::load_label_mask("scene.labels", &cube)?;
//! let refs = datacube::sample_reference(&mask, 0.10, 7)?;
//! let trials = ensemble::enumerate_trials(&ensemble::TrialGrid::standard())?;
//! let maps = ensemble::run_trials(&cube, &trials, &refs, mask.num_classes(), 51, 7, |_, _| Ok(()))
//!     .map_err(|(_, e)| e)?;
//! let tally = ensemble::tally(&maps)?;
//! let h = ensemble::entropy(&tally)?;
//! # let _ = (h, SpectrumScope::Whole);
//! # Ok::<(), hsi_manifold::Error>(())
//! ```

pub mod classify;
pub mod datacube;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod lle;
pub mod neighbors;
pub mod synthetic;

pub use classify::{accuracy_report, average_accuracy, nn_classify, overall_accuracy, AccuracyReport, LabelMap};
pub use datacube::{sample_reference, ClassInfo, HsiCube, Label, LabelMask, ReferenceSet};
pub use ensemble::{
    clutter_split, consensus, entropy, enumerate_trials, run_trial, run_trials, tally, ClutterResult, EnsembleTally,
    EntropyMap, TrialConfig, TrialGrid,
};
pub use error::{Error, ErrorKind, Result};
pub use features::{assemble_features, FeatureImage, FeatureParams, FilterBank, SpectrumScope};
pub use lle::{embed_pipeline, reduce_dimension, ManifoldCoords, SparseWeightMatrix};
pub use neighbors::{windowed_knn, NeighborList};
