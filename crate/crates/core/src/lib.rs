//! Spinal cord morphometrics toolkit.
//!
//! Computes per-slice shape measures from 3D segmentation masks, evaluates
//! segmentation quality against references, generates synthetic phantoms
//! with closed-form morphometrics, and tracks morphometric drift across
//! successive segmentation-model versions in an append-only store.
//!
//! The math lives in modules generic over the [`scalar::Real`] voxel
//! scalar; the aliases below pin the `f64` instantiations the pipeline
//! works with. Masks parse from NIfTI-1 files (`.nii` / `.nii.gz`), get
//! reoriented to RPI, binarized at 0.5, and measured slice by slice along
//! the inferior-superior axis.

#![allow(clippy::needless_range_loop)]

pub mod drift;
pub mod geometry;
pub mod manifest;
pub mod nifti;
pub mod phantom;
pub mod scalar;
pub mod seg_metrics;
pub mod volume;

/// Default working instantiations (64-bit voxels and measures).
pub type Volume = volume::Volume<f64>;
pub type BinaryMask = geometry::BinaryMask<f64>;
pub type LevelLabels = geometry::LevelLabels<f64>;
pub type SliceMorphometrics = geometry::SliceMorphometrics<f64>;
pub type SubjectMorphometrics = geometry::SubjectMorphometrics<f64>;
pub type MetricTriple = seg_metrics::MetricTriple<f64>;
pub type PhantomSpec = phantom::PhantomSpec<f64>;

/// Single-precision carriers for memory-constrained batch work.
pub type Volume32 = volume::Volume<f32>;
pub type BinaryMask32 = geometry::BinaryMask<f32>;

pub use geometry::Metric;
pub use volume::{Orientation, VolumeError};
