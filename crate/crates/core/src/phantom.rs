//! Synthetic cord-like volumes with analytically known morphometrics.
//!
//! Phantoms are rasterized by voxel-center containment so the relationship
//! between the generator and the geometry measurements is an exact oracle:
//! no partial volumes, no anti-aliasing. `perturb` and `make_cohort`
//! simulate model-version differences at desk scale.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{BinaryMask, GeometryError, LevelLabels};
use crate::manifest::{write_manifest, ManifestError, ManifestRow};
use crate::nifti::{write_volume, Datatype, NiftiError};
use crate::scalar::{is_positive, real, Real};
use crate::seg_metrics::surface_voxels;
use crate::volume::{Volume, VolumeError};

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("phantom parameter {name} = {value} must be positive")]
    BadParameter { name: &'static str, value: f64 },
    #[error("taper ratio {0} outside (0, 1]")]
    BadTaperRatio(f64),
    #[error("jitter {0} outside [0, 1]")]
    BadJitter(f64),
    #[error("shape spans {needed:?} voxels plus margin but the grid is {given:?}")]
    ShapeExceedsGrid {
        needed: [usize; 3],
        given: [usize; 3],
    },
    #[error("cohort needs at least one subject and one contrast")]
    EmptyCohort,
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Nifti(#[from] NiftiError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    EllipticCylinder,
    TaperedCylinder,
    Box,
}

/// Slice span painted with one vertebral level (inclusive bounds).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelSpan {
    pub level: u32,
    pub first_slice: usize,
    pub last_slice: usize,
}

/// Geometric description of a phantom. Semi-axes are in mm: `ap_semi_axis`
/// spans the anteroposterior direction (voxel axis 1 in RPI),
/// `rl_semi_axis` the right-left direction (axis 0). Boxes use the
/// semi-axes as half-extents.
#[derive(Debug, Clone)]
pub struct PhantomSpec<T> {
    pub kind: PhantomKind,
    pub ap_semi_axis: T,
    pub rl_semi_axis: T,
    pub length: T,
    pub voxel_dims: [T; 3],
    pub taper_ratio: Option<T>,
    pub level_plan: Vec<LevelSpan>,
    /// Explicit grid, validated to contain the shape plus a one-voxel
    /// margin; derived automatically when absent.
    pub grid_extents: Option<[usize; 3]>,
    /// Shape-center offset from the grid center, mm per voxel axis.
    pub center_offset_mm: [T; 3],
}

impl<T: Real> PhantomSpec<T> {
    pub fn elliptic(ap_semi_axis: T, rl_semi_axis: T, length: T, voxel_dims: [T; 3]) -> Self {
        PhantomSpec {
            kind: PhantomKind::EllipticCylinder,
            ap_semi_axis,
            rl_semi_axis,
            length,
            voxel_dims,
            taper_ratio: None,
            level_plan: Vec::new(),
            grid_extents: None,
            center_offset_mm: [T::zero(); 3],
        }
    }

    fn validate(&self) -> Result<(), PhantomError> {
        let checks = [
            ("ap_semi_axis", self.ap_semi_axis),
            ("rl_semi_axis", self.rl_semi_axis),
            ("length", self.length),
            ("voxel_dim_x", self.voxel_dims[0]),
            ("voxel_dim_y", self.voxel_dims[1]),
            ("voxel_dim_z", self.voxel_dims[2]),
        ];
        for (name, v) in checks {
            if !is_positive(v) {
                return Err(PhantomError::BadParameter {
                    name,
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        if let Some(r) = self.taper_ratio {
            if !(r > T::zero() && r <= T::one()) {
                return Err(PhantomError::BadTaperRatio(r.to_f64().unwrap_or(f64::NAN)));
            }
        }
        Ok(())
    }

    /// Voxels the shape spans along each axis, before margin.
    fn span_voxels(&self) -> [usize; 3] {
        let two = real::<T>(2.0);
        let span = |extent_mm: T, dim: T| -> usize {
            (extent_mm / dim).ceil().to_f64().unwrap().max(1.0) as usize
        };
        [
            span(two * self.rl_semi_axis, self.voxel_dims[0]),
            span(two * self.ap_semi_axis, self.voxel_dims[1]),
            span(self.length, self.voxel_dims[2]),
        ]
    }

    /// Grid the phantom rasterizes onto: the shape span plus a one-voxel
    /// margin on each side (widened to absorb any center offset), or the
    /// explicit `grid_extents` when given.
    pub fn resolved_grid(&self) -> Result<[usize; 3], PhantomError> {
        self.validate()?;
        let span = self.span_voxels();
        let mut needed = [0usize; 3];
        for axis in 0..3 {
            let shift = (self.center_offset_mm[axis].abs() / self.voxel_dims[axis])
                .ceil()
                .to_f64()
                .unwrap() as usize;
            needed[axis] = span[axis] + 2 + 2 * shift;
        }
        match self.grid_extents {
            None => Ok(needed),
            Some(given) => {
                if (0..3).any(|a| given[a] < needed[a]) {
                    Err(PhantomError::ShapeExceedsGrid { needed, given })
                } else {
                    Ok(given)
                }
            }
        }
    }
}

/// Closed-form per-slice values for a generated phantom.
#[derive(Debug, Clone)]
pub struct AnalyticTruth<T> {
    kind: PhantomKind,
    ap_semi_axis: T,
    rl_semi_axis: T,
    length: T,
    taper_ratio: T,
    slice_dim: T,
    center_slice: T,
    slice_count: usize,
}

/// Expected measures for one slice of the continuous shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceTruth<T> {
    pub area: T,
    pub ap_diameter: T,
    pub transverse_diameter: T,
    pub compression_ratio: T,
    pub eccentricity: T,
    pub solidity: T,
}

impl<T: Real> AnalyticTruth<T> {
    /// Truth for the slice at index `k`, `None` outside the shape's extent.
    pub fn slice(&self, k: usize) -> Option<SliceTruth<T>> {
        if k >= self.slice_count {
            return None;
        }
        let w = (real::<T>(k as f64) - self.center_slice) * self.slice_dim;
        let half_len = self.length * real::<T>(0.5);
        if w.abs() > half_len {
            return None;
        }
        let t = (w + half_len) / self.length;
        let scale = T::one() + (self.taper_ratio - T::one()) * t;
        let a = self.ap_semi_axis * scale;
        let b = self.rl_semi_axis * scale;
        let two = real::<T>(2.0);
        let area = match self.kind {
            PhantomKind::Box => (two * a) * (two * b),
            _ => real::<T>(std::f64::consts::PI) * a * b,
        };
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let ratio = lo / hi;
        Some(SliceTruth {
            area,
            ap_diameter: two * a,
            transverse_diameter: two * b,
            compression_ratio: a / b,
            eccentricity: (T::one() - ratio * ratio).sqrt(),
            solidity: T::one(),
        })
    }
}

/// What `generate` produces: the rasterized mask, the painted level
/// labels, and the closed-form truth.
pub type GeneratedPhantom<T> = (BinaryMask<T>, LevelLabels<T>, AnalyticTruth<T>);

/// Rasterizes the phantom: a voxel is set iff its center lies inside the
/// continuous shape. Returns the mask in RPI, labels painted per the level
/// plan, and the analytic truth.
pub fn generate<T: Real>(spec: &PhantomSpec<T>) -> Result<GeneratedPhantom<T>, PhantomError> {
    let extents = spec.resolved_grid()?;
    let [nx, ny, nz] = extents;
    let dims = spec.voxel_dims;
    let half = real::<T>(0.5);
    let center = [
        (real::<T>(nx as f64) - T::one()) * half + spec.center_offset_mm[0] / dims[0],
        (real::<T>(ny as f64) - T::one()) * half + spec.center_offset_mm[1] / dims[1],
        (real::<T>(nz as f64) - T::one()) * half + spec.center_offset_mm[2] / dims[2],
    ];
    let taper = spec.taper_ratio.unwrap_or_else(T::one);
    let half_len = spec.length * half;

    let mut voxels = vec![T::zero(); nx * ny * nz];
    for k in 0..nz {
        let w = (real::<T>(k as f64) - center[2]) * dims[2];
        if w.abs() > half_len {
            continue;
        }
        let t = (w + half_len) / spec.length;
        let scale = T::one() + (taper - T::one()) * t;
        let a = spec.ap_semi_axis * scale;
        let b = spec.rl_semi_axis * scale;
        for j in 0..ny {
            let v = (real::<T>(j as f64) - center[1]) * dims[1];
            for i in 0..nx {
                let u = (real::<T>(i as f64) - center[0]) * dims[0];
                let inside = match spec.kind {
                    PhantomKind::Box => u.abs() <= b && v.abs() <= a,
                    _ => {
                        let su = u / b;
                        let sv = v / a;
                        su * su + sv * sv <= T::one()
                    }
                };
                if inside {
                    voxels[i + nx * (j + ny * k)] = T::one();
                }
            }
        }
    }

    let affine = rpi_affine(dims);
    let mask = BinaryMask::from_volume(Volume::new(extents, voxels, affine)?)?;

    let mut label_voxels = vec![T::zero(); nx * ny * nz];
    for span in &spec.level_plan {
        for k in span.first_slice..=span.last_slice.min(nz - 1) {
            for j in 0..ny {
                for i in 0..nx {
                    if mask.is_set(i, j, k) {
                        label_voxels[i + nx * (j + ny * k)] = real(span.level as f64);
                    }
                }
            }
        }
    }
    let labels = LevelLabels::volumetric(Volume::new(extents, label_voxels, affine)?)?;

    let truth = AnalyticTruth {
        kind: spec.kind,
        ap_semi_axis: spec.ap_semi_axis,
        rl_semi_axis: spec.rl_semi_axis,
        length: spec.length,
        taper_ratio: taper,
        slice_dim: dims[2],
        center_slice: center[2],
        slice_count: nz,
    };
    Ok((mask, labels, truth))
}

/// RPI voxel-to-world affine: +x stays Right, axes 1 and 2 flip so they
/// increase toward Posterior and Inferior.
pub fn rpi_affine<T: Real>(dims: [T; 3]) -> [[T; 4]; 4] {
    let z = T::zero();
    [
        [dims[0], z, z, z],
        [z, -dims[1], z, z],
        [z, z, -dims[2], z],
        [z, z, z, T::one()],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    Dilate,
    Erode,
}

impl std::str::FromStr for MorphOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dilate" => Ok(MorphOp::Dilate),
            "erode" => Ok(MorphOp::Erode),
            other => Err(format!("unknown morphology op '{other}'")),
        }
    }
}

/// Binary dilation or erosion by `layers` 6-connected shells, clipped at
/// the grid boundary. Erosion may empty the mask; check `is_empty` on the
/// result when that matters.
pub fn perturb<T: Real>(mask: &BinaryMask<T>, op: MorphOp, layers: usize) -> BinaryMask<T> {
    let [nx, ny, nz] = mask.extents();
    let mut current: Vec<bool> = mask
        .volume()
        .voxels()
        .iter()
        .map(|&v| v == T::one())
        .collect();
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    for _ in 0..layers {
        let mut next = current.clone();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let neighbors = [
                        (i > 0).then(|| idx(i - 1, j, k)),
                        (i + 1 < nx).then(|| idx(i + 1, j, k)),
                        (j > 0).then(|| idx(i, j - 1, k)),
                        (j + 1 < ny).then(|| idx(i, j + 1, k)),
                        (k > 0).then(|| idx(i, j, k - 1)),
                        (k + 1 < nz).then(|| idx(i, j, k + 1)),
                    ];
                    match op {
                        MorphOp::Dilate => {
                            if !current[idx(i, j, k)]
                                && neighbors.iter().flatten().any(|&n| current[n])
                            {
                                next[idx(i, j, k)] = true;
                            }
                        }
                        MorphOp::Erode => {
                            // Out-of-grid neighbors count as background.
                            if current[idx(i, j, k)]
                                && (neighbors.iter().any(|n| n.is_none())
                                    || neighbors.iter().flatten().any(|&n| !current[n]))
                            {
                                next[idx(i, j, k)] = false;
                            }
                        }
                    }
                }
            }
        }
        current = next;
    }
    let voxels: Vec<T> = current
        .into_iter()
        .map(|b| if b { T::one() } else { T::zero() })
        .collect();
    BinaryMask::from_volume(mask.volume().with_voxels(voxels))
        .expect("morphology preserves binarity and orientation")
}

/// Cohort generation parameters. The boundary jitter model draws, for each
/// surface voxel, a uniform variate from a ChaCha8 stream seeded per
/// (subject, contrast): with probability `jitter` the voxel is perturbed,
/// half the time by removal and half by adding its background 6-neighbors.
#[derive(Debug, Clone)]
pub struct CohortSpec {
    pub n_subjects: usize,
    pub contrasts: Vec<String>,
    pub version_id: String,
    /// Per-surface-voxel perturbation probability in [0, 1]; 0 leaves every
    /// contrast of a subject voxel-identical.
    pub jitter: f64,
    pub seed: u64,
    pub base: PhantomSpec<f64>,
    /// Relative half-range of the per-subject size factor (e.g. 0.08 draws
    /// factors in [0.92, 1.08]).
    pub subject_size_spread: f64,
    /// Version-simulation morphology applied to every mask.
    pub perturb: Option<(MorphOp, usize)>,
}

#[derive(Debug)]
pub struct CohortOutput {
    pub manifest_path: PathBuf,
    pub rows: Vec<ManifestRow>,
}

/// Writes a deterministic phantom cohort: one labels file per subject, one
/// mask per (subject, contrast), and a manifest referencing them with
/// relative paths. Identical seeds produce byte-identical files.
pub fn make_cohort(dir: &Path, spec: &CohortSpec) -> Result<CohortOutput, PhantomError> {
    if spec.n_subjects == 0 || spec.contrasts.is_empty() {
        return Err(PhantomError::EmptyCohort);
    }
    if !(0.0..=1.0).contains(&spec.jitter) {
        return Err(PhantomError::BadJitter(spec.jitter));
    }
    spec.base.validate()?;

    std::fs::create_dir_all(dir.join("masks"))?;
    std::fs::create_dir_all(dir.join("labels"))?;

    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::new();

    for subject_idx in 0..spec.n_subjects {
        let subject_id = format!("sub-{:03}", subject_idx + 1);
        let size_factor = 1.0 + spec.subject_size_spread * master.gen_range(-1.0..=1.0);
        let mut subject_spec = spec.base.clone();
        subject_spec.ap_semi_axis *= size_factor;
        subject_spec.rl_semi_axis *= size_factor;

        // Default level plan: lower half of the grid is level 2, upper half
        // level 3 (slice indices increase toward Inferior in RPI).
        if subject_spec.level_plan.is_empty() {
            let nz = subject_spec.resolved_grid()?[2];
            subject_spec.level_plan = vec![
                LevelSpan {
                    level: 2,
                    first_slice: 0,
                    last_slice: nz / 2,
                },
                LevelSpan {
                    level: 3,
                    first_slice: nz / 2 + 1,
                    last_slice: nz - 1,
                },
            ];
        }

        let (base_mask, labels, _truth) = generate(&subject_spec)?;
        let versioned = match spec.perturb {
            Some((op, layers)) => perturb(&base_mask, op, layers),
            None => base_mask,
        };

        let labels_rel = format!("labels/{subject_id}_labels.nii.gz");
        let LevelLabels::Volumetric(label_volume) = &labels else {
            unreachable!("generate paints volumetric labels");
        };
        write_volume(&dir.join(&labels_rel), label_volume, Datatype::Uint8)?;

        for contrast in &spec.contrasts {
            let stream_seed: u64 = master.gen();
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
            let jittered = if spec.jitter > 0.0 {
                jitter_boundary(&versioned, spec.jitter, &mut rng)
            } else {
                versioned.clone()
            };
            let mask_rel = format!(
                "masks/{subject_id}_{contrast}_{version}.nii.gz",
                version = spec.version_id
            );
            write_volume(&dir.join(&mask_rel), jittered.volume(), Datatype::Uint8)?;
            rows.push(ManifestRow {
                subject_id: subject_id.clone(),
                contrast: contrast.clone(),
                version_id: spec.version_id.clone(),
                mask_path: mask_rel,
                labels_path: Some(labels_rel.clone()),
                site: Some("phantom".into()),
                pathology: None,
            });
        }
    }

    let manifest_path = dir.join("manifest.csv");
    write_manifest(&manifest_path, &rows)?;
    Ok(CohortOutput {
        manifest_path,
        rows,
    })
}

/// One pass of the boundary jitter model: each surface voxel is perturbed
/// with probability `jitter`, either removed or grown by its background
/// 6-neighbors. Changes are gathered first and applied together so the
/// outcome does not depend on scan order.
fn jitter_boundary(mask: &BinaryMask<f64>, jitter: f64, rng: &mut ChaCha8Rng) -> BinaryMask<f64> {
    let [nx, ny, nz] = mask.extents();
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut voxels = mask.volume().voxels().to_vec();
    let mut removals = Vec::new();
    let mut additions = Vec::new();
    for [i, j, k] in surface_voxels(mask) {
        if rng.gen::<f64>() >= jitter {
            continue;
        }
        if rng.gen::<f64>() < 0.5 {
            removals.push(idx(i, j, k));
        } else {
            let neighbors = [
                (i > 0).then(|| idx(i - 1, j, k)),
                (i + 1 < nx).then(|| idx(i + 1, j, k)),
                (j > 0).then(|| idx(i, j - 1, k)),
                (j + 1 < ny).then(|| idx(i, j + 1, k)),
                (k > 0).then(|| idx(i, j, k - 1)),
                (k + 1 < nz).then(|| idx(i, j, k + 1)),
            ];
            additions.extend(neighbors.into_iter().flatten());
        }
    }
    for r in removals {
        voxels[r] = 0.0;
    }
    for a in additions {
        voxels[a] = 1.0;
    }
    BinaryMask::from_volume(mask.volume().with_voxels(voxels))
        .expect("jitter writes only 0/1 values")
}
