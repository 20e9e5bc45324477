//! Per-slice cord morphometrics from binary masks in RPI orientation.
//!
//! Axial slices are planes of constant index along voxel axis 2 (the I-S
//! axis in RPI). In-plane, axis 0 runs right-left (transverse) and axis 1
//! runs posterior-anterior (anteroposterior).

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{real, Real};
use crate::volume::{Orientation, Volume};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("volume orientation is {found}, expected RPI (reorient first)")]
    NotRpi { found: String },
    #[error("binarization threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("voxel value {0} is neither 0 nor 1")]
    NotBinary(f64),
    #[error("label grid extents {labels:?} do not match mask extents {mask:?}")]
    LabelGridMismatch {
        labels: [usize; 3],
        mask: [usize; 3],
    },
    #[error("label value {0} is not a non-negative integer")]
    BadLabelValue(f64),
    #[error("no non-empty slice carries a level in the requested set")]
    NoQualifyingSlices,
    #[error("area correction factors: got {got}, need one per slice ({need})")]
    BadCorrectionLength { got: usize, need: usize },
}

/// The six per-slice shape measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Area,
    ApDiameter,
    TransverseDiameter,
    CompressionRatio,
    Eccentricity,
    Solidity,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Area,
        Metric::ApDiameter,
        Metric::TransverseDiameter,
        Metric::CompressionRatio,
        Metric::Eccentricity,
        Metric::Solidity,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            Metric::Area => "area",
            Metric::ApDiameter => "ap_diameter",
            Metric::TransverseDiameter => "transverse_diameter",
            Metric::CompressionRatio => "compression_ratio",
            Metric::Eccentricity => "eccentricity",
            Metric::Solidity => "solidity",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric '{s}'"))
    }
}

/// Binary segmentation mask: a volume whose voxels are exactly 0 or 1,
/// fixed to RPI orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask<T> {
    volume: Volume<T>,
}

impl<T: Real> BinaryMask<T> {
    /// Wraps an already-binary RPI volume, validating both invariants.
    pub fn from_volume(volume: Volume<T>) -> Result<Self, GeometryError> {
        if volume.orientation() != Orientation::RPI {
            return Err(GeometryError::NotRpi {
                found: volume.orientation().to_string(),
            });
        }
        for &v in volume.voxels() {
            if v != T::zero() && v != T::one() {
                return Err(GeometryError::NotBinary(v.to_f64().unwrap_or(f64::NAN)));
            }
        }
        Ok(BinaryMask { volume })
    }

    /// Thresholds a soft RPI volume: a voxel becomes 1 iff its value is
    /// `>= threshold` (inclusive, so the conventional 0.5 cut is
    /// deterministic on exactly-0.5 values).
    pub fn binarize(volume: &Volume<T>, threshold: T) -> Result<Self, GeometryError> {
        if volume.orientation() != Orientation::RPI {
            return Err(GeometryError::NotRpi {
                found: volume.orientation().to_string(),
            });
        }
        if !(threshold > T::zero() && threshold < T::one()) {
            return Err(GeometryError::BadThreshold(
                threshold.to_f64().unwrap_or(f64::NAN),
            ));
        }
        let out = volume.map(|v| if v >= threshold { T::one() } else { T::zero() });
        Ok(BinaryMask { volume: out })
    }

    pub fn volume(&self) -> &Volume<T> {
        &self.volume
    }

    pub fn extents(&self) -> [usize; 3] {
        self.volume.extents()
    }

    pub fn voxel_dims(&self) -> [T; 3] {
        self.volume.voxel_dims()
    }

    #[inline]
    pub fn is_set(&self, i: usize, j: usize, k: usize) -> bool {
        self.volume.get(i, j, k) == T::one()
    }

    pub fn count_ones(&self) -> usize {
        self.volume
            .voxels()
            .iter()
            .filter(|&&v| v == T::one())
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.count_ones() == 0
    }

    /// Number of axial slices (extent along the I-S axis).
    pub fn slice_count(&self) -> usize {
        self.extents()[2]
    }

    /// In-plane indices (i, j) of set voxels in one axial slice.
    pub fn occupied_in_slice(&self, slice_index: usize) -> Vec<(usize, usize)> {
        let [nx, ny, _] = self.extents();
        let mut out = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if self.is_set(i, j, slice_index) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Sorted indices of all set voxels.
    pub fn set_indices(&self) -> Vec<[usize; 3]> {
        let [nx, ny, nz] = self.extents();
        let mut out = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if self.is_set(i, j, k) {
                        out.push([i, j, k]);
                    }
                }
            }
        }
        out
    }
}

/// Vertebral level labels, either painted on a grid aligned with the mask
/// (voxel value v > 0 means level v) or given per slice.
#[derive(Debug, Clone)]
pub enum LevelLabels<T> {
    Volumetric(Volume<T>),
    PerSlice(BTreeMap<usize, u32>),
}

impl<T: Real> LevelLabels<T> {
    /// Validates that every voxel is a non-negative integer value.
    pub fn volumetric(volume: Volume<T>) -> Result<Self, GeometryError> {
        for &v in volume.voxels() {
            let f = v.to_f64().unwrap_or(f64::NAN);
            if !(f.is_finite() && f >= 0.0 && f.fract() == 0.0) {
                return Err(GeometryError::BadLabelValue(f));
            }
        }
        Ok(LevelLabels::Volumetric(volume))
    }

    pub fn per_slice(table: BTreeMap<usize, u32>) -> Self {
        LevelLabels::PerSlice(table)
    }
}

/// The six shape measures of one axial slice plus provenance.
///
/// An empty slice is the empty-marker record: area 0 and every other
/// measure undefined. Eccentricity is additionally undefined for collinear
/// (single-row/column beyond one voxel) slices, which have no bounded
/// covariance ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceMorphometrics<T> {
    pub slice_index: usize,
    pub level: Option<u32>,
    pub area: T,
    pub ap_diameter: Option<T>,
    pub transverse_diameter: Option<T>,
    pub compression_ratio: Option<T>,
    pub eccentricity: Option<T>,
    pub solidity: Option<T>,
}

impl<T: Real> SliceMorphometrics<T> {
    pub fn empty(slice_index: usize) -> Self {
        SliceMorphometrics {
            slice_index,
            level: None,
            area: T::zero(),
            ap_diameter: None,
            transverse_diameter: None,
            compression_ratio: None,
            eccentricity: None,
            solidity: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ap_diameter.is_none()
    }

    /// Metric value, `None` for empty slices and undefined markers.
    pub fn value(&self, metric: Metric) -> Option<T> {
        if self.is_empty() {
            return None;
        }
        match metric {
            Metric::Area => Some(self.area),
            Metric::ApDiameter => self.ap_diameter,
            Metric::TransverseDiameter => self.transverse_diameter,
            Metric::CompressionRatio => self.compression_ratio,
            Metric::Eccentricity => self.eccentricity,
            Metric::Solidity => self.solidity,
        }
    }
}

/// Cross-sectional area of one axial slice: set-voxel count times the
/// in-plane voxel area.
pub fn slice_area<T: Real>(mask: &BinaryMask<T>, slice_index: usize) -> T {
    let dims = mask.voxel_dims();
    let [nx, ny, _] = mask.extents();
    let mut count = 0usize;
    for j in 0..ny {
        for i in 0..nx {
            if mask.is_set(i, j, slice_index) {
                count += 1;
            }
        }
    }
    real::<T>(count as f64) * (dims[0] * dims[1])
}

/// All six shape measures for one axial slice.
///
/// Diameters are axis-aligned extents in RPI (occupied index span times the
/// voxel dimension), eccentricity comes from the eigenvalues of the 2x2
/// covariance of occupied voxel centers, and solidity divides the voxel
/// area by the area of the convex hull over occupied voxel corners.
pub fn shape_metrics<T: Real>(mask: &BinaryMask<T>, slice_index: usize) -> SliceMorphometrics<T> {
    let occupied = mask.occupied_in_slice(slice_index);
    if occupied.is_empty() {
        return SliceMorphometrics::empty(slice_index);
    }
    let dims = mask.voxel_dims();
    let (dx, dy) = (dims[0], dims[1]);
    let n = occupied.len();

    let (mut min_i, mut max_i) = (usize::MAX, 0usize);
    let (mut min_j, mut max_j) = (usize::MAX, 0usize);
    for &(i, j) in &occupied {
        min_i = min_i.min(i);
        max_i = max_i.max(i);
        min_j = min_j.min(j);
        max_j = max_j.max(j);
    }
    let transverse = real::<T>((max_i - min_i + 1) as f64) * dx;
    let ap = real::<T>((max_j - min_j + 1) as f64) * dy;
    let area = real::<T>(n as f64) * (dx * dy);

    SliceMorphometrics {
        slice_index,
        level: None,
        area,
        ap_diameter: Some(ap),
        transverse_diameter: Some(transverse),
        compression_ratio: if transverse > T::zero() {
            Some(ap / transverse)
        } else {
            None
        },
        eccentricity: covariance_eccentricity(&occupied, dx, dy),
        solidity: Some(hull_solidity(&occupied, dx, dy, area)),
    }
}

/// `sqrt(1 - lmin/lmax)` over the covariance eigenvalues of occupied voxel
/// centers (mm). Equal eigenvalues give 0; a degenerate (collinear) cloud
/// has no bounded ratio and yields `None`.
fn covariance_eccentricity<T: Real>(occupied: &[(usize, usize)], dx: T, dy: T) -> Option<T> {
    let n = real::<T>(occupied.len() as f64);
    let mut sx = T::zero();
    let mut sy = T::zero();
    for &(i, j) in occupied {
        sx = sx + real::<T>(i as f64) * dx;
        sy = sy + real::<T>(j as f64) * dy;
    }
    let mx = sx / n;
    let my = sy / n;
    let (mut cxx, mut cxy, mut cyy) = (T::zero(), T::zero(), T::zero());
    for &(i, j) in occupied {
        let ex = real::<T>(i as f64) * dx - mx;
        let ey = real::<T>(j as f64) * dy - my;
        cxx = cxx + ex * ex;
        cxy = cxy + ex * ey;
        cyy = cyy + ey * ey;
    }
    cxx = cxx / n;
    cxy = cxy / n;
    cyy = cyy / n;

    let tr = cxx + cyy;
    let disc = ((cxx - cyy) * (cxx - cyy) + real::<T>(4.0) * cxy * cxy).sqrt();
    let half = real::<T>(0.5);
    let lmax = (tr + disc) * half;
    let lmin = ((tr - disc) * half).max(T::zero());
    if lmax == lmin {
        return Some(T::zero()); // includes the single-voxel case
    }
    // A mathematically collinear cloud lands at lmin/lmax = O(machine eps)
    // after rounding, never exactly zero under translation; cut it off
    // relative to lmax. Genuine 2D regions sit orders of magnitude above.
    let tol = T::epsilon() * real::<T>(1e4);
    if lmin <= lmax * tol {
        return None;
    }
    Some((T::one() - lmin / lmax).sqrt())
}

/// Voxel area over convex-hull area, hull taken over the four corner points
/// of every occupied voxel so a lone voxel scores exactly 1.
fn hull_solidity<T: Real>(occupied: &[(usize, usize)], dx: T, dy: T, area: T) -> T {
    let half = real::<T>(0.5);
    let mut pts: Vec<(T, T)> = Vec::with_capacity(occupied.len() * 4);
    for &(i, j) in occupied {
        let x = real::<T>(i as f64);
        let y = real::<T>(j as f64);
        for (sx, sy) in [(-half, -half), (half, -half), (-half, half), (half, half)] {
            pts.push(((x + sx) * dx, (y + sy) * dy));
        }
    }
    let hull_area = convex_hull_area(&mut pts);
    if hull_area > T::zero() {
        (area / hull_area).min(T::one())
    } else {
        T::one()
    }
}

/// Shoelace area of the convex hull (Andrew monotone chain).
fn convex_hull_area<T: Real>(pts: &mut Vec<(T, T)>) -> T {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    let n = pts.len();
    if n < 3 {
        return T::zero();
    }
    let cross = |o: (T, T), a: (T, T), b: (T, T)| -> T {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(T, T)> = Vec::with_capacity(2 * n);
    for &p in pts.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero() {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower_len
            && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero()
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop(); // last point equals the first

    let mut twice_area = T::zero();
    for idx in 0..hull.len() {
        let (x0, y0) = hull[idx];
        let (x1, y1) = hull[(idx + 1) % hull.len()];
        twice_area = twice_area + (x0 * y1 - x1 * y0);
    }
    twice_area.abs() * real::<T>(0.5)
}

/// Shape measures for every axial slice of the mask.
pub fn compute_slices<T: Real>(mask: &BinaryMask<T>) -> Vec<SliceMorphometrics<T>> {
    (0..mask.slice_count())
        .map(|k| shape_metrics(mask, k))
        .collect()
}

/// Multiplies each slice's area by an externally supplied correction factor
/// (one per slice), the hook for centerline-angle cos correction computed
/// outside this crate.
pub fn apply_area_correction<T: Real>(
    slices: &mut [SliceMorphometrics<T>],
    factors: &[T],
) -> Result<(), GeometryError> {
    if factors.len() != slices.len() {
        return Err(GeometryError::BadCorrectionLength {
            got: factors.len(),
            need: slices.len(),
        });
    }
    for (s, &f) in slices.iter_mut().zip(factors) {
        s.area = s.area * f;
    }
    Ok(())
}

/// Per-slice vertebral level: the majority level over labeled cord voxels
/// in the slice, ties broken toward the smaller level number. Slices with
/// no labeled cord voxel get `None`.
pub fn assign_slice_levels<T: Real>(
    mask: &BinaryMask<T>,
    labels: &LevelLabels<T>,
) -> Result<Vec<Option<u32>>, GeometryError> {
    match labels {
        LevelLabels::PerSlice(table) => Ok((0..mask.slice_count())
            .map(|k| table.get(&k).copied())
            .collect()),
        LevelLabels::Volumetric(vol) => {
            if vol.extents() != mask.extents() {
                return Err(GeometryError::LabelGridMismatch {
                    labels: vol.extents(),
                    mask: mask.extents(),
                });
            }
            let [nx, ny, nz] = mask.extents();
            let mut out = Vec::with_capacity(nz);
            for k in 0..nz {
                let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
                for j in 0..ny {
                    for i in 0..nx {
                        if !mask.is_set(i, j, k) {
                            continue;
                        }
                        let raw = vol.get(i, j, k).to_f64().unwrap_or(0.0);
                        if raw > 0.0 {
                            *votes.entry(raw as u32).or_insert(0) += 1;
                        }
                    }
                }
                // BTreeMap iteration is ascending, so on a tie the smaller
                // level wins.
                let winner =
                    votes
                        .iter()
                        .fold(None::<(u32, usize)>, |best, (&lvl, &cnt)| match best {
                            Some((_, bc)) if cnt <= bc => best,
                            _ => Some((lvl, cnt)),
                        });
                out.push(winner.map(|(lvl, _)| lvl));
            }
            Ok(out)
        }
    }
}

/// Copies per-slice level assignments onto the morphometric records.
pub fn apply_levels<T>(slices: &mut [SliceMorphometrics<T>], levels: &[Option<u32>]) {
    for (s, &lvl) in slices.iter_mut().zip(levels) {
        s.level = lvl;
    }
}

/// Arithmetic mean of a metric over non-empty slices whose level lies in
/// the set. Undefined per-slice markers do not qualify.
pub fn aggregate_over_levels<T: Real>(
    slices: &[SliceMorphometrics<T>],
    levels: &BTreeSet<u32>,
    metric: Metric,
) -> Result<T, GeometryError> {
    let values: Vec<T> = slices
        .iter()
        .filter(|s| s.level.is_some_and(|l| levels.contains(&l)))
        .filter_map(|s| s.value(metric))
        .collect();
    if values.is_empty() {
        return Err(GeometryError::NoQualifyingSlices);
    }
    let n = real::<T>(values.len() as f64);
    Ok(values.into_iter().sum::<T>() / n)
}

/// Mean cross-sectional area over all non-empty slices.
pub fn mean_csa_all_slices<T: Real>(slices: &[SliceMorphometrics<T>]) -> Result<T, GeometryError> {
    let values: Vec<T> = slices
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.area)
        .collect();
    if values.is_empty() {
        return Err(GeometryError::NoQualifyingSlices);
    }
    let n = real::<T>(values.len() as f64);
    Ok(values.into_iter().sum::<T>() / n)
}

/// Canonical tag for a level set: contiguous runs are hyphenated
/// ("C2-C3"), disjoint runs joined with '+'.
pub fn levels_tag(levels: &BTreeSet<u32>) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut run: Option<(u32, u32)> = None;
    for &lvl in levels {
        match run {
            Some((start, end)) if lvl == end + 1 => run = Some((start, lvl)),
            Some((start, end)) => {
                parts.push(format_run(start, end));
                run = Some((lvl, lvl));
            }
            None => run = Some((lvl, lvl)),
        }
    }
    if let Some((start, end)) = run {
        parts.push(format_run(start, end));
    }
    parts.join("+")
}

fn format_run(start: u32, end: u32) -> String {
    if start == end {
        format!("C{start}")
    } else {
        format!("C{start}-C{end}")
    }
}

/// One subject-contrast-version worth of morphometrics: every slice plus
/// level-range aggregates.
#[derive(Debug, Clone)]
pub struct SubjectMorphometrics<T> {
    pub subject_id: String,
    pub contrast: String,
    pub model_version: String,
    pub slices: Vec<SliceMorphometrics<T>>,
    /// Mean per (metric, level-range tag) over qualifying non-empty slices.
    pub aggregates: BTreeMap<(Metric, String), T>,
    /// Empty slices strictly between the first and last non-empty slice,
    /// a diagnostic for segmentation gaps.
    pub interior_gap_count: usize,
}

impl<T: Real> SubjectMorphometrics<T> {
    /// Full per-subject computation: slice metrics, level assignment when
    /// labels are given, and one aggregate per requested metric over the
    /// level set.
    pub fn compute(
        subject_id: &str,
        contrast: &str,
        model_version: &str,
        mask: &BinaryMask<T>,
        labels: Option<&LevelLabels<T>>,
        levels: &BTreeSet<u32>,
        metrics: &[Metric],
    ) -> Result<Self, GeometryError> {
        let mut slices = compute_slices(mask);
        if let Some(labels) = labels {
            let assigned = assign_slice_levels(mask, labels)?;
            apply_levels(&mut slices, &assigned);
        }
        let mut aggregates = BTreeMap::new();
        if labels.is_some() && !levels.is_empty() {
            let tag = levels_tag(levels);
            for &metric in metrics {
                let v = aggregate_over_levels(&slices, levels, metric)?;
                aggregates.insert((metric, tag.clone()), v);
            }
        }
        let interior_gap_count = count_interior_gaps(&slices);
        Ok(SubjectMorphometrics {
            subject_id: subject_id.to_string(),
            contrast: contrast.to_string(),
            model_version: model_version.to_string(),
            slices,
            aggregates,
            interior_gap_count,
        })
    }
}

fn count_interior_gaps<T: Real>(slices: &[SliceMorphometrics<T>]) -> usize {
    let first = slices.iter().position(|s| !s.is_empty());
    let last = slices.iter().rposition(|s| !s.is_empty());
    match (first, last) {
        (Some(a), Some(b)) if b > a => slices[a..=b].iter().filter(|s| s.is_empty()).count(),
        _ => 0,
    }
}

/// Writes per-slice morphometrics as CSV with the fixed column order
/// `subject,contrast,model_version,slice_index,level,area_mm2,
/// ap_diameter_mm,transverse_diameter_mm,compression_ratio,eccentricity,
/// solidity`. Undefined markers serialize as empty fields.
pub fn write_slice_csv<'a, T: Real + 'a, W: Write>(
    writer: W,
    subjects: impl IntoIterator<Item = &'a SubjectMorphometrics<T>>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "subject",
        "contrast",
        "model_version",
        "slice_index",
        "level",
        "area_mm2",
        "ap_diameter_mm",
        "transverse_diameter_mm",
        "compression_ratio",
        "eccentricity",
        "solidity",
    ])?;
    let opt = |v: Option<T>| v.map(|x| x.to_string()).unwrap_or_default();
    for subject in subjects {
        for s in &subject.slices {
            w.write_record([
                subject.subject_id.as_str(),
                subject.contrast.as_str(),
                subject.model_version.as_str(),
                &s.slice_index.to_string(),
                &s.level.map(|l| l.to_string()).unwrap_or_default(),
                &s.area.to_string(),
                &opt(s.ap_diameter),
                &opt(s.transverse_diameter),
                &opt(s.compression_ratio),
                &opt(s.eccentricity),
                &opt(s.solidity),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::diagonal_affine;

    /// RPI grid with the given in-plane voxel dims.
    fn rpi_volume(extents: [usize; 3], dims: [f64; 3], voxels: Vec<f64>) -> Volume<f64> {
        let affine = [
            [dims[0], 0.0, 0.0, 0.0],
            [0.0, -dims[1], 0.0, 0.0],
            [0.0, 0.0, -dims[2], 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        Volume::new(extents, voxels, affine).unwrap()
    }

    fn mask_from_coords(
        extents: [usize; 3],
        dims: [f64; 3],
        coords: &[(usize, usize, usize)],
    ) -> BinaryMask<f64> {
        let mut voxels = vec![0.0; extents[0] * extents[1] * extents[2]];
        for &(i, j, k) in coords {
            voxels[i + extents[0] * (j + extents[1] * k)] = 1.0;
        }
        BinaryMask::from_volume(rpi_volume(extents, dims, voxels)).unwrap()
    }

    #[test]
    fn binarize_threshold_is_inclusive() {
        let v = rpi_volume([2, 2, 1], [1.0; 3], vec![0.5; 4]);
        let m = BinaryMask::binarize(&v, 0.5).unwrap();
        assert_eq!(m.count_ones(), 4);

        let v = rpi_volume([2, 2, 1], [1.0; 3], vec![0.49; 4]);
        let m = BinaryMask::binarize(&v, 0.5).unwrap();
        assert_eq!(m.count_ones(), 0);
    }

    #[test]
    fn binarize_soft_ramp() {
        // 0.0, 0.1, ..., 1.0: exactly six values are >= 0.5.
        let ramp: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let v = rpi_volume([11, 1, 1], [1.0; 3], ramp);
        let m = BinaryMask::binarize(&v, 0.5).unwrap();
        assert_eq!(m.count_ones(), 6);
    }

    #[test]
    fn binarize_rejects_non_rpi() {
        let v = Volume::filled([2, 2, 2], 0.7f64, diagonal_affine([1.0, 1.0, 1.0])).unwrap();
        assert!(matches!(
            BinaryMask::binarize(&v, 0.5),
            Err(GeometryError::NotRpi { .. })
        ));
    }

    #[test]
    fn empty_slice_area_is_zero() {
        let m = mask_from_coords([4, 4, 2], [1.0; 3], &[(1, 1, 1)]);
        assert_eq!(slice_area(&m, 0), 0.0);
        assert_eq!(slice_area(&m, 1), 1.0);
    }

    #[test]
    fn filled_slice_area_with_half_mm_voxels() {
        let coords: Vec<(usize, usize, usize)> = (0..10)
            .flat_map(|i| (0..10).map(move |j| (i, j, 0)))
            .collect();
        let m = mask_from_coords([10, 10, 1], [0.5, 0.5, 1.0], &coords);
        assert_eq!(slice_area(&m, 0), 25.0);
    }

    #[test]
    fn single_voxel_shape_metrics() {
        let m = mask_from_coords([4, 4, 1], [0.5, 0.5, 1.0], &[(2, 2, 0)]);
        let s = shape_metrics(&m, 0);
        assert_eq!(s.area, 0.25);
        assert_eq!(s.ap_diameter, Some(0.5));
        assert_eq!(s.transverse_diameter, Some(0.5));
        assert_eq!(s.compression_ratio, Some(1.0));
        assert_eq!(s.eccentricity, Some(0.0));
        assert_eq!(s.solidity, Some(1.0));
    }

    #[test]
    fn rectangle_shape_metrics() {
        // 8 voxels along AP (axis 1), 4 along RL (axis 0), 1 mm voxels.
        let coords: Vec<(usize, usize, usize)> = (0..4)
            .flat_map(|i| (0..8).map(move |j| (i, j, 0)))
            .collect();
        let m = mask_from_coords([6, 10, 1], [1.0; 3], &coords);
        let s = shape_metrics(&m, 0);
        assert_eq!(s.ap_diameter, Some(8.0));
        assert_eq!(s.transverse_diameter, Some(4.0));
        assert_eq!(s.compression_ratio, Some(2.0));
        assert_eq!(s.solidity, Some(1.0));
    }

    #[test]
    fn collinear_slice_has_undefined_eccentricity() {
        let m = mask_from_coords([6, 2, 1], [1.0; 3], &[(0, 0, 0), (1, 0, 0), (2, 0, 0)]);
        let s = shape_metrics(&m, 0);
        assert_eq!(s.eccentricity, None);
        assert!(s.solidity.is_some());
    }

    #[test]
    fn empty_slice_yields_marker_record() {
        let m = mask_from_coords([4, 4, 2], [1.0; 3], &[(0, 0, 0)]);
        let s = shape_metrics(&m, 1);
        assert!(s.is_empty());
        assert_eq!(s.area, 0.0);
        assert_eq!(s.value(Metric::Area), None);
    }

    #[test]
    fn aggregate_means_qualifying_slices() {
        let mut slices = vec![
            SliceMorphometrics::<f64>::empty(0),
            SliceMorphometrics::empty(1),
            SliceMorphometrics::empty(2),
        ];
        for (idx, (area, level)) in [(60.0, 2), (80.0, 3), (100.0, 4)].into_iter().enumerate() {
            slices[idx] = SliceMorphometrics {
                slice_index: idx,
                level: Some(level),
                area,
                ap_diameter: Some(1.0),
                transverse_diameter: Some(1.0),
                compression_ratio: Some(1.0),
                eccentricity: Some(0.0),
                solidity: Some(1.0),
            };
        }
        let levels: BTreeSet<u32> = [2, 3].into();
        assert_eq!(
            aggregate_over_levels(&slices, &levels, Metric::Area).unwrap(),
            70.0
        );
        let missing: BTreeSet<u32> = [9].into();
        assert_eq!(
            aggregate_over_levels(&slices, &missing, Metric::Area),
            Err(GeometryError::NoQualifyingSlices)
        );
    }

    #[test]
    fn mean_csa_excludes_empty_slices() {
        let mut slices = vec![SliceMorphometrics::<f64>::empty(0)];
        for (idx, area) in [(1usize, 30.0), (2, 50.0)] {
            slices.push(SliceMorphometrics {
                slice_index: idx,
                level: None,
                area,
                ap_diameter: Some(1.0),
                transverse_diameter: Some(1.0),
                compression_ratio: Some(1.0),
                eccentricity: Some(0.0),
                solidity: Some(1.0),
            });
        }
        slices.push(SliceMorphometrics::empty(3));
        assert_eq!(mean_csa_all_slices(&slices).unwrap(), 40.0);
        assert_eq!(
            mean_csa_all_slices(&[SliceMorphometrics::<f64>::empty(0)]),
            Err(GeometryError::NoQualifyingSlices)
        );
    }

    #[test]
    fn volumetric_level_majority_with_tie_toward_smaller() {
        let extents = [2, 2, 1];
        let mask = mask_from_coords(extents, [1.0; 3], &[(0, 0, 0), (1, 0, 0), (0, 1, 0)]);
        // Two cord voxels labeled 3, one labeled 2 -> level 3.
        let mut lbl = vec![0.0; 4];
        lbl[0] = 3.0; // (0,0)
        lbl[1] = 3.0; // (1,0)
        lbl[2] = 2.0; // (0,1)
        let labels = LevelLabels::volumetric(rpi_volume(extents, [1.0; 3], lbl)).unwrap();
        assert_eq!(assign_slice_levels(&mask, &labels).unwrap(), vec![Some(3)]);

        // One vote each for 2 and 3 -> tie broken toward 2.
        let mut lbl = vec![0.0; 4];
        lbl[0] = 3.0;
        lbl[2] = 2.0;
        let labels = LevelLabels::volumetric(rpi_volume(extents, [1.0; 3], lbl)).unwrap();
        assert_eq!(assign_slice_levels(&mask, &labels).unwrap(), vec![Some(2)]);
    }

    #[test]
    fn area_correction_scales_each_slice() {
        let m = mask_from_coords([3, 3, 2], [1.0; 3], &[(0, 0, 0), (1, 0, 0), (1, 1, 1)]);
        let mut slices = compute_slices(&m);
        apply_area_correction(&mut slices, &[0.5, 2.0]).unwrap();
        assert_eq!(slices[0].area, 1.0);
        assert_eq!(slices[1].area, 2.0);
        assert_eq!(
            apply_area_correction(&mut slices, &[1.0]),
            Err(GeometryError::BadCorrectionLength { got: 1, need: 2 })
        );
    }

    #[test]
    fn levels_tag_formats_runs() {
        assert_eq!(levels_tag(&[2, 3].into()), "C2-C3");
        assert_eq!(levels_tag(&[2].into()), "C2");
        assert_eq!(levels_tag(&[2, 3, 5].into()), "C2-C3+C5");
    }

    #[test]
    fn interior_gap_count_sees_only_gaps_between_caps() {
        let filled = |idx: usize| SliceMorphometrics {
            slice_index: idx,
            level: None,
            area: 1.0,
            ap_diameter: Some(1.0),
            transverse_diameter: Some(1.0),
            compression_ratio: Some(1.0),
            eccentricity: Some(0.0),
            solidity: Some(1.0),
        };
        let slices = vec![
            SliceMorphometrics::<f64>::empty(0),
            filled(1),
            SliceMorphometrics::empty(2),
            filled(3),
            SliceMorphometrics::empty(4),
        ];
        assert_eq!(count_interior_gaps(&slices), 1);
    }

    #[test]
    fn slice_csv_has_fixed_columns_and_empty_markers() {
        let m = mask_from_coords([3, 3, 2], [1.0; 3], &[(1, 1, 0)]);
        let subject = SubjectMorphometrics::compute(
            "sub-01",
            "T2w",
            "v1.0",
            &m,
            None,
            &BTreeSet::new(),
            &Metric::ALL,
        )
        .unwrap();
        let mut out = Vec::new();
        write_slice_csv(&mut out, [&subject]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "subject,contrast,model_version,slice_index,level,area_mm2,ap_diameter_mm,transverse_diameter_mm,compression_ratio,eccentricity,solidity"
        );
        assert_eq!(lines.next().unwrap(), "sub-01,T2w,v1.0,0,,1,1,1,1,0,1");
        assert_eq!(lines.next().unwrap(), "sub-01,T2w,v1.0,1,,0,,,,,");
    }
}
