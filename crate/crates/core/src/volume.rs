//! 3D scalar grids with world geometry.
//!
//! A [`Volume`] couples a voxel grid with a 4x4 affine mapping voxel indices
//! to world millimetres, plus the anatomical orientation code derived from
//! that affine. Voxels are stored x-fastest (NIfTI order).

use thiserror::Error;

use crate::scalar::{is_positive, real, Real};

/// Row-major 4x4 voxel-to-world matrix. The last row is `[0, 0, 0, 1]`.
pub type Affine<T> = [[T; 4]; 4];

#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("volume extent is zero along axis {axis}")]
    EmptyExtent { axis: usize },
    #[error("voxel buffer holds {actual} values but extents require {expected}")]
    VoxelCountMismatch { expected: usize, actual: usize },
    #[error("upper-left 3x3 block of the affine is singular")]
    SingularAffine,
    #[error("two voxel axes map to the same world axis (oblique beyond 45 degrees)")]
    AmbiguousAxis,
    #[error("voxel dimension along axis {axis} is not positive")]
    NonPositiveVoxelDim { axis: usize },
    #[error("target voxel dimensions collapse axis {axis} to zero extent")]
    DegenerateTarget { axis: usize },
    #[error("orientation code {0:?} is not three letters, one per anatomical pair")]
    BadOrientationCode(String),
}

/// One anatomical direction letter: the direction of *increasing* voxel index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxisDir {
    Right,
    Left,
    Anterior,
    Posterior,
    Superior,
    Inferior,
}

impl AxisDir {
    /// World axis this letter lives on: 0 = x (R/L), 1 = y (A/P), 2 = z (S/I).
    pub const fn world_axis(self) -> usize {
        match self {
            AxisDir::Right | AxisDir::Left => 0,
            AxisDir::Anterior | AxisDir::Posterior => 1,
            AxisDir::Superior | AxisDir::Inferior => 2,
        }
    }

    /// True when the letter points along the positive world axis
    /// (+x = Right, +y = Anterior, +z = Superior).
    pub const fn is_positive(self) -> bool {
        matches!(self, AxisDir::Right | AxisDir::Anterior | AxisDir::Superior)
    }

    pub const fn opposite(self) -> Self {
        match self {
            AxisDir::Right => AxisDir::Left,
            AxisDir::Left => AxisDir::Right,
            AxisDir::Anterior => AxisDir::Posterior,
            AxisDir::Posterior => AxisDir::Anterior,
            AxisDir::Superior => AxisDir::Inferior,
            AxisDir::Inferior => AxisDir::Superior,
        }
    }

    pub const fn letter(self) -> char {
        match self {
            AxisDir::Right => 'R',
            AxisDir::Left => 'L',
            AxisDir::Anterior => 'A',
            AxisDir::Posterior => 'P',
            AxisDir::Superior => 'S',
            AxisDir::Inferior => 'I',
        }
    }

    pub const fn from_letter(c: char) -> Option<Self> {
        Some(match c {
            'R' => AxisDir::Right,
            'L' => AxisDir::Left,
            'A' => AxisDir::Anterior,
            'P' => AxisDir::Posterior,
            'S' => AxisDir::Superior,
            'I' => AxisDir::Inferior,
            _ => return None,
        })
    }
}

/// Three-letter anatomical orientation code, one letter per voxel axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Orientation(pub [AxisDir; 3]);

impl Orientation {
    pub const RPI: Orientation =
        Orientation([AxisDir::Right, AxisDir::Posterior, AxisDir::Inferior]);
    pub const RAS: Orientation =
        Orientation([AxisDir::Right, AxisDir::Anterior, AxisDir::Superior]);

    /// Parses codes like `"RPI"`. Exactly one letter from each of
    /// {R,L}, {A,P}, {S,I} must appear, in any axis order.
    pub fn parse(code: &str) -> Result<Self, VolumeError> {
        let bad = || VolumeError::BadOrientationCode(code.to_string());
        let mut dirs = [AxisDir::Right; 3];
        let mut seen_world = [false; 3];
        let mut chars = code.chars();
        for dir in dirs.iter_mut() {
            let c = chars.next().ok_or_else(bad)?;
            let d = AxisDir::from_letter(c.to_ascii_uppercase()).ok_or_else(bad)?;
            if seen_world[d.world_axis()] {
                return Err(bad());
            }
            seen_world[d.world_axis()] = true;
            *dir = d;
        }
        if chars.next().is_some() {
            return Err(bad());
        }
        Ok(Orientation(dirs))
    }

    pub fn axis(&self, voxel_axis: usize) -> AxisDir {
        self.0[voxel_axis]
    }

    /// Voxel axis whose letter lies on the given world axis.
    pub fn voxel_axis_for_world(&self, world_axis: usize) -> usize {
        self.0
            .iter()
            .position(|d| d.world_axis() == world_axis)
            .expect("valid orientation covers every world axis")
    }
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for d in self.0 {
            write!(f, "{}", d.letter())?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Orientation {
    type Err = VolumeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Orientation::parse(s)
    }
}

/// Derives the orientation code from a voxel-to-world affine.
///
/// Each voxel axis gets the letter of the world axis holding the largest
/// absolute component of its affine column, signed by that component.
/// Columns tied between two world axes, or two columns claiming the same
/// world axis, are rejected as ambiguous.
pub fn orientation_from_affine<T: Real>(affine: &Affine<T>) -> Result<Orientation, VolumeError> {
    let det = det3(affine);
    if det == T::zero() {
        return Err(VolumeError::SingularAffine);
    }
    let mut dirs = [AxisDir::Right; 3];
    let mut claimed = [false; 3];
    for col in 0..3 {
        let comps = [affine[0][col], affine[1][col], affine[2][col]];
        let mut dominant = 0usize;
        for (row, c) in comps.iter().enumerate().skip(1) {
            if c.abs() > comps[dominant].abs() {
                dominant = row;
            }
        }
        // A tie at exactly 45 degrees has no dominant world axis.
        if comps
            .iter()
            .enumerate()
            .any(|(row, c)| row != dominant && c.abs() == comps[dominant].abs())
        {
            return Err(VolumeError::AmbiguousAxis);
        }
        if claimed[dominant] {
            return Err(VolumeError::AmbiguousAxis);
        }
        claimed[dominant] = true;
        let positive = comps[dominant] > T::zero();
        dirs[col] = match (dominant, positive) {
            (0, true) => AxisDir::Right,
            (0, false) => AxisDir::Left,
            (1, true) => AxisDir::Anterior,
            (1, false) => AxisDir::Posterior,
            (2, true) => AxisDir::Superior,
            (2, false) => AxisDir::Inferior,
            _ => unreachable!(),
        };
    }
    Ok(Orientation(dirs))
}

fn det3<T: Real>(a: &Affine<T>) -> T {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// 3D scalar grid with voxel-to-world geometry.
///
/// Immutable after construction; cheap to share across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    extents: [usize; 3],
    voxels: Vec<T>,
    affine: Affine<T>,
    orientation: Orientation,
}

impl<T: Real> Volume<T> {
    /// Builds a volume from an x-fastest voxel buffer and a voxel-to-world
    /// affine. The orientation code is derived from the affine here and
    /// stays consistent with it for the lifetime of the value.
    pub fn new(
        extents: [usize; 3],
        voxels: Vec<T>,
        affine: Affine<T>,
    ) -> Result<Self, VolumeError> {
        for (axis, &e) in extents.iter().enumerate() {
            if e == 0 {
                return Err(VolumeError::EmptyExtent { axis });
            }
        }
        let expected = extents[0] * extents[1] * extents[2];
        if voxels.len() != expected {
            return Err(VolumeError::VoxelCountMismatch {
                expected,
                actual: voxels.len(),
            });
        }
        let orientation = orientation_from_affine(&affine)?;
        for axis in 0..3 {
            if !is_positive(column_norm(&affine, axis)) {
                return Err(VolumeError::NonPositiveVoxelDim { axis });
            }
        }
        Ok(Volume {
            extents,
            voxels,
            affine,
            orientation,
        })
    }

    /// Volume with the given affine and every voxel set to `value`.
    pub fn filled(extents: [usize; 3], value: T, affine: Affine<T>) -> Result<Self, VolumeError> {
        let n = extents[0] * extents[1] * extents[2];
        Volume::new(extents, vec![value; n], affine)
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn affine(&self) -> &Affine<T> {
        &self.affine
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Voxel size along each voxel axis: the Euclidean norm of the matching
    /// affine column, in millimetres.
    pub fn voxel_dims(&self) -> [T; 3] {
        [
            column_norm(&self.affine, 0),
            column_norm(&self.affine, 1),
            column_norm(&self.affine, 2),
        ]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.extents[0] && j < self.extents[1] && k < self.extents[2]);
        i + self.extents[0] * (j + self.extents[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.voxels[self.index(i, j, k)]
    }

    pub fn voxels(&self) -> &[T] {
        &self.voxels
    }

    /// World coordinates (mm) of a voxel center.
    pub fn world_of(&self, idx: [usize; 3]) -> [T; 3] {
        let v: [T; 3] = [
            real(idx[0] as f64),
            real(idx[1] as f64),
            real(idx[2] as f64),
        ];
        let mut out = [T::zero(); 3];
        for (row, o) in out.iter_mut().enumerate() {
            *o = self.affine[row][0] * v[0]
                + self.affine[row][1] * v[1]
                + self.affine[row][2] * v[2]
                + self.affine[row][3];
        }
        out
    }

    /// Applies `f` to every voxel, keeping the grid geometry.
    pub fn map<F: Fn(T) -> T>(&self, f: F) -> Volume<T> {
        Volume {
            extents: self.extents,
            voxels: self.voxels.iter().map(|&v| f(v)).collect(),
            affine: self.affine,
            orientation: self.orientation,
        }
    }

    /// Rebuilds a volume on the same grid with new voxel values.
    ///
    /// Panics if `voxels` does not match the grid size; geometry is reused
    /// so the result cannot fail validation.
    pub fn with_voxels(&self, voxels: Vec<T>) -> Volume<T> {
        assert_eq!(voxels.len(), self.voxels.len());
        Volume {
            extents: self.extents,
            voxels,
            affine: self.affine,
            orientation: self.orientation,
        }
    }

    /// Reorders axes and flips directions so the result carries the target
    /// orientation code. Pure permutation and flips: no interpolation, the
    /// voxel-value multiset and the world position of every voxel are
    /// preserved, and the affine is rewritten accordingly.
    pub fn reorient(&self, target: Orientation) -> Volume<T> {
        // For each target axis, the source axis carrying the same anatomical
        // pair, flipped when the letters are opposite.
        let mut src_axis = [0usize; 3];
        let mut flip = [false; 3];
        for t in 0..3 {
            let want = target.axis(t);
            let s = self.orientation.voxel_axis_for_world(want.world_axis());
            src_axis[t] = s;
            flip[t] = self.orientation.axis(s) != want;
        }

        let new_extents = [
            self.extents[src_axis[0]],
            self.extents[src_axis[1]],
            self.extents[src_axis[2]],
        ];

        let mut affine = [[T::zero(); 4]; 4];
        affine[3][3] = T::one();
        for row in 0..3 {
            affine[row][3] = self.affine[row][3];
        }
        for t in 0..3 {
            let s = src_axis[t];
            for row in 0..3 {
                let col = self.affine[row][s];
                if flip[t] {
                    affine[row][t] = -col;
                    // Origin moves to the old last voxel along this axis.
                } else {
                    affine[row][t] = col;
                }
            }
            if flip[t] {
                let last: T = real((self.extents[s] - 1) as f64);
                for row in 0..3 {
                    affine[row][3] = affine[row][3] + self.affine[row][s] * last;
                }
            }
        }

        let mut voxels = vec![T::zero(); self.voxels.len()];
        for k in 0..new_extents[2] {
            for j in 0..new_extents[1] {
                for i in 0..new_extents[0] {
                    let tgt = [i, j, k];
                    let mut src = [0usize; 3];
                    for t in 0..3 {
                        let s = src_axis[t];
                        src[s] = if flip[t] {
                            self.extents[s] - 1 - tgt[t]
                        } else {
                            tgt[t]
                        };
                    }
                    voxels[i + new_extents[0] * (j + new_extents[1] * k)] =
                        self.get(src[0], src[1], src[2]);
                }
            }
        }

        Volume {
            extents: new_extents,
            voxels,
            affine,
            orientation: target,
        }
    }

    /// Trilinearly resamples a soft mask onto a grid with the requested voxel
    /// dimensions, covering the same world extent. The result stays soft;
    /// binarize separately. Values outside the source grid are treated as
    /// background (0).
    pub fn resample_mask(&self, target_dims: [T; 3]) -> Result<Volume<T>, VolumeError> {
        let src_dims = self.voxel_dims();
        let mut new_extents = [0usize; 3];
        let mut ratio = [T::zero(); 3]; // target spacing in source-voxel units
        for axis in 0..3 {
            if !is_positive(target_dims[axis]) {
                return Err(VolumeError::DegenerateTarget { axis });
            }
            ratio[axis] = target_dims[axis] / src_dims[axis];
            let extent_mm = src_dims[axis] * real(self.extents[axis] as f64);
            let n = (extent_mm / target_dims[axis])
                .round()
                .to_f64()
                .unwrap_or(0.0);
            if n < 1.0 {
                return Err(VolumeError::DegenerateTarget { axis });
            }
            new_extents[axis] = n as usize;
        }

        // New affine: same column directions scaled to the target spacing,
        // origin shifted so the grids share the outer bounding box.
        let mut affine = self.affine;
        for axis in 0..3 {
            let scale = ratio[axis];
            let half = real::<T>(0.5);
            let start = half * scale - half; // first sample in source voxel coords
            for row in 0..3 {
                let col = self.affine[row][axis];
                affine[row][axis] = col * scale;
                affine[row][3] = affine[row][3] + col * start;
            }
        }

        let mut voxels = Vec::with_capacity(new_extents[0] * new_extents[1] * new_extents[2]);
        for k in 0..new_extents[2] {
            for j in 0..new_extents[1] {
                for i in 0..new_extents[0] {
                    let tgt = [i, j, k];
                    let mut p = [T::zero(); 3];
                    for axis in 0..3 {
                        let half = real::<T>(0.5);
                        p[axis] = (real::<T>(tgt[axis] as f64) + half) * ratio[axis] - half;
                    }
                    voxels.push(self.sample_trilinear(p));
                }
            }
        }

        Volume::new(new_extents, voxels, affine)
    }

    /// Trilinear interpolation at a continuous voxel-space position, with
    /// zero padding outside the grid of voxel centers.
    fn sample_trilinear(&self, p: [T; 3]) -> T {
        let mut base = [0isize; 3];
        let mut frac = [T::zero(); 3];
        for axis in 0..3 {
            let f = p[axis].floor();
            base[axis] = f.to_f64().unwrap() as isize;
            frac[axis] = p[axis] - f;
        }
        let fetch = |i: isize, j: isize, k: isize| -> T {
            if i < 0
                || j < 0
                || k < 0
                || i >= self.extents[0] as isize
                || j >= self.extents[1] as isize
                || k >= self.extents[2] as isize
            {
                T::zero()
            } else {
                self.get(i as usize, j as usize, k as usize)
            }
        };
        let lerp = |a: T, b: T, t: T| a + (b - a) * t;
        let mut c = [T::zero(); 4];
        for (idx, (dj, dk)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
            let v0 = fetch(base[0], base[1] + dj, base[2] + dk);
            let v1 = fetch(base[0] + 1, base[1] + dj, base[2] + dk);
            c[idx] = lerp(v0, v1, frac[0]);
        }
        let d0 = lerp(c[0], c[1], frac[1]);
        let d1 = lerp(c[2], c[3], frac[1]);
        lerp(d0, d1, frac[2])
    }
}

fn column_norm<T: Real>(affine: &Affine<T>, col: usize) -> T {
    (affine[0][col] * affine[0][col]
        + affine[1][col] * affine[1][col]
        + affine[2][col] * affine[2][col])
        .sqrt()
}

/// Diagonal affine with the given voxel dimensions and zero origin.
pub fn diagonal_affine<T: Real>(dims: [T; 3]) -> Affine<T> {
    let z = T::zero();
    [
        [dims[0], z, z, z],
        [z, dims[1], z, z],
        [z, z, dims[2], z],
        [z, z, z, T::one()],
    ]
}
