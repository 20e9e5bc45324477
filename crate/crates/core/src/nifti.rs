//! NIfTI-1 single-file reader and writer.
//!
//! Supports plain `.nii` and gzip-wrapped `.nii.gz` payloads, both byte
//! orders (detected via `sizeof_hdr`), and the five datatypes the pipeline
//! consumes (uint8, int16, int32, float32, float64). Header/data pairs
//! (`ni1\0`) and NIfTI-2 are rejected with typed errors. Extension blocks
//! between the header and `vox_offset` are skipped, not interpreted.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use thiserror::Error;

use crate::scalar::{real, Real};
use crate::volume::{Affine, Volume, VolumeError};

/// NIfTI-1 header size in bytes.
pub const HEADER_SIZE: usize = 348;
/// Smallest legal data offset in a single-file NIfTI-1.
pub const MIN_VOX_OFFSET: u64 = 352;

const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("not a NIfTI-1 file: sizeof_hdr is {sizeof_hdr}, expected 348 in either byte order")]
    NotNifti1 { sizeof_hdr: i32 },
    #[error("bad magic {0:?}, expected \"n+1\\0\"")]
    BadMagic([u8; 4]),
    #[error(
        "header/data pair files (magic \"ni1\\0\") are not supported; use single-file .nii/.nii.gz"
    )]
    HeaderPair,
    #[error("unsupported datatype code {code} (supported: 2, 4, 8, 16, 64)")]
    UnsupportedDatatype { code: i16 },
    #[error("volume rank dim[0]={rank} is unsupported (expected 3, or 4 with a single frame)")]
    UnsupportedRank { rank: i16 },
    #[error("multi-frame volume: dim[4]={frames}, only single 3D frames are supported")]
    MultiFrame { frames: i16 },
    #[error("grid extent dim[{axis}] = {value} is not positive")]
    BadExtent { axis: usize, value: i16 },
    #[error("pixdim[{axis}] = {value} is not positive and finite")]
    BadPixdim { axis: usize, value: f32 },
    #[error(
        "vox_offset {offset} is invalid (must be an integer >= {MIN_VOX_OFFSET} inside the file)"
    )]
    BadVoxOffset { offset: f64 },
    #[error("data truncated: need {expected} bytes at vox_offset, found {actual}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("gzip container is corrupt: {0}")]
    BadGzip(std::io::Error),
    #[error("voxel value {value} overflows {datatype:?}")]
    ValueOverflow { value: f64, datatype: Datatype },
    #[error("voxel value {value} is not exactly representable as {datatype:?}; binarize or rescale first")]
    PrecisionLoss { value: f64, datatype: Datatype },
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Supported NIfTI-1 datatype codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl Datatype {
    pub fn from_code(code: i16) -> Result<Self, NiftiError> {
        Ok(match code {
            2 => Datatype::Uint8,
            4 => Datatype::Int16,
            8 => Datatype::Int32,
            16 => Datatype::Float32,
            64 => Datatype::Float64,
            _ => return Err(NiftiError::UnsupportedDatatype { code }),
        })
    }

    pub const fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Int32 => 8,
            Datatype::Float32 => 16,
            Datatype::Float64 => 64,
        }
    }

    pub const fn byte_size(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 => 2,
            Datatype::Int32 | Datatype::Float32 => 4,
            Datatype::Float64 => 8,
        }
    }
}

/// Decoded NIfTI-1 header, limited to the fields this pipeline uses.
#[derive(Debug, Clone)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: Datatype,
    pub pixdim: [f32; 8],
    pub vox_offset: u64,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub little_endian: bool,
}

impl NiftiHeader {
    /// Parses and validates the 348-byte header. `bytes` must already be
    /// decompressed.
    pub fn parse(bytes: &[u8]) -> Result<Self, NiftiError> {
        if bytes.len() < HEADER_SIZE {
            return Err(NiftiError::NotNifti1 {
                sizeof_hdr: if bytes.len() >= 4 {
                    LittleEndian::read_i32(&bytes[0..4])
                } else {
                    0
                },
            });
        }
        let le = LittleEndian::read_i32(&bytes[0..4]);
        let be = BigEndian::read_i32(&bytes[0..4]);
        let little_endian = if le == HEADER_SIZE as i32 {
            true
        } else if be == HEADER_SIZE as i32 {
            false
        } else {
            return Err(NiftiError::NotNifti1 { sizeof_hdr: le });
        };

        let magic: [u8; 4] = bytes[344..348].try_into().unwrap();
        if &magic == MAGIC_PAIR {
            return Err(NiftiError::HeaderPair);
        }
        if &magic != MAGIC_SINGLE {
            return Err(NiftiError::BadMagic(magic));
        }

        if little_endian {
            Self::parse_fields::<LittleEndian>(bytes, true)
        } else {
            Self::parse_fields::<BigEndian>(bytes, false)
        }
    }

    fn parse_fields<E: ByteOrder>(bytes: &[u8], little_endian: bool) -> Result<Self, NiftiError> {
        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = E::read_i16(&bytes[40 + 2 * i..42 + 2 * i]);
        }
        let rank = dim[0];
        if rank != 3 && rank != 4 {
            return Err(NiftiError::UnsupportedRank { rank });
        }
        if rank == 4 && dim[4] != 1 {
            return Err(NiftiError::MultiFrame { frames: dim[4] });
        }
        for axis in 1..=3 {
            if dim[axis] <= 0 {
                return Err(NiftiError::BadExtent {
                    axis,
                    value: dim[axis],
                });
            }
        }

        let datatype = Datatype::from_code(E::read_i16(&bytes[70..72]))?;

        let mut pixdim = [0f32; 8];
        for (i, p) in pixdim.iter_mut().enumerate() {
            *p = E::read_f32(&bytes[76 + 4 * i..80 + 4 * i]);
        }
        for axis in 1..=3 {
            if !(pixdim[axis].is_finite() && pixdim[axis] > 0.0) {
                return Err(NiftiError::BadPixdim {
                    axis,
                    value: pixdim[axis],
                });
            }
        }

        let vox_offset_raw = E::read_f32(&bytes[108..112]) as f64;
        if !vox_offset_raw.is_finite()
            || vox_offset_raw.fract() != 0.0
            || vox_offset_raw < MIN_VOX_OFFSET as f64
        {
            return Err(NiftiError::BadVoxOffset {
                offset: vox_offset_raw,
            });
        }

        Ok(NiftiHeader {
            dim,
            datatype,
            pixdim,
            vox_offset: vox_offset_raw as u64,
            scl_slope: E::read_f32(&bytes[112..116]),
            scl_inter: E::read_f32(&bytes[116..120]),
            qform_code: E::read_i16(&bytes[252..254]),
            sform_code: E::read_i16(&bytes[254..256]),
            quatern: [
                E::read_f32(&bytes[256..260]),
                E::read_f32(&bytes[260..264]),
                E::read_f32(&bytes[264..268]),
            ],
            qoffset: [
                E::read_f32(&bytes[268..272]),
                E::read_f32(&bytes[272..276]),
                E::read_f32(&bytes[276..280]),
            ],
            srow: [
                read_row::<E>(&bytes[280..296]),
                read_row::<E>(&bytes[296..312]),
                read_row::<E>(&bytes[312..328]),
            ],
            little_endian,
        })
    }

    pub fn extents(&self) -> [usize; 3] {
        [
            self.dim[1] as usize,
            self.dim[2] as usize,
            self.dim[3] as usize,
        ]
    }

    /// Voxel-to-world affine with the NIfTI precedence: sform when
    /// `sform_code > 0`, else qform when `qform_code > 0`, else a diagonal
    /// built from pixdim.
    pub fn affine<T: Real>(&self) -> Affine<T> {
        if self.sform_code > 0 {
            let mut a = [[T::zero(); 4]; 4];
            for (row, srow) in self.srow.iter().enumerate() {
                for (col, &v) in srow.iter().enumerate() {
                    a[row][col] = real(v as f64);
                }
            }
            a[3][3] = T::one();
            a
        } else if self.qform_code > 0 {
            self.qform_affine()
        } else {
            crate::volume::diagonal_affine([
                real(self.pixdim[1] as f64),
                real(self.pixdim[2] as f64),
                real(self.pixdim[3] as f64),
            ])
        }
    }

    fn qform_affine<T: Real>(&self) -> Affine<T> {
        let [b, c, d] = [
            self.quatern[0] as f64,
            self.quatern[1] as f64,
            self.quatern[2] as f64,
        ];
        let a = (1.0 - b * b - c * c - d * d).max(0.0).sqrt();
        let qfac = if (self.pixdim[0] as f64) < 0.0 {
            -1.0
        } else {
            1.0
        };
        let (i, j, k) = (
            self.pixdim[1] as f64,
            self.pixdim[2] as f64,
            self.pixdim[3] as f64 * qfac,
        );
        let rows = [
            [
                (a * a + b * b - c * c - d * d) * i,
                2.0 * (b * c - a * d) * j,
                2.0 * (b * d + a * c) * k,
                self.qoffset[0] as f64,
            ],
            [
                2.0 * (b * c + a * d) * i,
                (a * a - b * b + c * c - d * d) * j,
                2.0 * (c * d - a * b) * k,
                self.qoffset[1] as f64,
            ],
            [
                2.0 * (b * d - a * c) * i,
                2.0 * (c * d + a * b) * j,
                (a * a - b * b - c * c + d * d) * k,
                self.qoffset[2] as f64,
            ],
        ];
        let mut m = [[T::zero(); 4]; 4];
        for (r, row) in rows.iter().enumerate() {
            for (cidx, &v) in row.iter().enumerate() {
                m[r][cidx] = real(v);
            }
        }
        m[3][3] = T::one();
        m
    }
}

fn read_row<E: ByteOrder>(bytes: &[u8]) -> [f32; 4] {
    [
        E::read_f32(&bytes[0..4]),
        E::read_f32(&bytes[4..8]),
        E::read_f32(&bytes[8..12]),
        E::read_f32(&bytes[12..16]),
    ]
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

/// Parses a NIfTI-1 single file, gzip-wrapped or plain, into a volume.
///
/// Raw voxel values are rescaled as `raw * scl_slope + scl_inter`, with a
/// slope of 0 treated as 1 per the NIfTI convention.
pub fn parse_nifti<T: Real>(bytes: &[u8]) -> Result<Volume<T>, NiftiError> {
    let owned;
    let data: &[u8] = if is_gzip(bytes) {
        let mut buf = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut buf)
            .map_err(NiftiError::BadGzip)?;
        owned = buf;
        &owned
    } else {
        bytes
    };

    let header = NiftiHeader::parse(data)?;
    let extents = header.extents();
    let n = extents[0] * extents[1] * extents[2];
    let elem = header.datatype.byte_size();
    let expected = n * elem;
    let available = data.len().saturating_sub(header.vox_offset as usize);
    if available < expected {
        return Err(NiftiError::TruncatedData {
            expected,
            actual: available,
        });
    }
    let payload = &data[header.vox_offset as usize..header.vox_offset as usize + expected];

    let slope = if header.scl_slope == 0.0 || !header.scl_slope.is_finite() {
        1.0
    } else {
        header.scl_slope as f64
    };
    let inter = if header.scl_inter.is_finite() {
        header.scl_inter as f64
    } else {
        0.0
    };

    let mut voxels = Vec::with_capacity(n);
    let raw_at = |i: usize| -> f64 {
        let chunk = &payload[i * elem..(i + 1) * elem];
        match (header.datatype, header.little_endian) {
            (Datatype::Uint8, _) => chunk[0] as f64,
            (Datatype::Int16, true) => LittleEndian::read_i16(chunk) as f64,
            (Datatype::Int16, false) => BigEndian::read_i16(chunk) as f64,
            (Datatype::Int32, true) => LittleEndian::read_i32(chunk) as f64,
            (Datatype::Int32, false) => BigEndian::read_i32(chunk) as f64,
            (Datatype::Float32, true) => LittleEndian::read_f32(chunk) as f64,
            (Datatype::Float32, false) => BigEndian::read_f32(chunk) as f64,
            (Datatype::Float64, true) => LittleEndian::read_f64(chunk),
            (Datatype::Float64, false) => BigEndian::read_f64(chunk),
        }
    };
    for i in 0..n {
        voxels.push(real::<T>(raw_at(i) * slope + inter));
    }

    Ok(Volume::new(extents, voxels, header.affine())?)
}

/// Serializes a volume as an uncompressed NIfTI-1 single file.
///
/// The affine is written as the sform (`sform_code = 1`); `scl_slope` is 1
/// and `scl_inter` 0, so values round-trip unscaled. Integer datatypes
/// require every voxel to be an in-range integer; non-integral values are a
/// [`NiftiError::PrecisionLoss`], out-of-range ones a
/// [`NiftiError::ValueOverflow`]. Affine entries are stored as IEEE f32, so
/// they round-trip at f32 precision.
pub fn write_nifti<T: Real>(volume: &Volume<T>, datatype: Datatype) -> Result<Vec<u8>, NiftiError> {
    let extents = volume.extents();
    let n = volume.voxels().len();
    let mut buf = vec![0u8; MIN_VOX_OFFSET as usize + n * datatype.byte_size()];

    LittleEndian::write_i32(&mut buf[0..4], HEADER_SIZE as i32);
    let dims: [i16; 8] = [
        3,
        extents[0] as i16,
        extents[1] as i16,
        extents[2] as i16,
        1,
        1,
        1,
        1,
    ];
    for (i, d) in dims.iter().enumerate() {
        LittleEndian::write_i16(&mut buf[40 + 2 * i..42 + 2 * i], *d);
    }
    LittleEndian::write_i16(&mut buf[70..72], datatype.code());
    LittleEndian::write_i16(&mut buf[72..74], (datatype.byte_size() * 8) as i16);

    let vd = volume.voxel_dims();
    let pixdim: [f32; 8] = [
        1.0,
        vd[0].to_f64().unwrap() as f32,
        vd[1].to_f64().unwrap() as f32,
        vd[2].to_f64().unwrap() as f32,
        1.0,
        1.0,
        1.0,
        1.0,
    ];
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut buf[76 + 4 * i..80 + 4 * i], *p);
    }
    LittleEndian::write_f32(&mut buf[108..112], MIN_VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut buf[112..116], 1.0); // scl_slope
    LittleEndian::write_f32(&mut buf[116..120], 0.0); // scl_inter
    buf[123] = 0x02; // spatial units: millimetres

    LittleEndian::write_i16(&mut buf[252..254], 0); // qform_code
    LittleEndian::write_i16(&mut buf[254..256], 1); // sform_code
    let affine = volume.affine();
    for row in 0..3 {
        for col in 0..4 {
            let off = 280 + row * 16 + col * 4;
            LittleEndian::write_f32(
                &mut buf[off..off + 4],
                affine[row][col].to_f64().unwrap() as f32,
            );
        }
    }
    buf[344..348].copy_from_slice(MAGIC_SINGLE);

    let base = MIN_VOX_OFFSET as usize;
    for (i, &v) in volume.voxels().iter().enumerate() {
        let value = v.to_f64().unwrap();
        let off = base + i * datatype.byte_size();
        match datatype {
            Datatype::Uint8 => buf[off] = encode_int(value, 0.0, 255.0, datatype)? as u8,
            Datatype::Int16 => LittleEndian::write_i16(
                &mut buf[off..off + 2],
                encode_int(value, i16::MIN as f64, i16::MAX as f64, datatype)? as i16,
            ),
            Datatype::Int32 => LittleEndian::write_i32(
                &mut buf[off..off + 4],
                encode_int(value, i32::MIN as f64, i32::MAX as f64, datatype)? as i32,
            ),
            Datatype::Float32 => {
                if !value.is_finite() || value.abs() > f32::MAX as f64 {
                    return Err(NiftiError::ValueOverflow { value, datatype });
                }
                LittleEndian::write_f32(&mut buf[off..off + 4], value as f32);
            }
            Datatype::Float64 => LittleEndian::write_f64(&mut buf[off..off + 8], value),
        }
    }

    Ok(buf)
}

fn encode_int(value: f64, min: f64, max: f64, datatype: Datatype) -> Result<f64, NiftiError> {
    if !value.is_finite() || value < min || value > max {
        return Err(NiftiError::ValueOverflow { value, datatype });
    }
    if value.fract() != 0.0 {
        return Err(NiftiError::PrecisionLoss { value, datatype });
    }
    Ok(value)
}

/// Gzip-compressed [`write_nifti`] output (deterministic: fixed compression
/// level, zero mtime).
pub fn write_nifti_gz<T: Real>(
    volume: &Volume<T>,
    datatype: Datatype,
) -> Result<Vec<u8>, NiftiError> {
    let raw = write_nifti(volume, datatype)?;
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(&raw)?;
    Ok(enc.finish()?)
}

/// Reads a `.nii` or `.nii.gz` file.
pub fn read_volume<T: Real>(path: &Path) -> Result<Volume<T>, NiftiError> {
    let bytes = std::fs::read(path)?;
    parse_nifti(&bytes)
}

/// Writes a volume to `path`, gzip-compressing when the name ends in `.gz`.
/// The file is written via a temporary sibling and atomically renamed.
pub fn write_volume<T: Real>(
    path: &Path,
    volume: &Volume<T>,
    datatype: Datatype,
) -> Result<(), NiftiError> {
    let gz = path
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(".gz"));
    let bytes = if gz {
        write_nifti_gz(volume, datatype)?
    } else {
        write_nifti(volume, datatype)?
    };
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::diagonal_affine;

    /// Minimal valid little-endian header for a 4x4x4 uint8 volume.
    pub(crate) fn minimal_header_bytes() -> Vec<u8> {
        let mut h = vec![0u8; HEADER_SIZE];
        LittleEndian::write_i32(&mut h[0..4], 348);
        let dim: [i16; 8] = [3, 4, 4, 4, 1, 1, 1, 1];
        for (i, d) in dim.iter().enumerate() {
            LittleEndian::write_i16(&mut h[40 + 2 * i..42 + 2 * i], *d);
        }
        LittleEndian::write_i16(&mut h[70..72], 2); // uint8
        LittleEndian::write_i16(&mut h[72..74], 8);
        for i in 0..8 {
            LittleEndian::write_f32(&mut h[76 + 4 * i..80 + 4 * i], 1.0);
        }
        LittleEndian::write_f32(&mut h[108..112], 352.0);
        h[344..348].copy_from_slice(b"n+1\0");
        h
    }

    fn minimal_file(payload_len: usize) -> Vec<u8> {
        let mut f = minimal_header_bytes();
        f.resize(352, 0);
        f.resize(352 + payload_len, 1);
        f
    }

    #[test]
    fn parses_minimal_uint8_volume() {
        let v: Volume<f64> = parse_nifti(&minimal_file(64)).unwrap();
        assert_eq!(v.extents(), [4, 4, 4]);
        assert!(v.voxels().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn short_payload_is_truncated_data() {
        let err = parse_nifti::<f64>(&minimal_file(63)).unwrap_err();
        assert!(matches!(
            err,
            NiftiError::TruncatedData {
                expected: 64,
                actual: 63
            }
        ));
    }

    #[test]
    fn gzip_wrapper_is_transparent() {
        let plain = minimal_file(64);
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&plain).unwrap();
        let gz = enc.finish().unwrap();
        let a: Volume<f64> = parse_nifti(&plain).unwrap();
        let b: Volume<f64> = parse_nifti(&gz).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn header_pair_magic_rejected() {
        let mut f = minimal_file(64);
        f[344..348].copy_from_slice(b"ni1\0");
        assert!(matches!(
            parse_nifti::<f64>(&f).unwrap_err(),
            NiftiError::HeaderPair
        ));
    }

    #[test]
    fn multi_frame_rejected() {
        let mut f = minimal_file(64);
        LittleEndian::write_i16(&mut f[40..42], 4);
        LittleEndian::write_i16(&mut f[48..50], 2); // dim[4] = 2
        assert!(matches!(
            parse_nifti::<f64>(&f).unwrap_err(),
            NiftiError::MultiFrame { frames: 2 }
        ));
    }

    #[test]
    fn scl_slope_and_inter_are_applied() {
        let mut f = minimal_file(64);
        LittleEndian::write_f32(&mut f[112..116], 2.5);
        LittleEndian::write_f32(&mut f[116..120], -1.0);
        let v: Volume<f64> = parse_nifti(&f).unwrap();
        assert!(v.voxels().iter().all(|&x| x == 1.5));
    }

    #[test]
    fn zero_slope_means_identity() {
        let mut f = minimal_file(64);
        LittleEndian::write_f32(&mut f[112..116], 0.0);
        let v: Volume<f64> = parse_nifti(&f).unwrap();
        assert!(v.voxels().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn big_endian_header_accepted() {
        let mut f = minimal_file(64);
        // Rewrite the header fields big-endian.
        BigEndian::write_i32(&mut f[0..4], 348);
        let dim: [i16; 8] = [3, 4, 4, 4, 1, 1, 1, 1];
        for (i, d) in dim.iter().enumerate() {
            BigEndian::write_i16(&mut f[40 + 2 * i..42 + 2 * i], *d);
        }
        BigEndian::write_i16(&mut f[70..72], 2);
        BigEndian::write_i16(&mut f[72..74], 8);
        for i in 0..8 {
            BigEndian::write_f32(&mut f[76 + 4 * i..80 + 4 * i], 1.0);
        }
        BigEndian::write_f32(&mut f[108..112], 352.0);
        let v: Volume<f64> = parse_nifti(&f).unwrap();
        assert_eq!(v.extents(), [4, 4, 4]);
    }

    #[test]
    fn uint8_roundtrip_is_bit_identical() {
        let vol = Volume::filled([4, 4, 4], 1.0f64, diagonal_affine([1.0, 1.0, 1.0])).unwrap();
        let bytes = write_nifti(&vol, Datatype::Uint8).unwrap();
        let back: Volume<f64> = parse_nifti(&bytes).unwrap();
        assert_eq!(back.extents(), vol.extents());
        assert_eq!(back.voxels(), vol.voxels());
        let twice = write_nifti(&back, Datatype::Uint8).unwrap();
        assert_eq!(bytes, twice);
    }

    #[test]
    fn fractional_mask_as_uint8_is_precision_loss() {
        let vol = Volume::filled([2, 2, 2], 0.5f64, diagonal_affine([1.0, 1.0, 1.0])).unwrap();
        assert!(matches!(
            write_nifti(&vol, Datatype::Uint8).unwrap_err(),
            NiftiError::PrecisionLoss { .. }
        ));
    }

    #[test]
    fn out_of_range_uint8_is_overflow() {
        let vol = Volume::filled([2, 2, 2], 300.0f64, diagonal_affine([1.0, 1.0, 1.0])).unwrap();
        assert!(matches!(
            write_nifti(&vol, Datatype::Uint8).unwrap_err(),
            NiftiError::ValueOverflow { .. }
        ));
    }

    #[test]
    fn sform_takes_precedence_over_qform() {
        let mut f = minimal_file(64);
        LittleEndian::write_i16(&mut f[252..254], 1); // qform_code
        LittleEndian::write_i16(&mut f[254..256], 1); // sform_code
                                                      // sform scaled by 2, qform left at quaternion identity * pixdim.
        for (row, base) in [(0usize, 280usize), (1, 296), (2, 312)] {
            LittleEndian::write_f32(&mut f[base + 4 * row..base + 4 * row + 4], 2.0);
        }
        let v: Volume<f64> = parse_nifti(&f).unwrap();
        assert_eq!(v.voxel_dims(), [2.0, 2.0, 2.0]);
    }

    #[test]
    fn file_roundtrip_via_gz_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.nii.gz");
        let vol = Volume::filled([3, 3, 3], 1.0f64, diagonal_affine([0.5, 0.5, 2.0])).unwrap();
        write_volume(&path, &vol, Datatype::Uint8).unwrap();
        let back: Volume<f64> = read_volume(&path).unwrap();
        assert_eq!(back.voxels(), vol.voxels());
        for (a, b) in back
            .affine()
            .iter()
            .flatten()
            .zip(vol.affine().iter().flatten())
        {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
