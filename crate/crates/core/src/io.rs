//! Binary volume (`VVOL`) and permutation matrix (`PZMX`) files, and region lists.
//!
//! Both binary formats are little-endian. Volumes are stored in C order, so
//! the last axis varies fastest, matching the lexicographic order of
//! [`VoxelSet`].

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::VoxelSet;
use crate::thresholds::{PermutationMatrix, ThresholdError};

pub const VVOL_MAGIC: &[u8; 4] = b"VVOL";
pub const PZMX_MAGIC: &[u8; 4] = b"PZMX";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic at offset 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {found} at offset {offset}")]
    UnsupportedVersion { found: u32, offset: usize },
    #[error("unknown dtype code {found} at offset {offset}")]
    BadDtype { found: u8, offset: usize },
    #[error("expected dtype {expected}, file has {found}")]
    WrongDtype { expected: &'static str, found: &'static str },
    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated { what: &'static str, expected: u64, actual: u64 },
    #[error("{extra} trailing bytes after the payload (file is {actual} bytes, expected {expected})")]
    Trailing { extra: u64, expected: u64, actual: u64 },
    #[error("volume must have at least one axis")]
    ZeroDimension,
    #[error("volume size overflows")]
    Overflow,
    #[error("non-finite value at voxel {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error("{0}")]
    Invalid(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    U8,
    U16,
    F32,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(Dtype::U8),
            2 => Some(Dtype::U16),
            3 => Some(Dtype::F32),
            _ => None,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::U8 => "u8",
            Dtype::U16 => "u16",
            Dtype::F32 => "f32",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VolumeData {
    U8(Vec<u8>),
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl VolumeData {
    pub fn dtype(&self) -> Dtype {
        match self {
            VolumeData::U8(_) => Dtype::U8,
            VolumeData::U16(_) => Dtype::U16,
            VolumeData::F32(_) => Dtype::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VolumeData::U8(v) => v.len(),
            VolumeData::U16(v) => v.len(),
            VolumeData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A dense array in C order.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub extents: Vec<usize>,
    pub data: VolumeData,
}

impl Volume {
    pub fn new(extents: Vec<usize>, data: VolumeData) -> Result<Self, FormatError> {
        if extents.is_empty() {
            return Err(FormatError::ZeroDimension);
        }
        let n = element_count(&extents)?;
        if n != data.len() as u64 {
            return Err(FormatError::Invalid(format!("extents hold {n} voxels but data has {}", data.len())));
        }
        Ok(Volume { extents, data })
    }

    pub fn into_f32(self) -> Result<(Vec<usize>, Vec<f32>), FormatError> {
        match self.data {
            VolumeData::F32(v) => Ok((self.extents, v)),
            other => Err(FormatError::WrongDtype { expected: "f32", found: other.dtype().name() }),
        }
    }

    /// Non-zero voxels, for masks stored as u8 or u16.
    pub fn nonzero(&self) -> Result<Vec<bool>, FormatError> {
        match &self.data {
            VolumeData::U8(v) => Ok(v.iter().map(|&x| x != 0).collect()),
            VolumeData::U16(v) => Ok(v.iter().map(|&x| x != 0).collect()),
            VolumeData::F32(_) => Err(FormatError::WrongDtype { expected: "u8 or u16", found: "f32" }),
        }
    }

    /// Integer labels, for atlases stored as u8 or u16.
    pub fn labels(&self) -> Result<Vec<u16>, FormatError> {
        match &self.data {
            VolumeData::U8(v) => Ok(v.iter().map(|&x| u16::from(x)).collect()),
            VolumeData::U16(v) => Ok(v.clone()),
            VolumeData::F32(_) => Err(FormatError::WrongDtype { expected: "u8 or u16", found: "f32" }),
        }
    }
}

fn element_count(extents: &[usize]) -> Result<u64, FormatError> {
    extents.iter().try_fold(1u64, |acc, &e| acc.checked_mul(e as u64)).ok_or(FormatError::Overflow)
}

/// Coordinates of flat C-order index `i`.
pub fn unravel(extents: &[usize], mut i: usize, out: &mut [i32]) {
    for a in (0..extents.len()).rev() {
        out[a] = (i % extents[a]) as i32;
        i /= extents[a];
    }
}

/// Flat C-order index of `c`, if inside the grid.
pub fn ravel(extents: &[usize], c: &[i32]) -> Option<usize> {
    let mut i = 0usize;
    for (a, &x) in c.iter().enumerate() {
        if x < 0 || x as usize >= extents[a] {
            return None;
        }
        i = i * extents[a] + x as usize;
    }
    Some(i)
}

/// The voxels with `keep[i]`, for a grid with the given extents.
pub fn grid_voxels(extents: &[usize], keep: impl Fn(usize) -> bool) -> VoxelSet {
    let d = extents.len();
    let n: usize = extents.iter().product();
    let mut flat = Vec::new();
    let mut c = vec![0i32; d];
    for i in 0..n {
        if keep(i) {
            unravel(extents, i, &mut c);
            flat.extend_from_slice(&c);
        }
    }
    VoxelSet::from_flat(d, flat).expect("grid voxels are valid")
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.buf.len() < self.pos + n {
            return Err(FormatError::Truncated { what: self.what, expected: (self.pos + n) as u64, actual: self.buf.len() as u64 });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let m = self.take(4)?;
        if m != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(m).into_owned(),
            });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<(), FormatError> {
        let offset = self.pos;
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion { found: v, offset });
        }
        Ok(())
    }

    fn payload(&mut self, bytes: u64) -> Result<&'a [u8], FormatError> {
        let expected = self.pos as u64 + bytes;
        let actual = self.buf.len() as u64;
        if actual < expected {
            return Err(FormatError::Truncated { what: self.what, expected, actual });
        }
        if actual > expected {
            return Err(FormatError::Trailing { extra: actual - expected, expected, actual });
        }
        self.take(bytes as usize)
    }
}

pub fn decode_vvol(buf: &[u8]) -> Result<Volume, FormatError> {
    let mut c = Cursor { buf, pos: 0, what: "VVOL file" };
    c.magic(VVOL_MAGIC)?;
    c.version()?;
    let d = c.u32()? as usize;
    if d == 0 {
        return Err(FormatError::ZeroDimension);
    }
    let mut extents = Vec::with_capacity(d);
    for _ in 0..d {
        extents.push(usize::try_from(c.u64()?).map_err(|_| FormatError::Overflow)?);
    }
    let offset = c.pos;
    let code = c.take(1)?[0];
    let dtype = Dtype::from_code(code).ok_or(FormatError::BadDtype { found: code, offset })?;
    let n = element_count(&extents)?;
    let bytes = n.checked_mul(dtype.width() as u64).ok_or(FormatError::Overflow)?;
    let mut p = c.payload(bytes)?;
    let n = n as usize;
    let data = match dtype {
        Dtype::U8 => VolumeData::U8(p.to_vec()),
        Dtype::U16 => {
            let mut v = vec![0u16; n];
            p.read_u16_into::<LittleEndian>(&mut v)?;
            VolumeData::U16(v)
        }
        Dtype::F32 => {
            let mut v = vec![0f32; n];
            p.read_f32_into::<LittleEndian>(&mut v)?;
            VolumeData::F32(v)
        }
    };
    Volume::new(extents, data)
}

pub fn encode_vvol(vol: &Volume) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + vol.data.len() * vol.data.dtype().width());
    out.extend_from_slice(VVOL_MAGIC);
    out.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
    out.write_u32::<LittleEndian>(vol.extents.len() as u32).unwrap();
    for &e in &vol.extents {
        out.write_u64::<LittleEndian>(e as u64).unwrap();
    }
    out.push(vol.data.dtype().code());
    match &vol.data {
        VolumeData::U8(v) => out.extend_from_slice(v),
        VolumeData::U16(v) => v.iter().for_each(|&x| out.write_u16::<LittleEndian>(x).unwrap()),
        VolumeData::F32(v) => v.iter().for_each(|&x| out.write_f32::<LittleEndian>(x).unwrap()),
    }
    out
}

pub fn read_vvol(path: &Path) -> Result<Volume, FormatError> {
    decode_vvol(&std::fs::read(path)?)
}

pub fn write_vvol(path: &Path, vol: &Volume) -> Result<(), FormatError> {
    std::fs::write(path, encode_vvol(vol))?;
    Ok(())
}

pub fn decode_pzmx(buf: &[u8]) -> Result<PermutationMatrix, FormatError> {
    let mut c = Cursor { buf, pos: 0, what: "PZMX file" };
    c.magic(PZMX_MAGIC)?;
    c.version()?;
    let n = c.u32()? as usize;
    let m = usize::try_from(c.u64()?).map_err(|_| FormatError::Overflow)?;
    let count = (n as u64).checked_mul(m as u64).ok_or(FormatError::Overflow)?;
    let bytes = count.checked_mul(4).ok_or(FormatError::Overflow)?;
    let mut p = c.payload(bytes)?;
    let mut data = vec![0f32; count as usize];
    p.read_f32_into::<LittleEndian>(&mut data)?;
    Ok(PermutationMatrix::from_flat(n, m, data)?)
}

pub fn encode_pzmx(p: &PermutationMatrix) -> Vec<u8> {
    use crate::thresholds::PermutationSource;
    let mut out = Vec::with_capacity(20 + p.as_flat().len() * 4);
    out.extend_from_slice(PZMX_MAGIC);
    out.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
    out.write_u32::<LittleEndian>(p.permutations() as u32).unwrap();
    out.write_u64::<LittleEndian>(p.voxels() as u64).unwrap();
    for &x in p.as_flat() {
        out.write_f32::<LittleEndian>(x).unwrap();
    }
    out
}

pub fn read_pzmx(path: &Path) -> Result<PermutationMatrix, FormatError> {
    decode_pzmx(&std::fs::read(path)?)
}

pub fn write_pzmx(path: &Path, p: &PermutationMatrix) -> Result<(), FormatError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_pzmx(p))?;
    Ok(())
}

/// One entry of a region list file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionSpec {
    Voxels { name: String, voxels: Vec<Vec<i32>> },
    AtlasLabel { name: String, atlas_label: u16 },
}

impl RegionSpec {
    pub fn name(&self) -> &str {
        match self {
            RegionSpec::Voxels { name, .. } | RegionSpec::AtlasLabel { name, .. } => name,
        }
    }
}

pub fn parse_regions(text: &str) -> Result<Vec<RegionSpec>, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::Invalid(format!("region list: {e}")))
}

pub fn read_regions(path: &Path) -> Result<Vec<RegionSpec>, FormatError> {
    let mut s = String::new();
    std::fs::File::open(path)?.read_to_string(&mut s)?;
    parse_regions(&s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vvol_round_trip() {
        for data in [
            VolumeData::U8((0..24).map(|x| x as u8).collect()),
            VolumeData::U16((0..24).map(|x| x * 1000).collect()),
            VolumeData::F32((0..24).map(|x| x as f32 * 0.25 - 2.0).collect()),
        ] {
            let v = Volume::new(vec![2, 3, 4], data).unwrap();
            assert_eq!(decode_vvol(&encode_vvol(&v)).unwrap(), v);
        }
    }

    #[test]
    fn vvol_errors() {
        let v = Volume::new(vec![2, 2], VolumeData::F32(vec![1.0; 4])).unwrap();
        let bytes = encode_vvol(&v);
        match decode_vvol(&bytes[..bytes.len() - 3]) {
            Err(FormatError::Truncated { expected, actual, .. }) => {
                assert_eq!(expected, bytes.len() as u64);
                assert_eq!(actual, bytes.len() as u64 - 3);
            }
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_vvol(&bad), Err(FormatError::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4 + 4 + 4 + 16] = 9;
        assert!(matches!(decode_vvol(&bad), Err(FormatError::BadDtype { found: 9, offset: 28 })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_vvol(&long), Err(FormatError::Trailing { extra: 1, .. })));
        assert!(matches!(decode_vvol(&bytes[..6]), Err(FormatError::Truncated { .. })));
    }

    #[test]
    fn pzmx_round_trip() {
        let p = PermutationMatrix::new(vec![vec![1.0, -2.0, 0.5], vec![0.0, 3.5, -1.0]]).unwrap();
        let b = encode_pzmx(&p);
        assert_eq!(&b[..4], b"PZMX");
        assert_eq!(b.len(), 20 + 6 * 4);
        assert_eq!(decode_pzmx(&b).unwrap(), p);
        assert!(matches!(decode_pzmx(&b[..30]), Err(FormatError::Truncated { expected: 44, actual: 30, .. })));
    }

    #[test]
    fn ravel_matches_voxel_order() {
        let ext = [3, 4, 2];
        let set = grid_voxels(&ext, |_| true);
        for (i, v) in set.iter().enumerate() {
            assert_eq!(ravel(&ext, v), Some(i));
        }
        assert_eq!(ravel(&ext, &[3, 0, 0]), None);
        assert_eq!(ravel(&ext, &[0, -1, 0]), None);
    }

    #[test]
    fn region_list() {
        let r = parse_regions(r#"[{"name":"a","voxels":[[1,2,3],[1,2,4]]},{"name":"b","atlas_label":7}]"#).unwrap();
        assert_eq!(r[0], RegionSpec::Voxels { name: "a".into(), voxels: vec![vec![1, 2, 3], vec![1, 2, 4]] });
        assert_eq!(r[1], RegionSpec::AtlasLabel { name: "b".into(), atlas_label: 7 });
        assert!(parse_regions(r#"[{"nom":"x"}]"#).is_err());
    }
}
