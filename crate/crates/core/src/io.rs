//! AKF4 binary field files.
//!
//! Layout (all integers little-endian `u32`):
//!
//! | offset | content                          |
//! |--------|----------------------------------|
//! | 0      | magic `AKF4`                     |
//! | 4      | version (= 1)                    |
//! | 8      | `n`                              |
//! | 12     | component count                  |
//! | 16     | reserved (= 0)                   |
//! | 20     | rank tag                         |
//! | 24     | `count * n^4` `f64` values       |
//!
//! Components are outermost; inside a component the index `i1` varies
//! slowest and `i4` fastest. The rank tag is the form degree for
//! differential forms (scalar fields are rank 0) and [`TENSOR_TAG`] for
//! other tensor data such as endomorphism fields.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::forms::{basis_len, Form};
use crate::grid::{GridSpec, ScalarField};

pub const MAGIC: &[u8; 4] = b"AKF4";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
/// Rank tag for data that is not a differential form.
pub const TENSOR_TAG: u32 = u32::MAX;

/// Decoded AKF4 payload.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub grid: GridSpec,
    pub rank_tag: u32,
    pub components: Vec<ScalarField>,
}

impl FieldFile {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let n = self.grid.n();
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(MAGIC);
        for v in [VERSION, n as u32, self.components.len() as u32, 0, self.rank_tag] {
            header.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.grid.len() * 8);
        for c in &self.components {
            if c.grid() != self.grid {
                return Err(Error::Format("component grid mismatch".into()));
            }
            buf.clear();
            for v in c.values() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        if &header[0..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let grid = GridSpec::new(word(8) as usize)
            .map_err(|e| Error::Format(format!("bad grid size: {e}")))?;
        let count = word(12) as usize;
        if word(16) != 0 {
            return Err(Error::Format("reserved word must be zero".into()));
        }
        let rank_tag = word(20);
        if rank_tag != TENSOR_TAG && (rank_tag > 4 || basis_len(rank_tag as usize) != count) {
            return Err(Error::Format(format!("rank tag {rank_tag} inconsistent with {count} components")));
        }
        let mut bytes = vec![0u8; grid.len() * 8];
        let mut components = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut bytes)?;
            let values = bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            components.push(ScalarField::from_values(grid, values)?);
        }
        Ok(FieldFile { grid, rank_tag, components })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn into_form(self) -> Result<Form> {
        if self.rank_tag == TENSOR_TAG {
            return Err(Error::Format("file does not hold a differential form".into()));
        }
        Form::from_components(self.rank_tag as usize, self.components)
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        if self.rank_tag != 0 {
            return Err(Error::Format(format!("expected rank 0, found tag {}", self.rank_tag)));
        }
        Ok(self.components.into_iter().next().expect("one component"))
    }
}

impl From<&Form> for FieldFile {
    fn from(form: &Form) -> Self {
        FieldFile {
            grid: form.grid(),
            rank_tag: form.rank() as u32,
            components: form.components().to_vec(),
        }
    }
}

impl From<&ScalarField> for FieldFile {
    fn from(f: &ScalarField) -> Self {
        FieldFile { grid: f.grid(), rank_tag: 0, components: vec![f.clone()] }
    }
}

pub fn save_scalar(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    FieldFile::from(field).save(path)
}

pub fn load_scalar(path: impl AsRef<Path>) -> Result<ScalarField> {
    FieldFile::load(path)?.into_scalar()
}

pub fn save_form(path: impl AsRef<Path>, form: &Form) -> Result<()> {
    FieldFile::from(form).save(path)
}

pub fn load_form(path: impl AsRef<Path>) -> Result<Form> {
    FieldFile::load(path)?.into_form()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let g = GridSpec::new(8).unwrap();
        let f = ScalarField::from_fn(g, |x| x[3]);
        let mut bytes = Vec::new();
        FieldFile::from(&f).write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 8 * 4096);
        assert_eq!(&bytes[0..4], b"AKF4");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &8u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &0u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &0u32.to_le_bytes());
        // i4 fastest: second value is x4 = 2π/8
        let v1 = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
        assert!((v1 - std::f64::consts::PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_inconsistent_rank() {
        let g = GridSpec::new(8).unwrap();
        let f = ScalarField::zeros(g);
        let mut file = FieldFile::from(&f);
        file.rank_tag = 2;
        let mut bytes = Vec::new();
        file.write_to(&mut bytes).unwrap();
        assert!(matches!(FieldFile::read_from(&bytes[..]), Err(Error::Format(_))));
        let mut bad = Vec::new();
        FieldFile::from(&f).write_to(&mut bad).unwrap();
        bad[0] = b'X';
        assert!(FieldFile::read_from(&bad[..]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn form_roundtrip(rank in 0usize..=4, seed in 0u64..100) {
            let g = GridSpec::new(8).unwrap();
            let comps = (0..basis_len(rank))
                .map(|c| crate::grid::tests::random_band_limited(g, seed * 7 + c as u64, 2))
                .collect();
            let form = Form::from_components(rank, comps).unwrap();
            let mut bytes = Vec::new();
            FieldFile::from(&form).write_to(&mut bytes).unwrap();
            let back = FieldFile::read_from(&bytes[..]).unwrap().into_form().unwrap();
            prop_assert_eq!(back, form);
        }
    }
}
