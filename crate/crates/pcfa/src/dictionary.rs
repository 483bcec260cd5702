//! Learned dictionaries and their on-disk format.
//!
//! File layout (all integers little-endian):
//! `"PCDM"` magic, `u16` format version, `u8` kind tag (0 = pol, 1 = rgb,
//! 2 = mono), `u32` rows, `u32` cols, `u32` metadata length, metadata bytes
//! (UTF-8 JSON), then `rows * cols` `f64` values row-major. Bit-exact across
//! platforms.

use crate::error::{Error, Result};
use crate::signal::SignalKind;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const DICT_MAGIC: &[u8; 4] = b"PCDM";
pub const DICT_VERSION: u16 = 1;

/// Which signal domain a dictionary codes. Mirrors [`SignalKind`].
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictKind {
    Pol,
    Rgb,
    Mono,
}

impl DictKind {
    pub fn rows(self) -> usize {
        self.signal_kind().rows()
    }

    pub fn signal_kind(self) -> SignalKind {
        match self {
            DictKind::Pol => SignalKind::Pol,
            DictKind::Rgb => SignalKind::Rgb,
            DictKind::Mono => SignalKind::Mono,
        }
    }

    fn tag(self) -> u8 {
        match self {
            DictKind::Pol => 0,
            DictKind::Rgb => 1,
            DictKind::Mono => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(DictKind::Pol),
            1 => Some(DictKind::Rgb),
            2 => Some(DictKind::Mono),
            _ => None,
        }
    }
}

/// Training provenance carried alongside the atoms.
#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct DictionaryMeta {
    /// Hex digest of the raw training signal matrix.
    pub training_hash: String,
    pub seed: u64,
    pub sweeps: usize,
    pub lambda: f64,
    pub sparsity: usize,
}

/// An over-complete dictionary of unit-norm atoms (columns).
#[derive(Clone, PartialEq, Debug)]
pub struct Dictionary {
    kind: DictKind,
    atoms: DMatrix<f64>,
    meta: DictionaryMeta,
}

const UNIT_NORM_TOL: f64 = 1e-8;

impl Dictionary {
    pub fn new(kind: DictKind, atoms: DMatrix<f64>, meta: DictionaryMeta) -> Result<Self> {
        if atoms.nrows() != kind.rows() {
            return Err(Error::DictionaryFormat(format!(
                "{:?} dictionary needs {} rows, got {}",
                kind,
                kind.rows(),
                atoms.nrows()
            )));
        }
        for (j, col) in atoms.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::DictionaryFormat(format!(
                    "atom {j} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Dictionary { kind, atoms, meta })
    }

    pub fn kind(&self) -> DictKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn meta(&self) -> &DictionaryMeta {
        &self.meta
    }

    /// Gram matrix of the atoms; cached by hot paths, not stored.
    pub fn gram(&self) -> DMatrix<f64> {
        self.atoms.tr_mul(&self.atoms)
    }
}

pub fn save_dictionary(dict: &Dictionary, path: impl AsRef<Path>) -> Result<()> {
    let meta = serde_json::to_vec(&dict.meta)
        .map_err(|e| Error::DictionaryFormat(format!("metadata encode: {e}")))?;
    let mut out = Vec::with_capacity(19 + meta.len() + dict.rows() * dict.atom_count() * 8);
    out.extend_from_slice(DICT_MAGIC);
    out.extend_from_slice(&DICT_VERSION.to_le_bytes());
    out.push(dict.kind.tag());
    out.extend_from_slice(&(dict.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(dict.atom_count() as u32).to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    for r in 0..dict.rows() {
        for c in 0..dict.atom_count() {
            out.extend_from_slice(&dict.atoms[(r, c)].to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            return Err(Error::DictionaryFormat("truncated file".into()));
        }
        let s = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(s)
    };

    if take(&mut cursor, 4)? != DICT_MAGIC {
        return Err(Error::DictionaryFormat("bad magic".into()));
    }
    let version = u16::from_le_bytes(take(&mut cursor, 2)?.try_into().unwrap());
    if version != DICT_VERSION {
        return Err(Error::DictionaryFormat(format!("unsupported version {version}")));
    }
    let kind = DictKind::from_tag(take(&mut cursor, 1)?[0])
        .ok_or_else(|| Error::DictionaryFormat("unknown kind tag".into()))?;
    let rows = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let meta_len = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let meta: DictionaryMeta = serde_json::from_slice(take(&mut cursor, meta_len)?)
        .map_err(|e| Error::DictionaryFormat(format!("metadata decode: {e}")))?;

    if rows != kind.rows() {
        return Err(Error::DictionaryFormat(format!(
            "{kind:?} dictionary declares {rows} rows, expected {}",
            kind.rows()
        )));
    }
    let data = take(&mut cursor, rows * cols * 8)?;
    if cursor != bytes.len() {
        return Err(Error::DictionaryFormat("trailing bytes".into()));
    }
    let mut atoms = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let off = (r * cols + c) * 8;
            atoms[(r, c)] = f64::from_le_bytes(data[off..off + 8].try_into().unwrap());
        }
    }
    Dictionary::new(kind, atoms, meta)
}

/// Short hex digest of a signal matrix, recorded as training provenance.
pub fn training_hash(data: &DMatrix<f64>) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update((data.nrows() as u64).to_le_bytes());
    hasher.update((data.ncols() as u64).to_le_bytes());
    for v in data.iter() {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempdir::tempdir;

    mod tempdir {
        use std::path::PathBuf;

        pub struct TempDir(PathBuf);

        impl TempDir {
            pub fn path(&self) -> &std::path::Path {
                &self.0
            }
        }

        impl Drop for TempDir {
            fn drop(&mut self) {
                let _ = std::fs::remove_dir_all(&self.0);
            }
        }

        pub fn tempdir(tag: &str) -> TempDir {
            let dir = std::env::temp_dir().join(format!("pcfa-dict-test-{tag}-{}", std::process::id()));
            std::fs::create_dir_all(&dir).unwrap();
            TempDir(dir)
        }
    }

    fn sample_dictionary(kind: DictKind, atoms: usize) -> Dictionary {
        let rows = kind.rows();
        let mut m = DMatrix::from_fn(rows, atoms, |r, c| ((r * 31 + c * 7 + 3) % 17) as f64 - 8.0);
        for mut col in m.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        Dictionary::new(
            kind,
            m,
            DictionaryMeta {
                training_hash: "abc123".into(),
                seed: 7,
                sweeps: 5,
                lambda: 1e-4,
                sparsity: 8,
            },
        )
        .unwrap()
    }

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let dir = tempdir("roundtrip");
        let path = dir.path().join("d.pcdm");
        let dict = sample_dictionary(DictKind::Pol, 32);
        save_dictionary(&dict, &path).unwrap();
        let back = load_dictionary(&path).unwrap();
        assert_eq!(dict, back);
        // Byte-identical on re-save.
        let path2 = dir.path().join("d2.pcdm");
        save_dictionary(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corrupted_magic_rejected() {
        let dir = tempdir("magic");
        let path = dir.path().join("d.pcdm");
        save_dictionary(&sample_dictionary(DictKind::Mono, 8), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_dictionary(&path), Err(Error::DictionaryFormat(_))));
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempdir("trunc");
        let path = dir.path().join("d.pcdm");
        save_dictionary(&sample_dictionary(DictKind::Mono, 8), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(load_dictionary(&path).is_err());
    }

    #[test]
    fn kind_row_mismatch_rejected() {
        let dir = tempdir("kindrows");
        let path = dir.path().join("d.pcdm");
        save_dictionary(&sample_dictionary(DictKind::Pol, 8), &path).unwrap();
        // Flip the kind tag to rgb: rows no longer match the declared kind.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[6] = 1;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_dictionary(&path), Err(Error::DictionaryFormat(_))));
    }

    #[test]
    fn non_unit_atoms_rejected() {
        let m = DMatrix::from_element(16, 4, 0.5);
        assert!(Dictionary::new(DictKind::Mono, m, DictionaryMeta::default()).is_err());
    }

    #[test]
    fn training_hash_is_stable_and_shape_sensitive() {
        let a = DMatrix::from_element(4, 3, 1.0);
        let b = DMatrix::from_element(3, 4, 1.0);
        assert_eq!(training_hash(&a), training_hash(&a));
        assert_ne!(training_hash(&a), training_hash(&b));
    }
}
