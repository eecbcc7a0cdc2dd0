//! Unit-norm embeddings: the deterministic trigram reference encoder, the
//! PROT v1 embedding file and the TOKE v1 token-encoding file.
//!
//! PROT v1 layout (all integers little-endian):
//!
//! ```text
//! "PROT" | u8 version=1 | u32 dim | u64 count
//! count x [ u32 id_len | id bytes (utf-8) | dim x f32 ]
//! ```
//!
//! TOKE v1 layout:
//!
//! ```text
//! "TOKE" | u8 version=1 | u32 dim | u32 k
//! k x [ u32 len | token bytes ] | k x dim x f32
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::{self, Reader};
use crate::error::{Error, Result};

const PROT_MAGIC: &[u8; 4] = b"PROT";
const TOKE_MAGIC: &[u8; 4] = b"TOKE";
const FORMAT_VERSION: u8 = 1;

/// Norm deviation above which a loaded vector is reported.
pub const NORM_WARN_THRESHOLD: f64 = 1e-3;
/// Loaded vectors closer than this to unit norm are kept bit-for-bit.
const NORM_KEEP_TOLERANCE: f64 = 1e-6;

/// Dimension of the reference encoder used throughout the desk-scale fixtures.
pub const REFERENCE_DIM: usize = 64;

const BOUNDARY: char = '#';

/// An L2-normalised embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f32>);

fn l2_norm(values: &[f32]) -> f64 {
    values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
}

impl Vector {
    /// Normalises `values`. Fails on an empty or zero vector; `id` names the
    /// vector in the error.
    pub fn normalized(values: Vec<f32>, id: &str) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let norm = l2_norm(&values);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm(id.to_owned()));
        }
        Ok(Vector(
            values
                .into_iter()
                .map(|v| (f64::from(v) / norm) as f32)
                .collect(),
        ))
    }

    pub(crate) fn from_unit(values: Vec<f32>) -> Self {
        Vector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// Cosine similarity; both sides are unit norm so this is the dot product.
    pub fn cosine(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }
}

/// Sequential f64 accumulation keeps scores identical across runs and thread
/// counts.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Character trigrams of the lowercased, trimmed text padded with one `#` on
/// each side.
pub fn trigrams(text: &str) -> Vec<String> {
    let mut chars = vec![BOUNDARY];
    chars.extend(text.trim().to_lowercase().chars());
    chars.push(BOUNDARY);
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Deterministic hashed-trigram encoder. Each trigram adds +1 or -1 (the sign
/// is bit 63 of its FNV-1a hash) to bucket `hash mod dim`.
pub fn reference_encode(text: &str, dim: usize) -> Result<Vector> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    if text.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let mut acc = vec![0i64; dim];
    for gram in trigrams(text) {
        let h = fnv1a64(gram.as_bytes());
        let sign = if h >> 63 == 1 { -1 } else { 1 };
        acc[(h % dim as u64) as usize] += sign;
    }
    Vector::normalized(acc.into_iter().map(|c| c as f32).collect(), text)
}

/// Source of phrase embeddings: the reference encoder or a precomputed store.
pub trait TextEncoder: Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vector>;
}

#[derive(Debug, Clone, Copy)]
pub struct ReferenceEncoder {
    pub dim: usize,
}

impl Default for ReferenceEncoder {
    fn default() -> Self {
        ReferenceEncoder { dim: REFERENCE_DIM }
    }
}

impl TextEncoder for ReferenceEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vector> {
        reference_encode(text, self.dim)
    }
}

/// Ordered `(id, vector)` collection sharing one dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vector>,
    index: HashMap<String, usize>,
    warnings: Vec<String>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Ok(EmbeddingStore {
            dim,
            ids: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
            warnings: Vec::new(),
        })
    }

    /// Adds a raw vector, normalising it unless it is already unit norm.
    pub fn push(&mut self, id: impl Into<String>, values: Vec<f32>) -> Result<()> {
        let id = id.into();
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: values.len(),
            });
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let norm = l2_norm(&values);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm(id));
        }
        if (norm - 1.0).abs() > NORM_WARN_THRESHOLD {
            let msg = format!("vector {id} has norm {norm:.6}; renormalised");
            log::warn!("{msg}");
            self.warnings.push(msg);
        }
        let vector = if (norm - 1.0).abs() <= NORM_KEEP_TOLERANCE {
            Vector::from_unit(values)
        } else {
            Vector::normalized(values, &id)?
        };
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Vector> {
        self.index.get(id).map(|&i| &self.vectors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Vector)> + '_ {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    /// Norm warnings recorded while loading.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut r = Reader::new(reader, "PROT");
        r.header(PROT_MAGIC, FORMAT_VERSION)?;
        let dim = r.u32("dim")? as usize;
        let count = r.u64("count")?;
        let mut store = EmbeddingStore::new(dim)?;
        for i in 0..count {
            let id = r.string(&format!("id of record {i}"))?;
            let values = r.f32s(dim, &format!("vector of record {i}"))?;
            store.push(id, values)?;
        }
        r.finish()?;
        Ok(store)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        binio::write_all(&mut w, PROT_MAGIC, "PROT")?;
        binio::write_all(&mut w, &[FORMAT_VERSION], "PROT")?;
        binio::write_all(&mut w, &(self.dim as u32).to_le_bytes(), "PROT")?;
        binio::write_all(&mut w, &(self.len() as u64).to_le_bytes(), "PROT")?;
        for (id, v) in self.iter() {
            binio::write_str(&mut w, id, "PROT")?;
            binio::write_f32s(&mut w, v.as_slice(), "PROT")?;
        }
        w.flush().map_err(|e| Error::io("PROT", e))
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::read_from(BufReader::new(f))
}

pub fn write_embeddings(store: &EmbeddingStore, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    store.write_to(BufWriter::new(f))
}

/// Looks phrases up by exact text in a store whose ids are the phrases
/// themselves (e.g. semantic type names or article variants produced by the
/// exporter).
pub struct StoreEncoder<'a> {
    pub store: &'a EmbeddingStore,
}

impl TextEncoder for StoreEncoder<'_> {
    fn dim(&self) -> usize {
        self.store.dim()
    }

    fn encode(&self, text: &str) -> Result<Vector> {
        self.store
            .get(text)
            .cloned()
            .ok_or_else(|| Error::MissingEmbedding(text.to_owned()))
    }
}

/// Token-level encodings of one text, as produced by a token encoder. Rows
/// are raw model outputs and are not normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEncodings {
    dim: usize,
    tokens: Vec<String>,
    rows: Vec<Vec<f32>>,
}

impl TokenEncodings {
    pub fn new(dim: usize, tokens: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if tokens.is_empty() {
            return Err(Error::EmptyInput("token encodings"));
        }
        if tokens.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: tokens.len(),
                found: rows.len(),
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(TokenEncodings { dim, tokens, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn rows(&self) -> &[Vec<f32>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut r = Reader::new(reader, "TOKE");
        r.header(TOKE_MAGIC, FORMAT_VERSION)?;
        let dim = r.u32("dim")? as usize;
        let k = r.u32("token count")? as usize;
        let tokens = (0..k)
            .map(|i| r.string(&format!("token {i}")))
            .collect::<Result<Vec<_>>>()?;
        let rows = (0..k)
            .map(|i| r.f32s(dim, &format!("encoding of token {i}")))
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        TokenEncodings::new(dim, tokens, rows)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        binio::write_all(&mut w, TOKE_MAGIC, "TOKE")?;
        binio::write_all(&mut w, &[FORMAT_VERSION], "TOKE")?;
        binio::write_all(&mut w, &(self.dim as u32).to_le_bytes(), "TOKE")?;
        binio::write_all(&mut w, &(self.len() as u32).to_le_bytes(), "TOKE")?;
        for t in &self.tokens {
            binio::write_str(&mut w, t, "TOKE")?;
        }
        for row in &self.rows {
            binio::write_f32s(&mut w, row, "TOKE")?;
        }
        w.flush().map_err(|e| Error::io("TOKE", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(f))
    }
}

/// Mean of the token rows `start..=end`, L2-normalised.
pub fn mean_pool(encodings: &TokenEncodings, start: usize, end: usize) -> Result<Vector> {
    if end < start || end >= encodings.len() {
        return Err(Error::InvalidSpan {
            start,
            end,
            len: encodings.len(),
        });
    }
    let mut sum = vec![0f64; encodings.dim()];
    for row in &encodings.rows[start..=end] {
        for (s, &v) in sum.iter_mut().zip(row) {
            *s += f64::from(v);
        }
    }
    let n = (end - start + 1) as f64;
    Vector::normalized(
        sum.into_iter().map(|s| (s / n) as f32).collect(),
        &format!("mean of tokens {start}..={end}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos(a: &str, b: &str) -> f64 {
        reference_encode(a, 64)
            .unwrap()
            .cosine(&reference_encode(b, 64).unwrap())
    }

    #[test]
    fn fnv_known_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn trigram_padding() {
        assert_eq!(trigrams("Cat"), vec!["#ca", "cat", "at#"]);
        assert_eq!(trigrams("a"), vec!["#a#"]);
    }

    #[test]
    fn reference_encode_is_deterministic_and_unit() {
        let a = reference_encode("cat", 64).unwrap();
        let b = reference_encode("cat", 64).unwrap();
        assert_eq!(a, b);
        for s in ["cat", "Nasal sinus", "x", "mRNA N6-methyladenosine"] {
            assert!((reference_encode(s, 64).unwrap().norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn reference_encode_errors() {
        assert!(matches!(reference_encode("   ", 64), Err(Error::EmptyText)));
        assert!(matches!(
            reference_encode("cat", 1),
            Err(Error::InvalidDimension(1))
        ));
    }

    /// Independent check: the bucket vector assembled by hand from the
    /// trigram list and hash definition.
    fn oracle_counts(text: &str, dim: usize) -> Vec<i64> {
        let lower = text.trim().to_lowercase();
        let padded: Vec<char> = std::iter::once('#')
            .chain(lower.chars())
            .chain(std::iter::once('#'))
            .collect();
        let mut out = vec![0i64; dim];
        for i in 0..padded.len() - 2 {
            let g: String = padded[i..i + 3].iter().collect();
            let mut h: u64 = 14695981039346656037;
            for b in g.bytes() {
                h = (h ^ b as u64).wrapping_mul(1099511628211);
            }
            out[(h % dim as u64) as usize] += if h & (1 << 63) != 0 { -1 } else { 1 };
        }
        out
    }

    fn oracle_cos(a: &str, b: &str) -> f64 {
        let x = oracle_counts(a, 64);
        let y = oracle_counts(b, 64);
        let d: i64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
        let nx: i64 = x.iter().map(|p| p * p).sum();
        let ny: i64 = y.iter().map(|p| p * p).sum();
        d as f64 / ((nx * ny) as f64).sqrt()
    }

    #[test]
    fn surface_similarity_ordering() {
        let near = oracle_cos("nasal sinus", "nasal sinuses");
        let far = oracle_cos("nasal sinus", "methylation");
        assert!(near > far);
        assert!((cos("nasal sinus", "nasal sinuses") - near).abs() < 1e-6);
        assert!((cos("nasal sinus", "methylation") - far).abs() < 1e-6);
    }

    fn prot_bytes(dim: u32, records: &[(&str, Vec<f32>)]) -> Vec<u8> {
        let mut out = b"PROT".to_vec();
        out.push(1);
        out.extend(dim.to_le_bytes());
        out.extend((records.len() as u64).to_le_bytes());
        for (id, v) in records {
            out.extend((id.len() as u32).to_le_bytes());
            out.extend(id.as_bytes());
            for x in v {
                out.extend(x.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn parses_hand_built_384_dim_store() {
        let mk = |i: usize| {
            let mut v = vec![0f32; 384];
            v[i] = 1.0;
            v
        };
        let bytes = prot_bytes(384, &[("C1#0", mk(0)), ("C1#1", mk(5)), ("C2#0", mk(383))]);
        let store = EmbeddingStore::read_from(&bytes[..]).unwrap();
        assert_eq!(store.dim(), 384);
        assert_eq!(store.len(), 3);
        assert_eq!(store.get("C2#0").unwrap().as_slice()[383], 1.0);
        assert!(store.warnings().is_empty());
    }

    #[test]
    fn zero_vector_names_id() {
        let bytes = prot_bytes(3, &[("ok", vec![1.0, 0.0, 0.0]), ("bad", vec![0.0; 3])]);
        let err = EmbeddingStore::read_from(&bytes[..]).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm(id) if id == "bad"));
    }

    #[test]
    fn off_norm_vector_is_renormalised_with_warning() {
        let bytes = prot_bytes(2, &[("a", vec![3.0, 4.0])]);
        let store = EmbeddingStore::read_from(&bytes[..]).unwrap();
        assert_eq!(store.warnings().len(), 1);
        let v = store.get("a").unwrap();
        assert!((v.as_slice()[0] - 0.6).abs() < 1e-7);
        assert!((v.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn prot_errors() {
        let mut bytes = prot_bytes(2, &[("a", vec![1.0, 0.0])]);
        bytes[0] = b'X';
        assert!(matches!(
            EmbeddingStore::read_from(&bytes[..]),
            Err(Error::BadMagic { .. })
        ));
        let mut bytes = prot_bytes(2, &[("a", vec![1.0, 0.0])]);
        bytes[4] = 2;
        assert!(matches!(
            EmbeddingStore::read_from(&bytes[..]),
            Err(Error::BadVersion { version: 2, .. })
        ));
        let bytes = prot_bytes(2, &[("a", vec![1.0, 0.0])]);
        assert!(matches!(
            EmbeddingStore::read_from(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        let bytes = prot_bytes(2, &[("a", vec![1.0, 0.0]), ("a", vec![0.0, 1.0])]);
        assert!(matches!(
            EmbeddingStore::read_from(&bytes[..]),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn mean_pool_cases() {
        let s = std::f32::consts::FRAC_1_SQRT_2;
        let enc = TokenEncodings::new(
            2,
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap();
        assert_eq!(mean_pool(&enc, 1, 1).unwrap().as_slice(), &[0.0, 1.0]);
        assert_eq!(mean_pool(&enc, 1, 2).unwrap().as_slice(), &[0.0, 1.0]);
        let v = mean_pool(&enc, 0, 1).unwrap();
        assert!((v.as_slice()[0] - s).abs() < 1e-7 && (v.as_slice()[1] - s).abs() < 1e-7);
        assert!(matches!(
            mean_pool(&enc, 2, 1),
            Err(Error::InvalidSpan { .. })
        ));
        assert!(matches!(
            mean_pool(&enc, 3, 4),
            Err(Error::InvalidSpan { .. })
        ));
    }
}
