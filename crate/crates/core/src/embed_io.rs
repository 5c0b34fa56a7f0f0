//! Embedding matrices and their on-disk formats.
//!
//! `EMB1` (matrix) layout, all little-endian:
//!
//! ```text
//! 0   "EMB1"
//! 4   u32 version = 1
//! 8   u32 rows
//! 12  u32 dim
//! 16  u8  dtype = 1 (f32)
//! 17  u8  normalized (0/1)
//! 18  6 zero bytes
//! 24  rows * dim f32 values, row-major
//! ```
//!
//! `BIA1` (bias cache) layout:
//!
//! ```text
//! 0   "BIA1"
//! 4   u32 version = 1
//! 8   u32 n
//! 12  f64 alpha
//! 20  u32 k
//! 24  u32 zero
//! 28  u64 reference fingerprint
//! 36  n f32 values
//! ```
//!
//! Ground truth, attribute labels and query groups are plain TSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::normalization::BiasVector;

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const BIAS_MAGIC: &[u8; 4] = b"BIA1";
pub const FORMAT_VERSION: u32 = 1;
pub const EMB_HEADER_LEN: usize = 24;
pub const BIAS_HEADER_LEN: usize = 36;
const DTYPE_F32: u8 = 1;

/// Tolerance on row norms for matrices flagged as normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

/// Dense row-major `rows x dim` matrix of `f32` embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>, normalized: bool) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("dim must be at least 1".into()));
        }
        if rows.checked_mul(dim) != Some(data.len()) {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{dim} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                offset: (EMB_HEADER_LEN + 4 * i) as u64,
            });
        }
        let m = EmbeddingMatrix {
            rows,
            dim,
            data,
            normalized,
        };
        if normalized {
            for (row, v) in m.iter_rows().enumerate() {
                let norm = l2_norm(v);
                if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                    return Err(Error::NotNormalized { row, norm });
                }
            }
        }
        Ok(m)
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(0, dim, Vec::new(), false)
    }

    /// Builds a matrix from equally sized rows. `dim` is needed when `rows` is empty.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R], dim: usize, normalized: bool) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Shape(format!(
                    "row {i} has {} values, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data, normalized)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    /// Copies the given rows, in the given order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    bound: self.rows,
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(EmbeddingMatrix {
            rows: indices.len(),
            dim: self.dim,
            data,
            normalized: self.normalized,
        })
    }

    /// Returns a copy with every row scaled to unit L2 norm.
    pub fn to_normalized(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (row, chunk) in data.chunks_exact_mut(self.dim).enumerate() {
            normalize_in_place(chunk).ok_or(Error::ZeroVectorOnNormalize { row })?;
        }
        Ok(EmbeddingMatrix {
            rows: self.rows,
            dim: self.dim,
            data,
            normalized: true,
        })
    }

    pub fn to_emb1_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(EMB_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(EMB_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.push(DTYPE_F32);
        out.push(self.normalized as u8);
        out.extend_from_slice(&[0u8; 6]);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_emb1_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(EMB_MAGIC, "EMB1")?;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let rows = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let dtype = r.u8()?;
        if dtype != DTYPE_F32 {
            return Err(Error::UnsupportedDtype(dtype));
        }
        let normalized = r.u8()? != 0;
        r.skip(6)?;
        let data = r.f32s(rows * dim)?;
        Self::new(rows, dim, data, normalized)
    }
}

/// L2 norm accumulated in f64.
pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

fn normalize_in_place(v: &mut [f32]) -> Option<()> {
    let norm = l2_norm(v);
    if norm == 0.0 {
        return None;
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    Some(())
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::TruncatedFile {
                offset: self.bytes.len() as u64,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, magic: &[u8; 4], name: &'static str) -> Result<()> {
        // A short file that still matches the magic prefix is a truncation.
        let avail = &self.bytes[..self.bytes.len().min(4)];
        if avail != &magic[..avail.len()] {
            return Err(Error::BadMagic {
                expected: name,
                offset: 0,
            });
        }
        self.take(4).map(|_| ())
    }

    fn skip(&mut self, n: usize) -> Result<()> {
        self.take(n).map(|_| ())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let start = self.pos;
        let raw = self.take(n.checked_mul(4).ok_or(Error::TruncatedFile {
            offset: self.bytes.len() as u64,
        })?)?;
        let mut out = Vec::with_capacity(n);
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    offset: (start + 4 * i) as u64,
                });
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::from_emb1_bytes(&read_file(path.as_ref())?)
}

pub fn save_matrix(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &m.to_emb1_bytes())
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// FNV-1a digest of the matrix's EMB1 encoding (header, then payload).
pub fn fingerprint(m: &EmbeddingMatrix) -> u64 {
    fnv1a64(&m.to_emb1_bytes())
}

/// Parses whitespace-free TSV rows of decimal or scientific floats. Blank lines
/// and lines starting with `#` are skipped.
pub fn parse_tsv_matrix(text: &str, normalize: bool) -> Result<EmbeddingMatrix> {
    let mut data = Vec::new();
    let mut dim = None;
    let mut rows = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match dim {
            None => dim = Some(fields.len()),
            Some(d) if d != fields.len() => {
                return Err(Error::RaggedRows {
                    line: line_no,
                    expected: d,
                    found: fields.len(),
                })
            }
            _ => {}
        }
        for f in fields {
            let v: f32 = f.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("cannot parse {f:?} as a float"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite value {f:?}"),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    let dim = dim.ok_or(Error::EmptyInput("TSV input has no data rows"))?;
    let m = EmbeddingMatrix::new(rows, dim, data, false)?;
    if normalize {
        m.to_normalized()
    } else {
        Ok(m)
    }
}

pub fn import_tsv(path: impl AsRef<Path>, normalize: bool) -> Result<EmbeddingMatrix> {
    parse_tsv_matrix(&read_text(path.as_ref())?, normalize)
}

impl BiasVector {
    pub fn to_bia1_bytes(&self) -> Vec<u8> {
        let values = self.values();
        let mut out = Vec::with_capacity(BIAS_HEADER_LEN + 4 * values.len());
        out.extend_from_slice(BIAS_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(values.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.alpha().to_le_bytes());
        out.extend_from_slice(&(self.k() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&self.ref_fingerprint().to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bia1_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(BIAS_MAGIC, "BIA1")?;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let n = r.u32()? as usize;
        let alpha = r.f64()?;
        let k = r.u32()? as usize;
        r.skip(4)?;
        let fp = r.u64()?;
        let values = r.f32s(n)?;
        BiasVector::new(values, alpha, k, fp)
    }
}

pub fn save_bias(bias: &BiasVector, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &bias.to_bia1_bytes())
}

/// Loads a bias cache. Compare [`BiasVector::ref_fingerprint`] (or call
/// [`BiasVector::matches_reference`]) against the current reference set.
pub fn load_bias(path: impl AsRef<Path>) -> Result<BiasVector> {
    BiasVector::from_bia1_bytes(&read_file(path.as_ref())?)
}

fn tsv_records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

fn parse_index(field: &str, line: usize) -> Result<usize> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {field:?} as an index"),
    })
}

/// Query index to the set of correct candidate indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    map: BTreeMap<usize, BTreeSet<usize>>,
}

impl GroundTruth {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut map: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (q, c) in pairs {
            map.entry(q).or_default().insert(c);
        }
        GroundTruth { map }
    }

    pub fn get(&self, query: usize) -> Option<&BTreeSet<usize>> {
        self.map.get(&query)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &BTreeSet<usize>)> {
        self.map.iter().map(|(&q, s)| (q, s))
    }

    /// Checks index bounds against the query and candidate universes.
    pub fn validate(&self, n_queries: usize, n_candidates: usize) -> Result<()> {
        for (&q, set) in &self.map {
            if q >= n_queries {
                return Err(Error::IndexOutOfRange {
                    index: q,
                    bound: n_queries,
                });
            }
            if let Some(&c) = set.iter().next_back().filter(|&&c| c >= n_candidates) {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    bound: n_candidates,
                });
            }
        }
        Ok(())
    }

    /// Keeps only the given queries, renumbered by their position in `queries`.
    pub fn remap_queries(&self, queries: &[usize]) -> Self {
        let map = queries
            .iter()
            .enumerate()
            .filter_map(|(new, old)| self.map.get(old).map(|s| (new, s.clone())))
            .collect();
        GroundTruth { map }
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (line, fields) in tsv_records(text) {
            if fields.len() != 2 {
                return Err(Error::RaggedRows {
                    line,
                    expected: 2,
                    found: fields.len(),
                });
            }
            pairs.push((parse_index(fields[0], line)?, parse_index(fields[1], line)?));
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (q, set) in &self.map {
            for c in set {
                out.push_str(&format!("{q}\t{c}\n"));
            }
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_tsv(&read_text(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_tsv().as_bytes())
    }
}

/// Binary attribute carried by a candidate (e.g. perceived gender).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attribute {
    A,
    B,
}

impl Attribute {
    pub fn flipped(self) -> Self {
        match self {
            Attribute::A => Attribute::B,
            Attribute::B => Attribute::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateLabel {
    pub attribute: Attribute,
    pub group: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttributeLabels {
    map: BTreeMap<usize, CandidateLabel>,
}

impl AttributeLabels {
    pub fn new(map: BTreeMap<usize, CandidateLabel>) -> Self {
        AttributeLabels { map }
    }

    pub fn get(&self, candidate: usize) -> Option<&CandidateLabel> {
        self.map.get(&candidate)
    }

    pub fn flipped(&self) -> Self {
        let map = self
            .map
            .iter()
            .map(|(&c, l)| {
                (
                    c,
                    CandidateLabel {
                        attribute: l.attribute.flipped(),
                        group: l.group.clone(),
                    },
                )
            })
            .collect();
        AttributeLabels { map }
    }

    pub fn validate(&self, n_candidates: usize) -> Result<()> {
        match self.map.keys().next_back() {
            Some(&c) if c >= n_candidates => Err(Error::IndexOutOfRange {
                index: c,
                bound: n_candidates,
            }),
            _ => Ok(()),
        }
    }

    /// `cand_idx<TAB>A|B[<TAB>group]` per line.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (line, fields) in tsv_records(text) {
            if !(2..=3).contains(&fields.len()) {
                return Err(Error::RaggedRows {
                    line,
                    expected: 3,
                    found: fields.len(),
                });
            }
            let attribute = match fields[1].trim() {
                "A" => Attribute::A,
                "B" => Attribute::B,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("attribute must be A or B, got {other:?}"),
                    })
                }
            };
            let group = fields
                .get(2)
                .map(|g| g.trim().to_string())
                .filter(|g| !g.is_empty());
            map.insert(parse_index(fields[0], line)?, CandidateLabel { attribute, group });
        }
        Ok(AttributeLabels { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_tsv(&read_text(path.as_ref())?)
    }
}

/// Group tag per query (e.g. the occupation a caption describes).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryGroups {
    map: BTreeMap<usize, String>,
}

impl QueryGroups {
    pub fn new(map: BTreeMap<usize, String>) -> Self {
        QueryGroups { map }
    }

    pub fn get(&self, query: usize) -> Option<&str> {
        self.map.get(&query).map(String::as_str)
    }

    /// `query_idx<TAB>group` per line.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (line, fields) in tsv_records(text) {
            if fields.len() != 2 {
                return Err(Error::RaggedRows {
                    line,
                    expected: 2,
                    found: fields.len(),
                });
            }
            map.insert(parse_index(fields[0], line)?, fields[1].trim().to_string());
        }
        Ok(QueryGroups { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_tsv(&read_text(path.as_ref())?)
    }
}
