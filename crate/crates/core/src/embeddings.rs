//! Per-model document embeddings and the `DQV1` on-disk layout.
//!
//! ```text
//! b"DQV1" | dim: u32 LE | count: u64 LE | count × ( id_len: u16 LE | id bytes | dim × f32 LE )
//! ```
//!
//! The model id is not part of the payload; files live at
//! `<collection>/<model_id>.dqv` and take their model id from the file stem.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"DQV1";
pub const FILE_EXTENSION: &str = "dqv";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("file truncated")]
    TruncatedFile,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid embedding matrix: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for EmbeddingError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            EmbeddingError::TruncatedFile
        } else {
            EmbeddingError::Io(e)
        }
    }
}

/// One model's document vectors for one collection, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    model_id: String,
    dim: usize,
    doc_ids: Vec<String>,
    vectors: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(
        model_id: impl Into<String>,
        dim: usize,
        doc_ids: Vec<String>,
        vectors: Vec<f32>,
    ) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::Invalid("dim must be positive".into()));
        }
        if vectors.len() != doc_ids.len() * dim {
            return Err(EmbeddingError::Invalid(format!(
                "{} values for {} rows of dim {dim}",
                vectors.len(),
                doc_ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(doc_ids.len());
        if let Some(dup) = doc_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(EmbeddingError::Invalid(format!("duplicate doc id {dup:?}")));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::Invalid(format!(
                "non-finite component in row {}",
                pos / dim
            )));
        }
        Ok(Self {
            model_id: model_id.into(),
            dim,
            doc_ids,
            vectors,
        })
    }

    /// Builds a matrix from one vector per document.
    pub fn from_rows(
        model_id: impl Into<String>,
        dim: usize,
        rows: impl IntoIterator<Item = (String, Vec<f32>)>,
    ) -> Result<Self, EmbeddingError> {
        let mut doc_ids = Vec::new();
        let mut vectors = Vec::new();
        for (id, v) in rows {
            if v.len() != dim {
                return Err(EmbeddingError::DimMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            doc_ids.push(id);
            vectors.extend_from_slice(&v);
        }
        Self::new(model_id, dim, doc_ids, vectors)
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.doc_ids
            .iter()
            .map(String::as_str)
            .zip(self.vectors.chunks_exact(self.dim))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.vectors
    }

    pub fn index_by_id(&self) -> HashMap<&str, usize> {
        self.doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

pub fn write_embeddings<W: Write>(matrix: &EmbeddingMatrix, mut sink: W) -> Result<(), EmbeddingError> {
    let dim = u32::try_from(matrix.dim).map_err(|_| EmbeddingError::Invalid("dim exceeds u32".into()))?;
    sink.write_all(MAGIC)?;
    sink.write_all(&dim.to_le_bytes())?;
    sink.write_all(&(matrix.len() as u64).to_le_bytes())?;
    for (id, row) in matrix.rows() {
        let len = u16::try_from(id.len())
            .map_err(|_| EmbeddingError::Invalid(format!("doc id of {} bytes exceeds u16", id.len())))?;
        sink.write_all(&len.to_le_bytes())?;
        sink.write_all(id.as_bytes())?;
        for x in row {
            sink.write_all(&x.to_le_bytes())?;
        }
    }
    sink.flush()?;
    Ok(())
}

/// Dimension and record count from the 16-byte header.
pub fn read_header<R: Read>(mut source: R) -> Result<(usize, usize), EmbeddingError> {
    let mut magic = [0u8; 4];
    source.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(EmbeddingError::BadMagic(magic));
    }
    let mut u32_buf = [0u8; 4];
    source.read_exact(&mut u32_buf)?;
    let dim = u32::from_le_bytes(u32_buf) as usize;
    let mut u64_buf = [0u8; 8];
    source.read_exact(&mut u64_buf)?;
    let count = u64::from_le_bytes(u64_buf) as usize;
    if dim == 0 {
        return Err(EmbeddingError::Invalid("dim must be positive".into()));
    }
    Ok((dim, count))
}

/// [`read_header`] of a file on disk.
pub fn header_of(path: &Path) -> Result<(usize, usize), EmbeddingError> {
    read_header(File::open(path)?)
}

pub fn read_embeddings<R: Read>(mut source: R, model_id: &str) -> Result<EmbeddingMatrix, EmbeddingError> {
    let (dim, count) = read_header(&mut source)?;

    // cap preallocation; a corrupt count must not trigger a huge allocation
    let mut doc_ids = Vec::with_capacity(count.min(1 << 16));
    let mut vectors = Vec::with_capacity(count.min(1 << 16) * dim);
    let mut row = vec![0u8; dim * 4];
    for _ in 0..count {
        let mut len_buf = [0u8; 2];
        source.read_exact(&mut len_buf)?;
        let mut id = vec![0u8; u16::from_le_bytes(len_buf) as usize];
        source.read_exact(&mut id)?;
        let id = String::from_utf8(id).map_err(|_| EmbeddingError::Invalid("doc id is not UTF-8".into()))?;
        source.read_exact(&mut row)?;
        vectors.extend(
            row.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
        doc_ids.push(id);
    }
    let mut extra = [0u8; 1];
    if source.read(&mut extra)? != 0 {
        return Err(EmbeddingError::Invalid("trailing bytes after last record".into()));
    }
    EmbeddingMatrix::new(model_id, dim, doc_ids, vectors)
}

/// Reads `<dir>/<model_id>.dqv`, taking the model id from the file stem.
pub fn load(path: &Path) -> Result<EmbeddingMatrix, EmbeddingError> {
    let model_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| EmbeddingError::Invalid(format!("no model id in path {}", path.display())))?
        .to_string();
    read_embeddings(BufReader::new(File::open(path)?), &model_id)
}

/// Like [`load`], but also checks the stored dimension.
pub fn load_expecting(path: &Path, dim: usize) -> Result<EmbeddingMatrix, EmbeddingError> {
    let m = load(path)?;
    if m.dim() != dim {
        return Err(EmbeddingError::DimMismatch {
            expected: dim,
            found: m.dim(),
        });
    }
    Ok(m)
}

/// Writes atomically: a reader never observes a half-written file at `path`.
pub fn save(matrix: &EmbeddingMatrix, path: &Path) -> Result<(), EmbeddingError> {
    let tmp = path.with_extension(format!(
        "{FILE_EXTENSION}.tmp-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    {
        let file = File::create(&tmp)?;
        let mut w = BufWriter::new(file);
        write_embeddings(matrix, &mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn path_for(collection_dir: &Path, model_id: &str) -> std::path::PathBuf {
    collection_dir.join(format!("{model_id}.{FILE_EXTENSION}"))
}
