use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use super::FeatureError;

/// Frozen key → vector map with a fixed dimension. Unknown keys read as the
/// zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f32>>,
    zero: Vec<f32>,
}

pub type WordEmbeddingTable = VectorTable;
pub type UserVectorTable = VectorTable;

impl VectorTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: BTreeMap::new(), zero: vec![0.0; dim] }
    }

    pub fn from_map(dim: usize, vectors: BTreeMap<String, Vec<f32>>) -> Result<Self, FeatureError> {
        if let Some((k, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(FeatureError::Config(format!("vector for {k:?} has dimension {}, expected {dim}", v.len())));
        }
        Ok(Self { dim, vectors, zero: vec![0.0; dim] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.vectors.contains_key(key)
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    /// The stored vector, or all zeros for unknown keys.
    pub fn lookup(&self, key: &str) -> &[f32] {
        self.get(key).unwrap_or(&self.zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Textual word2vec format: "count dim" header, then "key v1 .. vdim".
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.vectors.len(), self.dim)?;
        for (k, v) in &self.vectors {
            write!(w, "{k}")?;
            for x in v {
                // shortest repr that round-trips f32
                write!(w, " {x:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self, FeatureError> {
        let mut lines = reader.lines();
        let header = lines.next().ok_or(FeatureError::Parse { line: 1, reason: "empty file".into() })??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse_header = |s: Option<&&str>| s.and_then(|s| s.parse::<usize>().ok());
        let (Some(count), Some(dim), 2) = (parse_header(fields.first()), parse_header(fields.get(1)), fields.len()) else {
            return Err(FeatureError::Parse { line: 1, reason: format!("expected \"count dim\" header, got {header:?}") });
        };
        let mut vectors = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ').filter(|s| !s.is_empty());
            let key = parts.next().unwrap_or_default().to_string();
            let values: Result<Vec<f32>, _> = parts.map(str::parse::<f32>).collect();
            let values = values.map_err(|e| FeatureError::Parse { line: lineno, reason: format!("bad component: {e}") })?;
            if values.len() != dim {
                return Err(FeatureError::Parse { line: lineno, reason: format!("expected {dim} components, found {}", values.len()) });
            }
            if vectors.insert(key.clone(), values).is_some() {
                return Err(FeatureError::Parse { line: lineno, reason: format!("duplicate key {key:?}") });
            }
        }
        if vectors.len() != count {
            return Err(FeatureError::Parse { line: 1, reason: format!("header declares {count} entries, found {}", vectors.len()) });
        }
        Ok(Self { dim, vectors, zero: vec![0.0; dim] })
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        Self::read_text(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_text(&mut w)?;
        w.flush()?;
        Ok(())
    }
}
