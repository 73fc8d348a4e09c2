use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};
use crate::potentials::RepresentationSequence;

use super::conll::TokenSequence;

/// Frozen token -> vector table with a mean-vector fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: HashMap<String, Vector>,
    pub unk: Vector,
}

impl EmbeddingTable {
    /// Builds the table; `unk` is the mean of all vectors.
    pub fn new(dim: usize, vectors: HashMap<String, Vector>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidArgument("embedding table is empty".into()));
        }
        let mut unk = vec![0.0; dim];
        let mut tokens: Vec<&String> = vectors.keys().collect();
        tokens.sort();
        for token in tokens {
            let v = &vectors[token];
            if v.dim() != dim {
                return Err(Error::InvalidArgument(format!(
                    "vector for {token:?} has dim {}, expected {dim}",
                    v.dim()
                )));
            }
            for (u, x) in unk.iter_mut().zip(&v.data) {
                *u += x;
            }
        }
        let n = vectors.len() as f64;
        unk.iter_mut().for_each(|u| *u /= n);
        Ok(EmbeddingTable {
            dim,
            vectors,
            unk: Vector::new(unk),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Exact match, then lowercased, then `unk`.
    pub fn lookup(&self, token: &str) -> &Vector {
        self.vectors
            .get(token)
            .or_else(|| self.vectors.get(&token.to_lowercase()))
            .unwrap_or(&self.unk)
    }
}

/// Text format: optional `count dim` header, then `token v1 ... vd` per line.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    let mut dim = expected_dim;
    let mut header_count = None;
    let mut vectors = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if idx == 0 && fields.len() == 2 {
            if let (Ok(count), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                if let Some(expected) = dim {
                    if expected != d {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("header dim {d} but expected {expected}"),
                        });
                    }
                }
                header_count = Some(count);
                dim = Some(d);
                continue;
            }
        }
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("non-numeric field {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let d = *dim.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {d} values, found {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                message: "non-finite value".into(),
            });
        }
        vectors.insert(fields[0].to_string(), Vector::new(values));
    }
    if let Some(count) = header_count {
        if count != vectors.len() {
            warn!(
                "embedding header announces {count} vectors but {} were read",
                vectors.len()
            );
        }
    }
    let dim = dim.ok_or_else(|| Error::InvalidArgument("embedding file has no vectors".into()))?;
    EmbeddingTable::new(dim, vectors)
}

pub fn load_embeddings(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    read_embeddings(BufReader::new(File::open(path)?), expected_dim)
}

/// Writes `count dim` then one line per token, in sorted token order.
pub fn write_embeddings(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{} {}", table.len(), table.dim)?;
    let mut tokens: Vec<&String> = table.vectors.keys().collect();
    tokens.sort();
    for token in tokens {
        write!(w, "{token}")?;
        for v in &table.vectors[token].data {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Looks every token up; boundary vectors are zero.
pub fn sequence_to_reps(
    seq: &TokenSequence,
    table: &EmbeddingTable,
) -> Result<RepresentationSequence> {
    let mut h = Matrix::zeros(seq.len(), table.dim);
    for (i, token) in seq.tokens.iter().enumerate() {
        h.row_mut(i).copy_from_slice(&table.lookup(token).data);
    }
    RepresentationSequence::new(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> Result<EmbeddingTable> {
        read_embeddings(text.as_bytes(), None)
    }

    #[test]
    fn mean_unk() {
        let t = table("a 1.0 2.0\nb 3.0 4.0").unwrap();
        assert_eq!(t.dim, 2);
        assert_eq!(t.unk.data, vec![2.0, 3.0]);
        assert_eq!(t.lookup("zzz").data, vec![2.0, 3.0]);
    }

    #[test]
    fn header_rules() {
        let t = table("2 2\na 1 2\nb 3 4\n").unwrap();
        assert_eq!(t.len(), 2);
        // count mismatch only warns
        let t = table("3 2\na 1 2\nb 3 4\n").unwrap();
        assert_eq!(t.len(), 2);
        assert!(read_embeddings("2 3\na 1 2\n".as_bytes(), None).is_err());
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(
            table("a 1 2\nb 3\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            table("a 1 x\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            read_embeddings("a 1 2\n".as_bytes(), Some(3)),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn lookup_cascade() {
        let t = table("the 1 0\ncat 0 1\n").unwrap();
        let seq = TokenSequence::new(vec!["The".into(), "cat".into(), "dog".into()], None).unwrap();
        let reps = sequence_to_reps(&seq, &t).unwrap();
        assert_eq!(reps.h.row(0), &[1.0, 0.0]);
        assert_eq!(reps.h.row(1), &[0.0, 1.0]);
        assert_eq!(reps.h.row(2), &[0.5, 0.5]);
        assert_eq!(reps.h_pre.data, vec![0.0, 0.0]);
        assert_eq!(reps.h_post.data, vec![0.0, 0.0]);
    }
}
