use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One sentence: tokens and, for labeled data, one label per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub labels: Option<Vec<String>>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>, labels: Option<Vec<String>>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("empty token sequence".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != tokens.len() {
                return Err(Error::DimensionMismatch {
                    context: "labels",
                    expected: tokens.len(),
                    found: labels.len(),
                });
            }
        }
        Ok(TokenSequence { tokens, labels })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Reads blank-line separated sentences. The first column is the token,
/// the last one the label; anything in between is ignored.
pub fn read_conll<R: BufRead>(reader: R) -> Result<Vec<TokenSequence>> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    let mut columns = 0usize;

    let mut flush = |tokens: &mut Vec<String>, labels: &mut Vec<String>, columns: &mut usize| {
        if !tokens.is_empty() {
            let labels = if *columns > 1 {
                Some(std::mem::take(labels))
            } else {
                None
            };
            out.push(TokenSequence {
                tokens: std::mem::take(tokens),
                labels,
            });
        }
        labels.clear();
        *columns = 0;
    };

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut tokens, &mut labels, &mut columns);
            continue;
        }
        if trimmed.starts_with("-DOCSTART-") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.is_empty() {
            columns = fields.len();
        } else if fields.len() != columns {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} columns, found {}", columns, fields.len()),
            });
        }
        tokens.push(fields[0].to_string());
        if fields.len() > 1 {
            labels.push(fields[fields.len() - 1].to_string());
        }
    }
    flush(&mut tokens, &mut labels, &mut columns);
    Ok(out)
}

pub fn read_conll_path(path: impl AsRef<Path>) -> Result<Vec<TokenSequence>> {
    read_conll(BufReader::new(File::open(path)?))
}

/// `token SPACE label NEWLINE` per token (token only when unlabeled), one
/// blank line after each sentence.
pub fn write_conll<W: Write>(mut writer: W, sequences: &[TokenSequence]) -> Result<()> {
    for seq in sequences {
        for (i, token) in seq.tokens.iter().enumerate() {
            match &seq.labels {
                Some(labels) => writeln!(writer, "{} {}", token, labels[i])?,
                None => writeln!(writer, "{}", token)?,
            }
        }
        writeln!(writer)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_conll_path(path: impl AsRef<Path>, sequences: &[TokenSequence]) -> Result<()> {
    write_conll(BufWriter::new(File::create(path)?), sequences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(s: &str) -> Result<Vec<TokenSequence>> {
        read_conll(s.as_bytes())
    }

    #[test]
    fn minimal_file() {
        let seqs = read("John B-PER\n\n").unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].tokens, vec!["John"]);
        assert_eq!(seqs[0].labels, Some(vec!["B-PER".to_string()]));
    }

    #[test]
    fn two_sentences_and_docstart() {
        let text =
            "-DOCSTART- -X- O O\n\nEU NNP B-NP B-ORG\nrejects VBZ B-VP O\n\nPeter NNP B-NP B-PER\n";
        let seqs = read(text).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].labels.as_ref().unwrap(), &["B-ORG", "O"]);
        assert_eq!(seqs[1].tokens, vec!["Peter"]);
    }

    #[test]
    fn single_column_is_unlabeled() {
        let seqs = read("word\nother\n").unwrap();
        assert_eq!(seqs[0].tokens.len(), 2);
        assert!(seqs[0].labels.is_none());
    }

    #[test]
    fn inconsistent_columns_report_line() {
        let err = read("a B-X\nb\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn empty_file() {
        assert!(read("").unwrap().is_empty());
        assert!(read("\n\n\n").unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(
            sents in prop::collection::vec(
                prop::collection::vec(("[a-zA-Z0-9.,]{1,8}", "(O|[BIES]-[A-Z]{1,4})"), 1..8),
                0..6,
            )
        ) {
            let seqs: Vec<TokenSequence> = sents
                .into_iter()
                .map(|pairs| {
                    let (tokens, labels): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
                    TokenSequence::new(tokens, Some(labels)).unwrap()
                })
                .collect();
            let mut buf = Vec::new();
            write_conll(&mut buf, &seqs).unwrap();
            prop_assert_eq!(read_conll(buf.as_slice()).unwrap(), seqs);
        }
    }
}
