//! Versioned JSON model document.
//!
//! ```text
//! { "format_version": 1, "family": "d-quadrilinear", "L": 9, "d_h": 100,
//!   "d_t": 100, "d_r": 128, "mlp_hidden": 128,
//!   "labels": ["B-LOC", ...], "scheme": "BIOES",
//!   "params": [ { "name": "label_embeddings", "rows": 10, "cols": 100,
//!                 "data": [...] }, ... ] }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading a saved
//! model reproduces it bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::potentials::{Dims, FamilyTag, ModelParams, ParamField};

use super::scheme::{LabelVocab, Scheme};

pub const FORMAT_VERSION: u32 = 1;

pub fn write_model<W: Write>(
    mut writer: W,
    params: &ModelParams,
    vocab: &LabelVocab,
) -> Result<()> {
    if vocab.len() != params.dims.num_labels {
        return Err(Error::DimensionMismatch {
            context: "label vocabulary",
            expected: params.dims.num_labels,
            found: vocab.len(),
        });
    }
    params.validate()?;
    let fields: Vec<Value> = params
        .fields()
        .map(|(field, data)| {
            let shape = params.dims.shape(params.family, field);
            let mut entry = json!({
                "name": field.name(),
                "rows": shape.rows,
                "cols": shape.cols,
            });
            if let Some(depth) = shape.depth {
                entry["depth"] = json!(depth);
            }
            entry["data"] = json!(data);
            entry
        })
        .collect();
    let doc = json!({
        "format_version": FORMAT_VERSION,
        "family": params.family.name(),
        "L": params.dims.num_labels,
        "d_h": params.dims.d_h,
        "d_t": params.dims.d_t,
        "d_r": params.dims.d_r,
        "mlp_hidden": params.dims.mlp_hidden,
        "labels": vocab.labels(),
        "scheme": vocab.scheme.name(),
        "params": fields,
    });
    serde_json::to_writer(&mut writer, &doc).map_err(|e| Error::ModelFormat(e.to_string()))?;
    writeln!(writer)?;
    writer.flush()?;
    Ok(())
}

pub fn save_model(path: impl AsRef<Path>, params: &ModelParams, vocab: &LabelVocab) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), params, vocab)
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::MissingField(key.to_string()))
}

fn get_usize(obj: &Map<String, Value>, key: &str) -> Result<usize> {
    get(obj, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| Error::ModelFormat(format!("{key} must be a non-negative integer")))
}

fn get_str<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str> {
    get(obj, key)?
        .as_str()
        .ok_or_else(|| Error::ModelFormat(format!("{key} must be a string")))
}

pub fn read_model<R: Read>(reader: R) -> Result<(ModelParams, LabelVocab)> {
    let doc: Value =
        serde_json::from_reader(reader).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::ModelFormat("top level must be an object".into()))?;

    let version = get_usize(obj, "format_version")? as u32;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let family: FamilyTag = get_str(obj, "family")?.parse()?;
    let dims = Dims {
        num_labels: get_usize(obj, "L")?,
        d_h: get_usize(obj, "d_h")?,
        d_t: get_usize(obj, "d_t")?,
        d_r: get_usize(obj, "d_r")?,
        mlp_hidden: get_usize(obj, "mlp_hidden")?,
    };
    let labels = get(obj, "labels")?
        .as_array()
        .ok_or_else(|| Error::ModelFormat("labels must be an array".into()))?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::ModelFormat("labels must be strings".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let scheme: Scheme = get_str(obj, "scheme")?.parse()?;
    let vocab = LabelVocab::new(labels, scheme)?;
    if vocab.len() != dims.num_labels {
        return Err(Error::ModelFormat(format!(
            "L = {} but {} labels listed",
            dims.num_labels,
            vocab.len()
        )));
    }

    let entries = get(obj, "params")?
        .as_array()
        .ok_or_else(|| Error::ModelFormat("params must be an array".into()))?;
    let mut params = ModelParams::zeros(family, dims);
    let mut seen = Vec::new();
    for entry in entries {
        let entry = entry
            .as_object()
            .ok_or_else(|| Error::ModelFormat("param entry must be an object".into()))?;
        let name = get_str(entry, "name")?;
        let field = ParamField::from_name(name)
            .ok_or_else(|| Error::ModelFormat(format!("unknown parameter {name:?}")))?;
        let shape = dims.shape(family, field);
        let rows = get_usize(entry, "rows")?;
        let cols = get_usize(entry, "cols")?;
        let depth = match entry.get("depth") {
            Some(v) => Some(
                v.as_u64()
                    .ok_or_else(|| Error::ModelFormat("depth must be an integer".into()))?
                    as usize,
            ),
            None => None,
        };
        if (rows, cols, depth) != (shape.rows, shape.cols, shape.depth) {
            return Err(Error::ModelFormat(format!(
                "{name}: shape ({rows}, {cols}, {depth:?}) does not match dims"
            )));
        }
        let data = get(entry, "data")?
            .as_array()
            .ok_or_else(|| Error::ModelFormat(format!("{name}: data must be an array")))?
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| Error::ModelFormat(format!("{name}: non-numeric value")))
            })
            .collect::<Result<Vec<f64>>>()?;
        params.set_field(field, data)?;
        seen.push(field);
    }
    for &field in family.fields() {
        if !seen.contains(&field) {
            return Err(Error::MissingField(field.name().to_string()));
        }
    }
    params.validate()?;
    Ok((params, vocab))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelParams, LabelVocab)> {
    read_model(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngSeed;

    fn vocab(l: usize) -> LabelVocab {
        LabelVocab::new((0..l).map(|i| format!("L{i}")).collect(), Scheme::Plain).unwrap()
    }

    fn bits(p: &ModelParams) -> Vec<(ParamField, Vec<u64>)> {
        p.fields()
            .map(|(f, d)| (f, d.iter().map(|v| v.to_bits()).collect()))
            .collect()
    }

    #[test]
    fn vanilla_round_trip_is_bit_exact() {
        let p = ModelParams::init(FamilyTag::VanillaCrf, Dims::new(3, 4, 2, 2), RngSeed(8));
        let mut buf = Vec::new();
        write_model(&mut buf, &p, &vocab(3)).unwrap();
        let (q, v) = read_model(buf.as_slice()).unwrap();
        assert_eq!(bits(&p), bits(&q));
        assert_eq!(q.dims, p.dims);
        assert_eq!(v, vocab(3));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let p = ModelParams::init(FamilyTag::DTrilinear, Dims::new(3, 4, 2, 2), RngSeed(8));
        let mut buf = Vec::new();
        write_model(&mut buf, &p, &vocab(3)).unwrap();
        buf.truncate(buf.len() / 2);
        assert!(matches!(
            read_model(buf.as_slice()),
            Err(Error::ModelFormat(_))
        ));
    }

    #[test]
    fn unknown_family_and_version() {
        let p = ModelParams::init(FamilyTag::Softmax, Dims::new(2, 2, 2, 2), RngSeed(1));
        let mut buf = Vec::new();
        write_model(&mut buf, &p, &vocab(2)).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let bad = text.replace("\"softmax\"", "\"hexalinear\"");
        let err = read_model(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unknown family"));

        let bad = text.replace("\"format_version\":1", "\"format_version\":2");
        assert!(matches!(
            read_model(bad.as_bytes()),
            Err(Error::VersionMismatch { found: 2, .. })
        ));

        let bad = text.replace("\"d_t\"", "\"d_tt\"");
        match read_model(bad.as_bytes()) {
            Err(Error::MissingField(f)) => assert_eq!(f, "d_t"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_parameter_field_is_named() {
        let p = ModelParams::init(FamilyTag::VanillaCrf, Dims::new(2, 2, 2, 2), RngSeed(1));
        let mut buf = Vec::new();
        write_model(&mut buf, &p, &vocab(2)).unwrap();
        let mut doc: Value = serde_json::from_slice(&buf).unwrap();
        doc["params"].as_array_mut().unwrap().remove(0);
        let text = doc.to_string();
        match read_model(text.as_bytes()) {
            Err(Error::MissingField(f)) => assert_eq!(f, "transition_table"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
