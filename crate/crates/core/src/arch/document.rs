use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{validate, ArchError, ArchGenome, Profile, ValidationReport};

/// Schema tag written into every genome document.
pub const SCHEMA: &str = "lidarnas-genome/1";

#[derive(Serialize)]
struct DocumentOut<'a> {
    schema: &'a str,
    #[serde(flatten)]
    genome: &'a ArchGenome,
}

#[derive(Deserialize)]
struct DocumentIn {
    schema: Option<String>,
    #[serde(flatten)]
    genome: ArchGenome,
}

/// Pretty JSON genome document.
pub fn serialize(g: &ArchGenome) -> String {
    serde_json::to_string_pretty(&DocumentOut { schema: SCHEMA, genome: g }).expect("genome serializes")
}

/// Parses a genome document and validates it under the framework profile.
/// Violations are reported alongside the genome; parsing only fails on malformed input.
pub fn deserialize(text: &str) -> Result<(ArchGenome, ValidationReport), ArchError> {
    let doc: DocumentIn = serde_json::from_str(text).map_err(|e| ArchError::MalformedDocument(e.to_string()))?;
    if let Some(schema) = &doc.schema {
        if schema != SCHEMA {
            return Err(ArchError::MalformedDocument(format!("unsupported schema {schema:?}")));
        }
    }
    let report = validate(&doc.genome, Profile::Framework);
    Ok((doc.genome, report))
}

/// Hex SHA-256 of the canonical genome form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GenomeHash(pub String);

impl std::fmt::Display for GenomeHash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Content hash that ignores branch ids and within-stage branch order.
pub fn genome_hash(g: &ArchGenome) -> GenomeHash {
    let text = canonical(g).to_string();
    GenomeHash(hex::encode(Sha256::digest(text.as_bytes())))
}

/// Id-free form: branches sorted by (view, format, F, descriptor), inputs as sorted canonical indices.
fn canonical(g: &ArchGenome) -> Value {
    let mut prev_index: Vec<(String, usize)> = Vec::new();
    let mut stages = Vec::with_capacity(g.stages.len());
    let mut head = Value::Null;
    for (s, stage) in g.stages.iter().enumerate() {
        let mut rows: Vec<(String, Value)> = stage
            .iter()
            .map(|b| {
                let mut inputs: Vec<Value> = b
                    .inputs
                    .iter()
                    .map(|id| match prev_index.iter().find(|(p, _)| p == id) {
                        Some((_, i)) => json!(i),
                        None => json!(id),
                    })
                    .collect();
                inputs.sort_by_key(|v| v.to_string());
                let desc = json!({
                    "view": b.view,
                    "format": b.format,
                    "channels": b.layer.channels,
                    "layer": b.layer,
                    "resolution_m": b.resolution_m,
                    "resolution_axes": b.resolution_axes,
                    "merge": b.merge,
                    "inputs": inputs,
                });
                let key = format!("{:?}|{:?}|{:020.9}|{}", b.view, b.format, b.layer.channels, desc);
                (b.id.clone(), json!({ "key": key, "desc": desc }))
            })
            .collect();
        rows.sort_by(|a, b| a.1["key"].as_str().cmp(&b.1["key"].as_str()));
        prev_index = rows.iter().enumerate().map(|(i, (id, _))| (id.clone(), i)).collect();
        if s + 1 == g.stages.len() {
            head = match prev_index.iter().find(|(id, _)| *id == g.head_attach) {
                Some((_, i)) => json!(i),
                None => json!(g.head_attach),
            };
        }
        stages.push(Value::Array(rows.into_iter().map(|(_, v)| v["desc"].clone()).collect()));
    }
    json!({ "stages": stages, "foreground_seg": g.foreground_seg, "head_attach": head })
}
