use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::SelectorError;

pub const TRIGRAM_DIM: u32 = 4096;

/// Non-zero coordinates, sorted by dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn from_dense(v: &[f64]) -> Self {
        SparseVector {
            entries: v
                .iter()
                .enumerate()
                .filter(|(_, x)| **x != 0.0)
                .map(|(i, x)| (i as u32, *x))
                .collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, x)| x * x).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.entries.len() && j < b.entries.len() {
        let (da, xa) = a.entries[i];
        let (db, xb) = b.entries[j];
        match da.cmp(&db) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += xa * xb;
                i += 1;
                j += 1;
            }
        }
    }
    dot / (na * nb)
}

pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<SparseVector>, SelectorError>;

    fn embed_one(&self, text: &str) -> Result<SparseVector, SelectorError> {
        self.embed(&[text])?.pop().ok_or_else(|| SelectorError::Embedding {
            index: None,
            message: "embedder returned no vector".into(),
        })
    }

    /// Local embedders are cheap per call and safe to fan out per item.
    fn is_local(&self) -> bool {
        false
    }
}

/// Hashed character-trigram frequency vectors over lowercased text.
#[derive(Debug, Clone, Copy)]
pub struct TrigramEmbedder {
    pub dim: u32,
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        TrigramEmbedder { dim: TRIGRAM_DIM }
    }
}

impl TrigramEmbedder {
    pub fn vector(&self, text: &str) -> SparseVector {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        let mut add = |gram: &[char]| {
            let s: String = gram.iter().collect();
            *counts.entry((fnv1a(s.as_bytes()) % u64::from(self.dim)) as u32).or_default() += 1.0;
        };
        if chars.len() < 3 {
            if !chars.is_empty() {
                add(&chars);
            }
        } else {
            chars.windows(3).for_each(&mut add);
        }
        SparseVector {
            entries: counts.into_iter().collect(),
        }
    }
}

impl Embedder for TrigramEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<SparseVector>, SelectorError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }

    fn is_local(&self) -> bool {
        true
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

/// Client for an embeddings service speaking the common
/// `{"model", "input": [...]}` -> `{"data": [{"index", "embedding"}]}` shape.
pub struct RemoteEmbedder {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub batch_size: usize,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    index: usize,
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Result<Self, SelectorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| SelectorError::Embedding {
                index: None,
                message: e.to_string(),
            })?;
        Ok(RemoteEmbedder {
            url: url.into(),
            model: model.into(),
            api_key,
            batch_size: 64,
            client,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<SparseVector>, SelectorError> {
        let fail = |index: Option<usize>, message: String| SelectorError::Embedding { index, message };
        let mut out = Vec::with_capacity(texts.len());
        let mut dim = None;
        for (b, chunk) in texts.chunks(self.batch_size.max(1)).enumerate() {
            let offset = b * self.batch_size.max(1);
            let mut req = self.client.post(&self.url).json(&EmbedRequest {
                model: &self.model,
                input: chunk,
            });
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req
                .send()
                .and_then(|r| r.error_for_status())
                .map_err(|e| fail(Some(offset), e.to_string()))?;
            let mut body: EmbedResponse = resp.json().map_err(|e| fail(Some(offset), e.to_string()))?;
            if body.data.len() != chunk.len() {
                return Err(fail(
                    Some(offset),
                    format!("expected {} vectors, got {}", chunk.len(), body.data.len()),
                ));
            }
            body.data.sort_by_key(|d| d.index);
            for (n, item) in body.data.into_iter().enumerate() {
                let d = *dim.get_or_insert(item.embedding.len());
                if item.embedding.len() != d {
                    return Err(fail(Some(offset + n), format!("vector of length {} (expected {d})", item.embedding.len())));
                }
                out.push(SparseVector::from_dense(&item.embedding));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_text_has_unit_self_similarity() {
        let e = TrigramEmbedder::default();
        let v = e.vector("How many singers do we have?");
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_characters_are_orthogonal() {
        let e = TrigramEmbedder::default();
        // one trigram each: "abc" and "xyz"
        let a = e.vector("abc");
        let b = e.vector("XYZ");
        assert_eq!(a.entries.len(), 1);
        assert_eq!(b.entries.len(), 1);
        assert_eq!(a.entries[0].1, 1.0);
        assert_ne!(a.entries[0].0, b.entries[0].0);
        assert_eq!(cosine(&a, &b), 0.0);
    }

    #[test]
    fn short_and_empty_inputs() {
        let e = TrigramEmbedder::default();
        assert!(e.vector("").entries.is_empty());
        assert_eq!(e.vector("ab").entries.len(), 1);
        assert_eq!(cosine(&e.vector(""), &e.vector("abc")), 0.0);
    }

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }
}
