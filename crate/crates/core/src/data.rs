//! Query datasets: JSONL loading and writing, the preprocessing filter,
//! and a synthetic generator with a controllable fairness gap.
//!
//! One line per query:
//!
//! ```text
//! {"query_id":"q1","docs":[{"doc_id":"d1","score":0.83,"relevance":2,"group":1}, ...]}
//! ```
//!
//! `group` is 1 for protected documents and 0 otherwise. `score` is the
//! upstream ranker's output on any scale.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::fairness::GroupLabels;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryInstance {
    pub query_id: String,
    pub doc_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub relevance: Vec<u32>,
    pub groups: GroupLabels,
}

impl QueryInstance {
    pub fn new(
        query_id: impl Into<String>,
        doc_ids: Vec<String>,
        scores: Vec<f64>,
        relevance: Vec<u32>,
        groups: GroupLabels,
    ) -> Result<Self> {
        let query_id = query_id.into();
        let n = doc_ids.len();
        if scores.len() != n || relevance.len() != n || groups.len() != n {
            return Err(Error::LengthMismatch {
                line: 0,
                query_id,
                message: format!(
                    "{n} doc ids, {} scores, {} relevance labels, {} group labels",
                    scores.len(),
                    relevance.len(),
                    groups.len()
                ),
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(invalid_input(format!("query {query_id}: non-finite score")));
        }
        Ok(Self {
            query_id,
            doc_ids,
            scores,
            relevance,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// Documents sorted by score, highest first; ties keep input order.
    pub fn score_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        order
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: String,
    pub queries: Vec<QueryInstance>,
}

impl Dataset {
    pub fn new(split: impl Into<String>, queries: Vec<QueryInstance>) -> Result<Self> {
        let mut seen = HashSet::new();
        for q in &queries {
            if !seen.insert(q.query_id.as_str()) {
                return Err(Error::DuplicateQuery(q.query_id.clone()));
            }
        }
        Ok(Self {
            split: split.into(),
            queries,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocRecord {
    doc_id: String,
    score: f64,
    relevance: u32,
    group: u8,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRecord {
    query_id: String,
    docs: Vec<DocRecord>,
}

/// Parses JSONL from a reader. Blank lines are skipped.
pub fn read_jsonl(reader: impl BufRead, split: &str) -> Result<Dataset> {
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QueryRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut doc_ids = Vec::with_capacity(record.docs.len());
        let mut scores = Vec::with_capacity(record.docs.len());
        let mut relevance = Vec::with_capacity(record.docs.len());
        let mut groups = Vec::with_capacity(record.docs.len());
        for d in record.docs {
            if d.group > 1 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("doc {}: group must be 0 or 1, got {}", d.doc_id, d.group),
                });
            }
            doc_ids.push(d.doc_id);
            scores.push(d.score);
            relevance.push(d.relevance);
            groups.push(d.group == 1);
        }
        let query = QueryInstance::new(
            record.query_id,
            doc_ids,
            scores,
            relevance,
            GroupLabels::new(groups),
        )
        .map_err(|e| match e {
            Error::LengthMismatch {
                query_id, message, ..
            } => Error::LengthMismatch {
                line: line_no,
                query_id,
                message,
            },
            Error::InvalidInput(message) => Error::Parse {
                line: line_no,
                message,
            },
            other => other,
        })?;
        if !seen.insert(query.query_id.clone()) {
            return Err(Error::DuplicateQuery(query.query_id));
        }
        queries.push(query);
    }
    if queries.is_empty() {
        log::warn!("dataset {split:?} is empty");
    }
    Dataset::new(split, queries)
}

/// Loads a JSONL dataset; the split name is the file stem.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let split = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = std::fs::File::open(path)?;
    read_jsonl(BufReader::new(file), &split)
}

pub fn write_jsonl(dataset: &Dataset, mut writer: impl Write) -> Result<()> {
    for q in &dataset.queries {
        let record = QueryRecord {
            query_id: q.query_id.clone(),
            docs: (0..q.len())
                .map(|i| DocRecord {
                    doc_id: q.doc_ids[i].clone(),
                    score: q.scores[i],
                    relevance: q.relevance[i],
                    group: u8::from(q.groups.is_protected(i)),
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &record).map_err(std::io::Error::other)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_jsonl(dataset, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Minimum list length kept by [`preprocess`].
pub const MIN_DOCUMENTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    TooFewDocuments,
    SingleGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Removal {
    pub query_id: String,
    pub reason: RemovalReason,
}

/// Drops queries with fewer than three documents or with only one group.
pub fn preprocess(dataset: &Dataset) -> (Dataset, Vec<Removal>) {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for q in &dataset.queries {
        let reason = if q.len() < MIN_DOCUMENTS {
            Some(RemovalReason::TooFewDocuments)
        } else if !q.groups.has_both_groups() {
            Some(RemovalReason::SingleGroup)
        } else {
            None
        };
        match reason {
            Some(reason) => removed.push(Removal {
                query_id: q.query_id.clone(),
                reason,
            }),
            None => kept.push(q.clone()),
        }
    }
    (
        Dataset {
            split: dataset.split.clone(),
            queries: kept,
        },
        removed,
    )
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub split: String,
    pub n_queries: usize,
    pub min_docs: usize,
    pub max_docs: usize,
    /// Score penalty applied to protected documents, in `[0, 1)`.
    pub bias: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            split: "synthetic".into(),
            n_queries: 200,
            min_docs: 5,
            max_docs: 25,
            bias: 0.3,
            seed: 0,
        }
    }
}

/// Relevance bucket of a latent merit in `[0, 1)`: terciles map to 0, 1, 2.
pub fn merit_bucket(merit: f64) -> u32 {
    if merit < 1.0 / 3.0 {
        0
    } else if merit < 2.0 / 3.0 {
        1
    } else {
        2
    }
}

/// Generates queries whose protected documents are systematically
/// under-scored.
///
/// Per query: `n ~ U{min_docs..=max_docs}`; each document is protected with
/// probability 0.5 (redrawn until both groups occur); a latent merit
/// `m ~ U(0, 1)` sets relevance by tercile; the observed score is
/// `clip(m − bias·protected, 0, 1)`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.min_docs < MIN_DOCUMENTS || cfg.max_docs < cfg.min_docs {
        return Err(invalid_param(format!(
            "document range {}..={} must satisfy 3 <= min <= max",
            cfg.min_docs, cfg.max_docs
        )));
    }
    if !(0.0..1.0).contains(&cfg.bias) {
        return Err(invalid_param(format!("bias {} outside [0, 1)", cfg.bias)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut queries = Vec::with_capacity(cfg.n_queries);
    for q in 0..cfg.n_queries {
        let n = rng.random_range(cfg.min_docs..=cfg.max_docs);
        let groups = loop {
            let g: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let labels = GroupLabels::new(g);
            if labels.has_both_groups() {
                break labels;
            }
        };
        let mut scores = Vec::with_capacity(n);
        let mut relevance = Vec::with_capacity(n);
        for i in 0..n {
            let merit: f64 = rng.random();
            let penalty = if groups.is_protected(i) {
                cfg.bias
            } else {
                0.0
            };
            scores.push((merit - penalty).clamp(0.0, 1.0));
            relevance.push(merit_bucket(merit));
        }
        let query_id = format!("{}-{q:04}", cfg.split);
        let doc_ids = (0..n).map(|i| format!("{query_id}-d{i:02}")).collect();
        queries.push(QueryInstance::new(
            query_id, doc_ids, scores, relevance, groups,
        )?);
    }
    Dataset::new(cfg.split.clone(), queries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::foe_abs;
    use crate::ot::{DiscountVector, Permutation};

    fn query(id: &str, groups: &[bool]) -> QueryInstance {
        let n = groups.len();
        QueryInstance::new(
            id,
            (0..n).map(|i| format!("d{i}")).collect(),
            (0..n).map(|i| i as f64).collect(),
            vec![1; n],
            GroupLabels::new(groups.to_vec()),
        )
        .unwrap()
    }

    #[test]
    fn empty_input_gives_empty_dataset() {
        let ds = read_jsonl(&b""[..], "empty").unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "{\"query_id\":\"a\",\"docs\":[]}\n{\"query_id\":\"b\"}\n";
        match read_jsonl(text.as_bytes(), "x") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("missing field"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = "not json\n";
        assert!(matches!(
            read_jsonl(text.as_bytes(), "x"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_bad_group_and_duplicates() {
        let text =
            r#"{"query_id":"a","docs":[{"doc_id":"d","score":1.0,"relevance":0,"group":2}]}"#;
        assert!(matches!(
            read_jsonl(text.as_bytes(), "x"),
            Err(Error::Parse { .. })
        ));
        let line =
            r#"{"query_id":"a","docs":[{"doc_id":"d","score":1.0,"relevance":0,"group":1}]}"#;
        let text = format!("{line}\n{line}\n");
        assert!(matches!(
            read_jsonl(text.as_bytes(), "x"),
            Err(Error::DuplicateQuery(_))
        ));
    }

    #[test]
    fn length_mismatch_is_reported() {
        let err = QueryInstance::new(
            "q",
            vec!["a".into(), "b".into()],
            vec![1.0],
            vec![0, 0],
            GroupLabels::new(vec![true, false]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
    }

    #[test]
    fn single_document_loads_then_is_dropped() {
        let text =
            r#"{"query_id":"solo","docs":[{"doc_id":"d","score":0.5,"relevance":1,"group":1}]}"#;
        let ds = read_jsonl(text.as_bytes(), "x").unwrap();
        assert_eq!(ds.len(), 1);
        let (kept, removed) = preprocess(&ds);
        assert!(kept.is_empty());
        assert_eq!(removed[0].reason, RemovalReason::TooFewDocuments);
    }

    #[test]
    fn preprocess_rules() {
        let ds = Dataset::new(
            "t",
            vec![
                query("all_protected", &[true, true, true, true]),
                query("two_docs", &[true, false]),
                query("ok", &[true, false, false]),
            ],
        )
        .unwrap();
        let (kept, removed) = preprocess(&ds);
        assert_eq!(kept.queries.len(), 1);
        assert_eq!(kept.queries[0].query_id, "ok");
        assert_eq!(
            removed,
            vec![
                Removal {
                    query_id: "all_protected".into(),
                    reason: RemovalReason::SingleGroup
                },
                Removal {
                    query_id: "two_docs".into(),
                    reason: RemovalReason::TooFewDocuments
                },
            ]
        );
        let (again, removed_again) = preprocess(&kept);
        assert_eq!(again, kept);
        assert!(removed_again.is_empty());
    }

    #[test]
    fn synth_is_seeded_and_valid() {
        let cfg = SynthConfig {
            n_queries: 30,
            seed: 7,
            ..Default::default()
        };
        let a = synth_generate(&cfg).unwrap();
        assert_eq!(a, synth_generate(&cfg).unwrap());
        for q in &a.queries {
            assert!((5..=25).contains(&q.len()));
            assert!(q.groups.has_both_groups());
            assert!(q.scores.iter().all(|s| (0.0..=1.0).contains(s)));
        }
        let (kept, removed) = preprocess(&a);
        assert!(removed.is_empty());
        assert_eq!(kept.len(), 30);
    }

    #[test]
    fn synth_rejects_bad_parameters() {
        let bad_range = SynthConfig {
            min_docs: 2,
            ..Default::default()
        };
        assert!(synth_generate(&bad_range).is_err());
        let bad_bias = SynthConfig {
            bias: 1.0,
            ..Default::default()
        };
        assert!(synth_generate(&bad_bias).is_err());
    }

    fn mean_initial_foe(ds: &Dataset) -> f64 {
        ds.queries
            .iter()
            .map(|q| {
                let p = Permutation::from_ranking(&q.score_order())
                    .unwrap()
                    .to_matrix();
                foe_abs(&p, &q.groups, &DiscountVector::new(q.len())).unwrap()
            })
            .sum::<f64>()
            / ds.len() as f64
    }

    fn mean_signed_gap(ds: &Dataset) -> f64 {
        ds.queries
            .iter()
            .map(|q| {
                let p = Permutation::from_ranking(&q.score_order())
                    .unwrap()
                    .to_matrix();
                crate::fairness::exposure_gap(&p, &q.groups, &DiscountVector::new(q.len())).unwrap()
            })
            .sum::<f64>()
            / ds.len() as f64
    }

    #[test]
    fn bias_creates_exposure_gap() {
        let unbiased = synth_generate(&SynthConfig {
            n_queries: 2000,
            bias: 0.0,
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let biased = synth_generate(&SynthConfig {
            n_queries: 200,
            bias: 0.3,
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        // Symmetric groups: the signed gap averages out.
        assert!(mean_signed_gap(&unbiased).abs() < 0.01);
        assert!(mean_initial_foe(&biased) > mean_initial_foe(&unbiased));
        assert!(mean_signed_gap(&biased) < -0.05);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = synth_generate(&SynthConfig {
            n_queries: 5,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_jsonl(&ds, &mut buf).unwrap();
        let back = read_jsonl(&buf[..], &ds.split).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.queries.iter().zip(&ds.queries) {
            for (x, y) in a.scores.iter().zip(&b.scores) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
