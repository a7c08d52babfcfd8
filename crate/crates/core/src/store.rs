//! Embedding, qrels, and run-file storage.
//!
//! The EMB1 binary format holds an id-indexed n×p matrix of f32 values:
//! magic bytes `EMB1`, little-endian `u32` row count, `u32` dimension,
//! then one record per row of `[u16 id_len][id bytes, UTF-8][p × f32]`
//! with no padding. Qrels and runs use the standard TREC text layouts.
//!
//! Loaded matrices and qrels are immutable after construction and safe to
//! share across threads.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const EMB1_MAGIC: [u8; 4] = *b"EMB1";

/// Id-indexed n×p matrix of 32-bit floats (queries, documents, or
/// synthetic documents). Every value is finite and every id is unique.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from per-row vectors, validating all invariants.
    pub fn from_rows(ids: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::invalid(format!(
                "{} ids for {} rows",
                ids.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut data = Vec::with_capacity(ids.len() * dim);
        for (row_idx, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
            for (col, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: row_idx, col });
                }
            }
        }
        Self::from_flat(ids, dim, data)
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_flat(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::invalid(format!(
                "buffer holds {} values, expected {}×{}",
                data.len(),
                ids.len(),
                dim
            )));
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: i / dim,
                    col: i % dim,
                });
            }
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (row, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), row).is_some() {
                return Err(Error::DuplicateId {
                    id: id.clone(),
                    row,
                });
            }
        }
        Ok(Self {
            ids,
            index,
            dim,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    /// Row index for an id, if present.
    pub fn find(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Row values for an id, if present.
    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.find(id).map(|r| self.row(r))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), self.row(i)))
    }
}

/// Cursor over an in-memory EMB1 payload. Any read past the end reports
/// the minimum total byte count the current read would have required.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated {
            expected: u64::MAX,
            actual: self.buf.len() as u64,
        })?;
        if end > self.buf.len() {
            return Err(Error::Truncated {
                expected: end as u64,
                actual: self.buf.len() as u64,
            });
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16_le(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32_le(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Loads an EMB1 file. Read-only and repeatable: two loads of the same
/// file compare equal.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { buf: &buf, pos: 0 };

    let magic = cur.take(4)?;
    if magic != EMB1_MAGIC {
        return Err(Error::BadMagic {
            found: [magic[0], magic[1], magic[2], magic[3]],
        });
    }
    let n = cur.u32_le()? as usize;
    let dim = cur.u32_le()? as usize;
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }

    let mut ids = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    for row in 0..n {
        let id_len = cur.u16_le()? as usize;
        let id_bytes = cur.take(id_len)?;
        let id = std::str::from_utf8(id_bytes)
            .map_err(|_| Error::invalid(format!("row {row}: id is not valid UTF-8")))?
            .to_owned();
        ids.push(id);
        let values = cur.take(dim * 4)?;
        for (col, chunk) in values.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            data.push(v);
        }
    }
    if cur.pos != buf.len() {
        return Err(Error::invalid(format!(
            "{} trailing bytes after the last record",
            buf.len() - cur.pos
        )));
    }
    EmbeddingMatrix::from_flat(ids, dim, data)
}

/// Writes a matrix in EMB1 format. A save→load roundtrip is bit-exact on
/// all values and ids.
pub fn save_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = u32::try_from(matrix.len())
        .map_err(|_| Error::invalid("row count exceeds u32 range"))?;
    let dim = u32::try_from(matrix.dim())
        .map_err(|_| Error::invalid("dimension exceeds u32 range"))?;

    let mut buf = Vec::with_capacity(12 + matrix.len() * (2 + matrix.dim() * 4));
    buf.extend_from_slice(&EMB1_MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&dim.to_le_bytes());
    for (id, row) in matrix.iter() {
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::invalid(format!("id {id:?} longer than 65535 bytes")))?;
        buf.extend_from_slice(&id_len.to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// TREC relevance judgments: (query_id, doc_id) → grade. Unjudged pairs
/// are implicitly grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    by_query: HashMap<String, HashMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a judgment; later inserts for the same pair overwrite.
    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.by_query
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade);
    }

    /// Grade for a pair; 0 when unjudged.
    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.by_query
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    /// All judged (doc_id, grade) pairs for a query.
    pub fn judged(&self, query_id: &str) -> impl Iterator<Item = (&str, u32)> {
        self.by_query
            .get(query_id)
            .into_iter()
            .flat_map(|m| m.iter().map(|(d, g)| (d.as_str(), *g)))
    }

    /// Number of docs with grade ≥ 1 for a query.
    pub fn relevant_count(&self, query_id: &str) -> usize {
        self.judged(query_id).filter(|&(_, g)| g >= 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.by_query.is_empty()
    }

    pub fn len(&self) -> usize {
        self.by_query.values().map(HashMap::len).sum()
    }
}

/// Parses a TREC qrels file: whitespace-separated `qid 0 docid grade`
/// lines. Duplicate pairs are last-wins; blank lines are skipped.
pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qrels(&text)
}

pub fn parse_qrels(text: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let grade: i64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad grade {:?}", fields[3])))?;
        if grade < 0 {
            return Err(Error::parse(line_no, format!("negative grade {grade}")));
        }
        qrels.insert(fields[0], fields[2], grade as u32);
    }
    Ok(qrels)
}

/// One scored document in a ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
    /// 1-based rank.
    pub rank: usize,
}

/// Ranked retrieval output for a single query.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRanking {
    pub query_id: String,
    pub entries: Vec<RunEntry>,
    pub tag: String,
}

impl RunRanking {
    /// Builds a ranking, validating that ranks are 1..len with no gaps,
    /// scores are non-increasing, and doc ids are distinct.
    pub fn new(query_id: impl Into<String>, entries: Vec<RunEntry>, tag: impl Into<String>) -> Result<Self> {
        let query_id = query_id.into();
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(Error::invalid(format!(
                    "query {query_id}: rank {} at position {}, expected {}",
                    e.rank,
                    i,
                    i + 1
                )));
            }
            if !e.score.is_finite() {
                return Err(Error::invalid(format!(
                    "query {query_id}: non-finite score at rank {}",
                    e.rank
                )));
            }
            if i > 0 && e.score > entries[i - 1].score {
                return Err(Error::invalid(format!(
                    "query {query_id}: score increases at rank {}",
                    e.rank
                )));
            }
            if !seen.insert(e.doc_id.as_str()) {
                return Err(Error::invalid(format!(
                    "query {query_id}: duplicate doc id {:?}",
                    e.doc_id
                )));
            }
        }
        Ok(Self {
            query_id,
            entries,
            tag: tag.into(),
        })
    }

    /// Doc ids in rank order.
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }
}

/// Writes rankings as TREC run lines `qid Q0 docid rank score tag`,
/// scores with 6 decimal places, queries in input order.
pub fn write_run(path: impl AsRef<Path>, rankings: &[RunRanking], tag: &str) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for ranking in rankings {
        for e in &ranking.entries {
            writeln!(
                w,
                "{} Q0 {} {} {:.6} {}",
                ranking.query_id, e.doc_id, e.rank, e.score, tag
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a TREC run file. Queries are ordered by first appearance;
/// entries are sorted by rank and validated against the RunRanking
/// invariants.
pub fn load_run(path: impl AsRef<Path>) -> Result<Vec<RunRanking>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text)
}

pub fn parse_run(text: &str) -> Result<Vec<RunRanking>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_query: HashMap<String, (Vec<RunEntry>, String)> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                line_no,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let rank: usize = fields[3]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad rank {:?}", fields[3])))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad score {:?}", fields[4])))?;
        let qid = fields[0];
        if !by_query.contains_key(qid) {
            order.push(qid.to_owned());
        }
        let (entries, _tag) = by_query
            .entry(qid.to_owned())
            .or_insert_with(|| (Vec::new(), fields[5].to_owned()));
        entries.push(RunEntry {
            doc_id: fields[2].to_owned(),
            score,
            rank,
        });
    }
    let mut out = Vec::with_capacity(order.len());
    for qid in order {
        let (mut entries, tag) = by_query.remove(&qid).unwrap();
        entries.sort_by_key(|e| e.rank);
        out.push(RunRanking::new(qid, entries, tag)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("rdime-store-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn roundtrip_small_matrix() {
        let m = EmbeddingMatrix::from_rows(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
        )
        .unwrap();
        let path = tmp("small.emb");
        save_embeddings(&m, &path).unwrap();
        let back = load_embeddings(&path).unwrap();
        assert_eq!(m, back);
        assert_eq!(back.get("a").unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(back.dim(), 3);
    }

    #[test]
    fn roundtrip_preserves_negative_zero() {
        let m = EmbeddingMatrix::from_rows(vec!["x".into()], vec![vec![-0.0_f32]]).unwrap();
        let path = tmp("negzero.emb");
        save_embeddings(&m, &path).unwrap();
        let back = load_embeddings(&path).unwrap();
        assert_eq!(back.row(0)[0].to_bits(), (-0.0_f32).to_bits());
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let m = EmbeddingMatrix::from_rows(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
        )
        .unwrap();
        let path = tmp("trunc.emb");
        save_embeddings(&m, &path).unwrap();
        let full = fs::read(&path).unwrap();
        // Drop the last float.
        fs::write(&path, &full[..full.len() - 4]).unwrap();
        match load_embeddings(&path) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, full.len() as u64);
                assert_eq!(actual, (full.len() - 4) as u64);
            }
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_distinct() {
        let path = tmp("magic.emb");
        fs::write(&path, b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            load_embeddings(&path),
            Err(Error::BadMagic { found }) if &found == b"NOPE"
        ));
    }

    #[test]
    fn nan_reports_row_and_col() {
        let m = EmbeddingMatrix::from_rows(
            vec!["a".into()],
            vec![vec![1.0, 2.0, 3.0]],
        )
        .unwrap();
        let path = tmp("nan.emb");
        save_embeddings(&m, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        // Row 0, col 1 starts after magic(4)+n(4)+p(4)+id_len(2)+id(1)+col0(4).
        let off = 4 + 4 + 4 + 2 + 1 + 4;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_embeddings(&path),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = EmbeddingMatrix::from_rows(
            vec!["a".into(), "a".into()],
            vec![vec![1.0], vec![2.0]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId { row: 1, .. }));
    }

    #[test]
    fn qrels_parse_and_overwrite() {
        let q = parse_qrels("q1 0 dA 2\nq1 0 dB 0\nq1 0 dA 1\n").unwrap();
        assert_eq!(q.grade("q1", "dA"), 1);
        assert_eq!(q.grade("q1", "dB"), 0);
        assert_eq!(q.grade("q1", "missing"), 0);
    }

    #[test]
    fn qrels_empty_file() {
        assert!(parse_qrels("").unwrap().is_empty());
    }

    #[test]
    fn qrels_malformed_line_number() {
        match parse_qrels("q1 0 dA x") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("expected parse error at line 1, got {other:?}"),
        }
        match parse_qrels("q1 0 dA 1\nq1 0 dB -2") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("expected parse error at line 2, got {other:?}"),
        }
    }

    #[test]
    fn run_line_format() {
        let r = RunRanking::new(
            "q1",
            vec![RunEntry {
                doc_id: "dA".into(),
                score: 4.0,
                rank: 1,
            }],
            "rdime",
        )
        .unwrap();
        let path = tmp("run.txt");
        write_run(&path, &[r], "rdime").unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "q1 Q0 dA 1 4.000000 rdime\n");
    }

    #[test]
    fn run_roundtrip_within_tolerance() {
        let rankings = vec![
            RunRanking::new(
                "q2",
                vec![
                    RunEntry { doc_id: "dB".into(), score: 1.25, rank: 1 },
                    RunEntry { doc_id: "dA".into(), score: 0.5, rank: 2 },
                ],
                "t",
            )
            .unwrap(),
            RunRanking::new(
                "q1",
                vec![RunEntry { doc_id: "dC".into(), score: -0.125, rank: 1 }],
                "t",
            )
            .unwrap(),
        ];
        let path = tmp("run_rt.txt");
        write_run(&path, &rankings, "t").unwrap();
        let back = load_run(&path).unwrap();
        assert_eq!(back.len(), 2);
        // Input query order preserved.
        assert_eq!(back[0].query_id, "q2");
        assert_eq!(back[1].query_id, "q1");
        for (orig, parsed) in rankings.iter().zip(&back) {
            for (a, b) in orig.entries.iter().zip(&parsed.entries) {
                assert_eq!(a.doc_id, b.doc_id);
                assert_eq!(a.rank, b.rank);
                assert!((a.score - b.score).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn run_invariants_rejected() {
        let gap = RunRanking::new(
            "q",
            vec![RunEntry { doc_id: "a".into(), score: 1.0, rank: 2 }],
            "t",
        );
        assert!(gap.is_err());
        let increasing = RunRanking::new(
            "q",
            vec![
                RunEntry { doc_id: "a".into(), score: 1.0, rank: 1 },
                RunEntry { doc_id: "b".into(), score: 2.0, rank: 2 },
            ],
            "t",
        );
        assert!(increasing.is_err());
    }

    #[test]
    fn two_loads_compare_equal() {
        let m = EmbeddingMatrix::from_rows(vec!["a".into()], vec![vec![0.5, -0.5]]).unwrap();
        let path = tmp("reload.emb");
        save_embeddings(&m, &path).unwrap();
        assert_eq!(load_embeddings(&path).unwrap(), load_embeddings(&path).unwrap());
    }
}
