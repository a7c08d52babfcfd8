//! Shared synthetic-collection builder for integration tests.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rdime_core::store::{save_embeddings, EmbeddingMatrix};
use rdime_core::synthetic::mix_seed;

pub struct FixtureSpec {
    pub p: usize,
    pub n_queries: usize,
    /// Relevant documents generated near each query's signal.
    pub docs_per_query: usize,
    /// Additional standard-normal noise documents.
    pub noise_docs: usize,
    pub strong_dims: usize,
    pub strong_magnitude: f64,
    pub weak_magnitude: f64,
    /// Query observation noise.
    pub epsilon: f64,
    /// Relevant-document noise around the signal.
    pub sigma: f64,
    pub seed: u64,
}

pub struct Fixture {
    pub queries: PathBuf,
    pub corpus: PathBuf,
    pub qrels: PathBuf,
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn narrow(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Builds a retrieval collection where each query observes a sparse
/// signal θ (a few strong dims, the rest near zero) and its relevant
/// documents are noisy copies of θ; all other documents are pure noise.
pub fn build_fixture(spec: &FixtureSpec, dir: &Path) -> Fixture {
    let mut query_ids = Vec::new();
    let mut query_rows = Vec::new();
    let mut doc_ids = Vec::new();
    let mut doc_rows = Vec::new();
    let mut qrels_text = String::new();

    for qi in 0..spec.n_queries {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, qi as u64));
        let mut dims: Vec<usize> = (0..spec.p).collect();
        dims.shuffle(&mut rng);
        let mut theta = vec![0.0f64; spec.p];
        for (slot, &dim) in dims.iter().enumerate() {
            let magnitude = if slot < spec.strong_dims {
                spec.strong_magnitude
            } else {
                spec.weak_magnitude
            };
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            theta[dim] = sign * magnitude;
        }

        let qid = format!("q{qi}");
        let z = normals(&mut rng, spec.p);
        let q: Vec<f64> = theta
            .iter()
            .zip(&z)
            .map(|(t, n)| t + spec.epsilon * n)
            .collect();
        query_ids.push(qid.clone());
        query_rows.push(narrow(&q));

        for di in 0..spec.docs_per_query {
            let z = normals(&mut rng, spec.p);
            let d: Vec<f64> = theta
                .iter()
                .zip(&z)
                .map(|(t, n)| t + spec.sigma * n)
                .collect();
            let doc_id = format!("{qid}_rel{di}");
            qrels_text.push_str(&format!("{qid} 0 {doc_id} 1\n"));
            doc_ids.push(doc_id);
            doc_rows.push(narrow(&d));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, u64::MAX / 2));
    for di in 0..spec.noise_docs {
        doc_ids.push(format!("noise{di}"));
        doc_rows.push(narrow(&normals(&mut rng, spec.p)));
    }

    let queries = dir.join("queries.emb");
    let corpus = dir.join("corpus.emb");
    let qrels = dir.join("qrels.txt");
    let query_matrix = EmbeddingMatrix::from_rows(query_ids, query_rows).unwrap();
    let corpus_matrix = EmbeddingMatrix::from_rows(doc_ids, doc_rows).unwrap();
    save_embeddings(&query_matrix, &queries).unwrap();
    save_embeddings(&corpus_matrix, &corpus).unwrap();
    fs::write(&qrels, qrels_text).unwrap();
    Fixture {
        queries,
        corpus,
        qrels,
    }
}
