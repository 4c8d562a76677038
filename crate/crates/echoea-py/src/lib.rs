//! Python bindings: similarity measures, alignment over similarity
//! matrices, ranking metrics, synthetic pair generation, and the full
//! config-driven experiment pipeline.

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::collections::BTreeSet;

use echoea::alignment::{self, AlignmentResult};
use echoea::error::EchoError;
use echoea::experiment::{run_experiment, RunConfig};
use echoea::eval;
use echoea::kg::{self, PairSet, SeedPairs};
use echoea::sim::SimilarityMatrix;

fn to_py_err(err: EchoError) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<SimilarityMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if n == 0 || m == 0 {
        return Err(PyValueError::new_err("matrix must be nonempty"));
    }
    let mut data = Array2::zeros((n, m));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != m {
            return Err(PyValueError::new_err(format!(
                "ragged matrix: row {i} has {} columns, expected {m}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            data[[i, j]] = v;
        }
    }
    Ok(SimilarityMatrix::from_raw(data))
}

fn pairs_of(set: &PairSet) -> Vec<(usize, usize)> {
    set.iter().copied().collect()
}

/// Sorensen-Dice coefficient over character-bigram multisets.
#[pyfunction]
fn dice(s1: &str, s2: &str) -> f64 {
    echoea::attr::dice(s1, s2)
}

/// Jaccard similarity of two integer sets.
#[pyfunction]
fn jaccard(a: Vec<usize>, b: Vec<usize>) -> f64 {
    let a: BTreeSet<usize> = a.into_iter().collect();
    let b: BTreeSet<usize> = b.into_iter().collect();
    echoea::attr::jaccard(&a, &b)
}

/// Mutual-nearest-neighbor alignment: returns (positives, negatives) as
/// (row, col) pairs.
#[pyfunction]
fn local_align(matrix: Vec<Vec<f64>>) -> PyResult<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    let s = to_matrix(matrix)?;
    let (plus, minus) = alignment::local_align(&s);
    Ok((pairs_of(&plus), pairs_of(&minus)))
}

/// One-to-one stable matching by deferred acceptance.
#[pyfunction]
fn global_align(matrix: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize)>> {
    let s = to_matrix(matrix)?;
    Ok(pairs_of(&alignment::global_align(&s)))
}

/// Bootstrap sample generation over a combined similarity matrix; returns
/// a dict-like object of the five pair sets.
#[pyfunction]
fn abgs(matrix: Vec<Vec<f64>>) -> PyResult<PyAlignmentResult> {
    let s = to_matrix(matrix)?;
    Ok(PyAlignmentResult::from(alignment::abgs_from_combined(&s)))
}

#[pyclass(name = "AlignmentResult", skip_from_py_object)]
#[derive(Clone)]
struct PyAlignmentResult {
    #[pyo3(get)]
    local_plus: Vec<(usize, usize)>,
    #[pyo3(get)]
    local_minus: Vec<(usize, usize)>,
    #[pyo3(get)]
    global_pairs: Vec<(usize, usize)>,
    #[pyo3(get)]
    iter_plus: Vec<(usize, usize)>,
    #[pyo3(get)]
    iter_minus: Vec<(usize, usize)>,
}

impl From<AlignmentResult> for PyAlignmentResult {
    fn from(r: AlignmentResult) -> Self {
        Self {
            local_plus: pairs_of(&r.p_local_plus),
            local_minus: pairs_of(&r.p_local_minus),
            global_pairs: pairs_of(&r.p_global),
            iter_plus: pairs_of(&r.p_iter_plus),
            iter_minus: pairs_of(&r.p_iter_minus),
        }
    }
}

fn seeds_from(pairs: Vec<(usize, usize)>) -> PyResult<SeedPairs> {
    SeedPairs::new(pairs.into_iter().collect()).map_err(to_py_err)
}

/// Fraction of truth pairs ranked within the top k of their query row.
#[pyfunction]
fn hits_at_k(matrix: Vec<Vec<f64>>, truth: Vec<(usize, usize)>, k: usize) -> PyResult<f64> {
    let s = to_matrix(matrix)?;
    eval::hits_at_k(&s, &seeds_from(truth)?, k).map_err(to_py_err)
}

/// Mean reciprocal rank of the truth pairs.
#[pyfunction]
fn mrr(matrix: Vec<Vec<f64>>, truth: Vec<(usize, usize)>) -> PyResult<f64> {
    let s = to_matrix(matrix)?;
    eval::mrr(&s, &seeds_from(truth)?).map_err(to_py_err)
}

/// Quality rates (r_u, r_p, r_n) of bootstrap sample sets against a truth
/// set; r_p / r_n are None when the corresponding set is empty.
#[pyfunction]
fn bootstrap_quality(
    iter_plus: Vec<(usize, usize)>,
    iter_minus: Vec<(usize, usize)>,
    truth: Vec<(usize, usize)>,
) -> PyResult<(f64, Option<f64>, Option<f64>)> {
    let plus: PairSet = iter_plus.into_iter().collect();
    let minus: PairSet = iter_minus.into_iter().collect();
    let truth: PairSet = truth.into_iter().collect();
    let q = eval::bootstrap_quality(&plus, &minus, &truth).map_err(to_py_err)?;
    Ok((q.r_u, q.r_p, q.r_n))
}

#[pyclass(name = "SynthPair")]
struct PySynthPair {
    #[pyo3(get)]
    n_entities: usize,
    #[pyo3(get)]
    rel_triples_1: Vec<(usize, usize, usize)>,
    #[pyo3(get)]
    rel_triples_2: Vec<(usize, usize, usize)>,
    #[pyo3(get)]
    truth: Vec<(usize, usize)>,
    #[pyo3(get)]
    emb1: Vec<Vec<f64>>,
    #[pyo3(get)]
    emb2: Vec<Vec<f64>>,
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Generates an isomorphic KG pair with ground truth, noisy relabeled copy,
/// and informative embeddings.
#[pyfunction]
#[pyo3(signature = (n_entities, n_relations=5, density=3.0, attr_vocab=8, noise=0.1, seed=0))]
fn synth_pair(
    n_entities: usize,
    n_relations: usize,
    density: f64,
    attr_vocab: usize,
    noise: f64,
    seed: u64,
) -> PyResult<PySynthPair> {
    let pair = kg::synth_kg_pair(n_entities, n_relations, density, attr_vocab, noise, seed)
        .map_err(to_py_err)?;
    Ok(PySynthPair {
        n_entities: pair.kg1.num_entities(),
        rel_triples_1: pair.kg1.rel_triples.clone(),
        rel_triples_2: pair.kg2.rel_triples.clone(),
        truth: pairs_of(&pair.truth.pairs),
        emb1: rows(&pair.emb1),
        emb2: rows(&pair.emb2),
    })
}

/// Entity/relation/triple counts of a DBP15K-layout dataset directory.
#[pyfunction]
fn dataset_counts(dir: &str) -> PyResult<Vec<(String, usize)>> {
    let (kg1, kg2, seeds) = kg::load_dataset(dir).map_err(to_py_err)?;
    Ok(vec![
        ("kg1_entities".into(), kg1.num_entities()),
        ("kg1_relations".into(), kg1.num_relations()),
        ("kg1_rel_triples".into(), kg1.rel_triples.len()),
        ("kg1_attr_triples".into(), kg1.attr_triples.len()),
        ("kg2_entities".into(), kg2.num_entities()),
        ("kg2_relations".into(), kg2.num_relations()),
        ("kg2_rel_triples".into(), kg2.rel_triples.len()),
        ("kg2_attr_triples".into(), kg2.attr_triples.len()),
        ("seeds".into(), seeds.len()),
    ])
}

/// Runs the full pipeline from config text (same format as the CLI) and
/// returns the headline rows as (variant, direction, hits1, hits10, mrr).
#[pyfunction]
fn train(config_text: &str) -> PyResult<Vec<echoea::experiment::EvalRow>> {
    let cfg = RunConfig::parse(config_text).map_err(to_py_err)?;
    let artifacts = run_experiment(&cfg).map_err(to_py_err)?;
    Ok(artifacts.eval_rows)
}

#[pymodule]
fn echoea_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(local_align, m)?)?;
    m.add_function(wrap_pyfunction!(global_align, m)?)?;
    m.add_function(wrap_pyfunction!(abgs, m)?)?;
    m.add_function(wrap_pyfunction!(hits_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(mrr, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_quality, m)?)?;
    m.add_function(wrap_pyfunction!(synth_pair, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_counts, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<PyAlignmentResult>()?;
    m.add_class::<PySynthPair>()?;
    Ok(())
}
