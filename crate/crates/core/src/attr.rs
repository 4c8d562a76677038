//! Attribute matching across KGs and the attribute-based similarity
//! matrices fed into the bootstrap combination.

use ndarray::Array2;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::error::{EchoError, Result};
use crate::kg::{CandidateSets, KnowledgeGraph};
use crate::sim::SimilarityMatrix;

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn normalize_name(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Injectable name -> name mapping applied before normalization; stands in
/// for the external translation step.
#[derive(Debug, Clone, Default)]
pub struct NameNormalizer {
    map: HashMap<String, String>,
}

impl NameNormalizer {
    /// Loads a two-column tab-separated `from\tto` file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(EchoError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|source| EchoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut map = HashMap::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.splitn(2, '\t').collect();
            if fields.len() != 2 {
                return Err(EchoError::Parse {
                    file: path.to_path_buf(),
                    line: ln + 1,
                    message: "expected `from\\tto`".into(),
                });
            }
            map.insert(fields[0].to_string(), fields[1].to_string());
        }
        Ok(Self { map })
    }

    pub fn apply(&self, name: &str) -> String {
        let mapped = self.map.get(name).map(String::as_str).unwrap_or(name);
        normalize_name(mapped)
    }
}

fn bigrams(s: &str) -> Vec<(char, char)> {
    let chars: Vec<char> = s.chars().collect();
    let mut out: Vec<(char, char)> = chars.windows(2).map(|w| (w[0], w[1])).collect();
    out.sort_unstable();
    out
}

/// Sorensen-Dice coefficient over multiset character bigrams.
/// Two bigram-less strings count as identical (1.0); exactly one
/// bigram-less string scores 0.
pub fn dice(s1: &str, s2: &str) -> f64 {
    let b1 = bigrams(s1);
    let b2 = bigrams(s2);
    match (b1.is_empty(), b2.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    // multiset intersection of two sorted lists
    let mut i = 0;
    let mut j = 0;
    let mut common = 0usize;
    while i < b1.len() && j < b2.len() {
        match b1[i].cmp(&b2[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    2.0 * common as f64 / (b1.len() + b2.len()) as f64
}

/// Jaccard similarity of two sets; two empty sets score 0 (absence of
/// evidence is not similarity).
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Top-1 attribute matching: a partial map from KG1 attribute ids to KG2
/// attribute ids with the winning Dice score.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeAlignment {
    /// a1 -> (a2, dice score); each a1 maps at most once.
    pub matched: BTreeMap<usize, (usize, f64)>,
    pub dice_threshold: f64,
}

impl AttributeAlignment {
    pub fn matched_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.matched.iter().map(|(&a1, &(a2, _))| (a1, a2)).collect()
    }

    /// KG2 attr id -> all KG1 attr ids mapped onto it.
    fn reverse(&self) -> HashMap<usize, Vec<usize>> {
        let mut rev: HashMap<usize, Vec<usize>> = HashMap::new();
        for (&a1, &(a2, _)) in &self.matched {
            rev.entry(a2).or_default().push(a1);
        }
        rev
    }
}

/// For each KG1 attribute name, keeps its best-Dice KG2 attribute iff the
/// score strictly exceeds `threshold`; ties break to the lowest KG2 id.
/// Names must already be normalized.
pub fn match_attributes(attrs1: &[String], attrs2: &[String], threshold: f64) -> AttributeAlignment {
    let mut matched = BTreeMap::new();
    for (a1, n1) in attrs1.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (a2, n2) in attrs2.iter().enumerate() {
            let score = dice(n1, n2);
            if best.map_or(true, |(_, bs)| score > bs) {
                best = Some((a2, score));
            }
        }
        if let Some((a2, score)) = best {
            if score > threshold {
                matched.insert(a1, (a2, score));
            }
        }
    }
    AttributeAlignment {
        matched,
        dice_threshold: threshold,
    }
}

/// Matched-attribute sets of every entity, expressed in KG1 attribute ids
/// (the shared space).
fn shared_attr_sets(
    kg: &KnowledgeGraph,
    to_shared: &dyn Fn(usize) -> Vec<usize>,
) -> Vec<BTreeSet<usize>> {
    let mut sets = vec![BTreeSet::new(); kg.num_entities()];
    for &(e, a, _) in &kg.attr_triples {
        for shared in to_shared(a) {
            sets[e].insert(shared);
        }
    }
    sets
}

/// Per-entity value-string sets keyed by shared attribute id.
fn shared_value_sets(
    kg: &KnowledgeGraph,
    to_shared: &dyn Fn(usize) -> Vec<usize>,
) -> Vec<BTreeMap<usize, BTreeSet<String>>> {
    let mut sets: Vec<BTreeMap<usize, BTreeSet<String>>> = vec![BTreeMap::new(); kg.num_entities()];
    for &(e, a, v) in &kg.attr_triples {
        for shared in to_shared(a) {
            sets[e]
                .entry(shared)
                .or_default()
                .insert(normalize_name(&kg.values[v]));
        }
    }
    sets
}

fn forward_map(alignment: &AttributeAlignment) -> impl Fn(usize) -> Vec<usize> + '_ {
    |a1| {
        if alignment.matched.contains_key(&a1) {
            vec![a1]
        } else {
            vec![]
        }
    }
}

fn backward_map(alignment: &AttributeAlignment) -> impl Fn(usize) -> Vec<usize> {
    let rev = alignment.reverse();
    move |a2| rev.get(&a2).cloned().unwrap_or_default()
}

/// Jaccard similarity of matched-attribute sets over the candidate grid.
pub fn attr_similarity(
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    alignment: &AttributeAlignment,
    candidates: &CandidateSets,
) -> Result<SimilarityMatrix> {
    let fwd = forward_map(alignment);
    let bwd = backward_map(alignment);
    let sets1 = shared_attr_sets(kg1, &fwd);
    let sets2 = shared_attr_sets(kg2, &bwd);

    // postings over shared attribute ids for the candidate columns, so rows
    // only visit columns that can score above zero
    let mut postings: HashMap<usize, Vec<usize>> = HashMap::new();
    for (cj, &e2) in candidates.right.iter().enumerate() {
        for &a in &sets2[e2] {
            postings.entry(a).or_default().push(cj);
        }
    }

    let mut data = Array2::zeros((candidates.left.len(), candidates.right.len()));
    for (ci, &e1) in candidates.left.iter().enumerate() {
        let mut cols: BTreeSet<usize> = BTreeSet::new();
        for &a in &sets1[e1] {
            if let Some(list) = postings.get(&a) {
                cols.extend(list.iter().copied());
            }
        }
        for cj in cols {
            data[[ci, cj]] = jaccard(&sets1[e1], &sets2[candidates.right[cj]]);
        }
    }
    SimilarityMatrix::new(candidates.left.clone(), candidates.right.clone(), data)
}

/// Mean per-attribute value-set Jaccard over the attributes two entities
/// share; entities sharing no attributes score 0.
pub fn attr_value_similarity(
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    alignment: &AttributeAlignment,
    candidates: &CandidateSets,
) -> Result<SimilarityMatrix> {
    let fwd = forward_map(alignment);
    let bwd = backward_map(alignment);
    let vals1 = shared_value_sets(kg1, &fwd);
    let vals2 = shared_value_sets(kg2, &bwd);

    let mut postings: HashMap<usize, Vec<usize>> = HashMap::new();
    for (cj, &e2) in candidates.right.iter().enumerate() {
        for &a in vals2[e2].keys() {
            postings.entry(a).or_default().push(cj);
        }
    }

    let mut data = Array2::zeros((candidates.left.len(), candidates.right.len()));
    for (ci, &e1) in candidates.left.iter().enumerate() {
        let mut cols: BTreeSet<usize> = BTreeSet::new();
        for &a in vals1[e1].keys() {
            if let Some(list) = postings.get(&a) {
                cols.extend(list.iter().copied());
            }
        }
        for cj in cols {
            let v2 = &vals2[candidates.right[cj]];
            let mut total = 0.0;
            let mut n_shared = 0usize;
            for (a, set1) in &vals1[e1] {
                if let Some(set2) = v2.get(a) {
                    total += jaccard(set1, set2);
                    n_shared += 1;
                }
            }
            if n_shared > 0 {
                data[[ci, cj]] = total / n_shared as f64;
            }
        }
    }
    SimilarityMatrix::new(candidates.left.clone(), candidates.right.clone(), data)
}

/// Weights of the similarity combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self {
            alpha1: 0.1,
            alpha2: 0.5,
            alpha3: 0.4,
        }
    }
}

impl SimilarityWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EchoError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Elementwise weighted sum of the three similarity matrices. All inputs
/// must share shape and id lists; the relation matrix is expected to be
/// normalized to [0, 1] already.
pub fn combine_similarity(
    s_rel: &SimilarityMatrix,
    s_attr: &SimilarityMatrix,
    s_attr_value: &SimilarityMatrix,
    w: &SimilarityWeights,
) -> Result<SimilarityMatrix> {
    w.validate()?;
    for other in [s_attr, s_attr_value] {
        if other.left_ids != s_rel.left_ids || other.right_ids != s_rel.right_ids {
            return Err(EchoError::Argument(
                "combine_similarity: matrices cover different candidate sets".into(),
            ));
        }
    }
    let data = w.alpha1 * &s_rel.data + w.alpha2 * &s_attr.data + w.alpha3 * &s_attr_value.data;
    SimilarityMatrix::new(s_rel.left_ids.clone(), s_rel.right_ids.clone(), data)
}

/// Writes the attribute-alignment audit report: `attr1,attr2,dice` rows.
pub fn write_alignment_report(
    path: impl AsRef<Path>,
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    alignment: &AttributeAlignment,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("attr1,attr2,dice\n");
    for (&a1, &(a2, score)) in &alignment.matched {
        out.push_str(&format!(
            "{},{},{}\n",
            kg1.attribute_names[a1].replace(',', ";"),
            kg2.attribute_names[a2].replace(',', ";"),
            score
        ));
    }
    std::fs::write(path, out).map_err(|source| EchoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dice_identity_disjoint_and_shared_bigram() {
        assert_eq!(dice("abc", "abc"), 1.0);
        assert_eq!(dice("ab", "cd"), 0.0);
        // "night" and "nacht" share only the bigram "ht": 2*1/(4+4)
        assert_eq!(dice("night", "nacht"), 0.25);
    }

    #[test]
    fn dice_empty_conventions() {
        assert_eq!(dice("", ""), 1.0);
        assert_eq!(dice("x", "y"), 1.0); // single chars have no bigrams
        assert_eq!(dice("", "ab"), 0.0);
    }

    #[test]
    fn dice_counts_multiset_bigrams() {
        // "aaa" has bigrams {aa, aa}; "aa" has {aa}: 2*1/(2+1)
        assert!((dice("aaa", "aa") - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn jaccard_basics() {
        let a: BTreeSet<_> = ["a", "b"].into_iter().collect();
        let b: BTreeSet<_> = ["b", "c"].into_iter().collect();
        assert!((jaccard(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard(&a, &a), 1.0);
        let c: BTreeSet<&str> = ["x"].into_iter().collect();
        assert_eq!(jaccard(&a, &c), 0.0);
        let empty: BTreeSet<&str> = BTreeSet::new();
        assert_eq!(jaccard(&empty, &empty), 0.0);
    }

    #[test]
    fn match_identical_lists_is_identity() {
        let names: Vec<String> = ["population", "area", "mayor"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let m = match_attributes(&names, &names, 0.5);
        assert_eq!(m.matched_pairs(), (0..3).map(|i| (i, i)).collect());
    }

    #[test]
    fn threshold_one_matches_nothing() {
        // strict inequality: even a perfect score of 1.0 cannot exceed 1.0
        let names: Vec<String> = vec!["area".into()];
        let m = match_attributes(&names, &names, 1.0);
        assert!(m.matched.is_empty());
    }

    #[test]
    fn birth_date_prefers_date_of_birth_by_tie_break() {
        // dice("birth date", "date of birth") = 2*7/(9+12) = 2/3 and
        // dice("birth date", "death date") = 2*6/(9+9) = 2/3: an exact tie,
        // broken toward the lower KG2 id.
        let a = dice("birth date", "date of birth");
        let b = dice("birth date", "death date");
        assert!((a - 2.0 / 3.0).abs() < 1e-12);
        assert!((b - 2.0 / 3.0).abs() < 1e-12);
        let names1: Vec<String> = vec!["birth date".into()];
        let names2: Vec<String> = vec!["date of birth".into(), "death date".into()];
        let m = match_attributes(&names1, &names2, 0.5);
        assert_eq!(m.matched.get(&0), Some(&(0, a)));
    }

    fn toy_kgs() -> (KnowledgeGraph, KnowledgeGraph) {
        // Shared attribute vocabulary {name, area, pop}; values overlap only
        // on aligned entities (0<->0, 1<->1, 2<->2).
        let mk = |values: Vec<&str>, triples: Vec<(usize, usize, usize)>| KnowledgeGraph {
            entity_names: (0..3).map(|i| format!("e{i}")).collect(),
            relation_names: vec![],
            attribute_names: vec!["name".into(), "area".into(), "pop".into()],
            values: values.into_iter().map(String::from).collect(),
            rel_triples: vec![],
            attr_triples: triples,
        };
        let kg1 = mk(
            vec!["alpha", "beta", "gamma"],
            vec![(0, 0, 0), (0, 1, 1), (1, 0, 1), (2, 2, 2)],
        );
        let kg2 = mk(
            vec!["alpha", "beta", "delta"],
            vec![(0, 0, 0), (0, 1, 1), (1, 0, 1), (2, 2, 2)],
        );
        (kg1, kg2)
    }

    fn all_candidates() -> CandidateSets {
        CandidateSets {
            left: vec![0, 1, 2],
            right: vec![0, 1, 2],
        }
    }

    #[test]
    fn attr_similarity_matches_hand_jaccard_table() {
        let (kg1, kg2) = toy_kgs();
        let align = match_attributes(&kg1.attribute_names, &kg2.attribute_names, 0.5);
        let s = attr_similarity(&kg1, &kg2, &align, &all_candidates()).unwrap();
        // attr sets: e0={name,area}, e1={name}, e2={pop} on both sides
        let expected = array![[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(s.data, expected);
    }

    #[test]
    fn value_similarity_averages_per_attribute() {
        let (kg1, kg2) = toy_kgs();
        let align = match_attributes(&kg1.attribute_names, &kg2.attribute_names, 0.5);
        let s = attr_value_similarity(&kg1, &kg2, &align, &all_candidates()).unwrap();
        // e0 vs e0: name {alpha}/{alpha} = 1, area {beta}/{beta} = 1 -> 1
        assert_eq!(s.data[[0, 0]], 1.0);
        // e2 vs e2: pop {gamma}/{delta} = 0 -> 0
        assert_eq!(s.data[[2, 2]], 0.0);
        // e0 vs e1: shared attr name: {alpha} vs {beta} -> 0
        assert_eq!(s.data[[0, 1]], 0.0);
        // no shared attrs -> 0
        assert_eq!(s.data[[0, 2]], 0.0);
    }

    #[test]
    fn value_similarity_two_attrs_mean() {
        // two shared attributes with J = 1 and J = 1/3 average to 2/3
        let mk = |vals: Vec<&str>, triples: Vec<(usize, usize, usize)>| KnowledgeGraph {
            entity_names: vec!["e".into()],
            relation_names: vec![],
            attribute_names: vec!["area".into(), "brand".into()],
            values: vals.into_iter().map(String::from).collect(),
            rel_triples: vec![],
            attr_triples: triples,
        };
        let kg1 = mk(vec!["x", "p", "q"], vec![(0, 0, 0), (0, 1, 1), (0, 1, 2)]);
        let kg2 = mk(vec!["x", "p", "r"], vec![(0, 0, 0), (0, 1, 1), (0, 1, 2)]);
        // attr a: {x} vs {x} = 1; attr b: {p,q} vs {p,r} = 1/3
        let align = match_attributes(&kg1.attribute_names, &kg2.attribute_names, 0.5);
        let cand = CandidateSets {
            left: vec![0],
            right: vec![0],
        };
        let s = attr_value_similarity(&kg1, &kg2, &align, &cand).unwrap();
        assert!((s.data[[0, 0]] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn combine_projects_and_weights() {
        let rel = SimilarityMatrix::from_raw(array![[0.2, 0.8], [0.6, 0.4]]);
        let attr = SimilarityMatrix::from_raw(array![[1.0, 0.0], [0.0, 1.0]]);
        let val = SimilarityMatrix::from_raw(array![[0.5, 0.5], [0.5, 0.5]]);
        let only_rel = combine_similarity(
            &rel,
            &attr,
            &val,
            &SimilarityWeights {
                alpha1: 1.0,
                alpha2: 0.0,
                alpha3: 0.0,
            },
        )
        .unwrap();
        assert_eq!(only_rel.data, rel.data);

        let w = SimilarityWeights::default();
        let ones = SimilarityMatrix::from_raw(array![[1.0]]);
        let c = combine_similarity(&ones, &ones, &ones, &w).unwrap();
        assert!((c.data[[0, 0]] - 1.0).abs() < 1e-12);

        let mixed = combine_similarity(&rel, &attr, &val, &w).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect =
                    0.1 * rel.data[[i, j]] + 0.5 * attr.data[[i, j]] + 0.4 * val.data[[i, j]];
                assert!((mixed.data[[i, j]] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn combine_rejects_mismatched_candidates() {
        let a = SimilarityMatrix::from_raw(array![[0.0, 0.0]]);
        let b = SimilarityMatrix::from_raw(array![[0.0], [0.0]]);
        assert!(combine_similarity(&a, &b, &a, &SimilarityWeights::default()).is_err());
    }

    #[test]
    fn irrelevant_attribute_leaves_similarity_unchanged() {
        let (kg1, kg2) = toy_kgs();
        let align = match_attributes(&kg1.attribute_names, &kg2.attribute_names, 0.5);
        let before = attr_similarity(&kg1, &kg2, &align, &all_candidates()).unwrap();

        // add an attribute present in neither compared entity pair
        let mut kg1b = kg1.clone();
        let mut kg2b = kg2.clone();
        kg1b.attribute_names.push("unused".into());
        kg2b.attribute_names.push("unused".into());
        let align2 = match_attributes(&kg1b.attribute_names, &kg2b.attribute_names, 0.5);
        let after = attr_similarity(&kg1b, &kg2b, &align2, &all_candidates()).unwrap();
        assert_eq!(before.data, after.data);
    }

    #[test]
    fn normalizer_maps_then_normalizes() {
        let dir = std::env::temp_dir().join(format!("echoea_norm_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("map.tsv");
        std::fs::write(&path, "Geburtsdatum\tBirth  Date\n").unwrap();
        let n = NameNormalizer::from_file(&path).unwrap();
        assert_eq!(n.apply("Geburtsdatum"), "birth date");
        assert_eq!(n.apply("Other Name"), "other name");
        let _ = std::fs::remove_dir_all(&dir);
    }
}
