//! Dataset ingestion, vocabularies, splits and the `(head, relation) -> tails`
//! indices used by KvsAll training and filtered ranking.
//!
//! Every triple `(h, r, t)` is also indexed in its inverse form
//! `(t, r + |R|, h)`, so both link-prediction directions are tail queries.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub const fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Labels in first-appearance order.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn intern(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len();
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels.get(i).map(String::as_str)
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

pub type ErVocab = BTreeMap<(usize, usize), Vec<usize>>;

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Accept a directory without `test.txt` (ablation datasets).
    pub no_test: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vocabulary,
    relations: Vocabulary,
    /// Base-relation triples per split; inverses are derived on demand.
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    er_vocab_train: ErVocab,
    er_vocab_all: ErVocab,
    holdout: bool,
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    load_dataset_with(dir, LoadOptions::default())
}

pub fn load_dataset_with(dir: impl AsRef<Path>, options: LoadOptions) -> Result<KnowledgeGraph> {
    let dir = dir.as_ref();
    let train_path = dir.join("train.txt");
    let valid_path = dir.join("valid.txt");
    let test_path = dir.join("test.txt");

    let train_rows = read_triples(&train_path)?;
    let valid_rows = read_triples(&valid_path)?;
    let test_rows = if options.no_test && !test_path.exists() {
        Vec::new()
    } else {
        read_triples(&test_path)?
    };
    if train_rows.is_empty() {
        return Err(Error::EmptyTrainingSplit(train_path));
    }
    Ok(KnowledgeGraph::from_labeled(
        &train_rows,
        &valid_rows,
        &test_rows,
    ))
}

type LabeledTriple = (String, String, String);

fn read_triples(path: &Path) -> Result<Vec<LabeledTriple>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| {
        let prefix = &e.as_bytes()[..e.utf8_error().valid_up_to()];
        Error::Parse {
            file: path.to_path_buf(),
            line: prefix.iter().filter(|&&b| b == b'\n').count() + 1,
            message: "invalid UTF-8".into(),
        }
    })?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                file: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        rows.push((
            fields[0].to_owned(),
            fields[1].to_owned(),
            fields[2].to_owned(),
        ));
    }
    Ok(rows)
}

impl KnowledgeGraph {
    /// Builds the graph from labelled triples; vocabulary indices follow first
    /// appearance scanning train, then valid, then test.
    pub fn from_labeled<S: AsRef<str>>(
        train: &[(S, S, S)],
        valid: &[(S, S, S)],
        test: &[(S, S, S)],
    ) -> Self {
        let mut entities = Vocabulary::default();
        let mut relations = Vocabulary::default();
        let mut index = |rows: &[(S, S, S)]| -> Vec<Triple> {
            rows.iter()
                .map(|(h, r, t)| {
                    let head = entities.intern(h.as_ref());
                    let relation = relations.intern(r.as_ref());
                    let tail = entities.intern(t.as_ref());
                    Triple::new(head, relation, tail)
                })
                .collect()
        };
        let train = index(train);
        let valid = index(valid);
        let test = index(test);
        Self::assemble(entities, relations, train, valid, test)
    }

    /// Builds a graph over already-indexed triples with synthetic labels
    /// `e{i}` / `r{i}`. Counts may exceed the indices actually used.
    pub fn from_indexed(
        entity_count: usize,
        base_relation_count: usize,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        for t in train.iter().chain(&valid).chain(&test) {
            if t.head >= entity_count || t.tail >= entity_count || t.relation >= base_relation_count
            {
                return Err(Error::IndexOutOfRange(format!("{t:?}")));
            }
        }
        let mut entities = Vocabulary::default();
        for i in 0..entity_count {
            entities.intern(&format!("e{i}"));
        }
        let mut relations = Vocabulary::default();
        for i in 0..base_relation_count {
            relations.intern(&format!("r{i}"));
        }
        Ok(Self::assemble(entities, relations, train, valid, test))
    }

    fn assemble(
        entities: Vocabulary,
        relations: Vocabulary,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Self {
        let base = relations.len();
        let er_vocab_train = build_er_vocab(base, &[&train]);
        let er_vocab_all = build_er_vocab(base, &[&train, &valid, &test]);
        Self {
            entities,
            relations,
            train,
            valid,
            test,
            er_vocab_train,
            er_vocab_all,
            holdout: false,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn base_relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn augmented_relation_count(&self) -> usize {
        2 * self.relations.len()
    }

    pub fn inverse_relation(&self, relation: usize) -> usize {
        let base = self.base_relation_count();
        if relation < base {
            relation + base
        } else {
            relation - base
        }
    }

    pub fn entities(&self) -> &Vocabulary {
        &self.entities
    }

    pub fn relations(&self) -> &Vocabulary {
        &self.relations
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    /// Both directions of every triple in `split`: `(h, r, t)` followed by
    /// `(t, r + |R|, h)`.
    pub fn augmented(&self, split: Split) -> Vec<Triple> {
        let base = self.base_relation_count();
        self.split(split)
            .iter()
            .flat_map(|t| [*t, Triple::new(t.tail, t.relation + base, t.head)])
            .collect()
    }

    pub fn er_vocab_train(&self) -> &ErVocab {
        &self.er_vocab_train
    }

    pub fn er_vocab_all(&self) -> &ErVocab {
        &self.er_vocab_all
    }

    /// True when the validation split was carved out of the training split.
    pub fn uses_holdout(&self) -> bool {
        self.holdout
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            entities: self.entity_count(),
            relations: self.base_relation_count(),
            train: self.train.len(),
            valid: self.valid.len(),
            test: self.test.len(),
        }
    }

    /// SHA-256 over the entity and relation labels in index order.
    pub fn vocab_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for label in self.entities.labels() {
            hasher.update(label.as_bytes());
            hasher.update(b"\n");
        }
        hasher.update(b"\0relations\0");
        for label in self.relations.labels() {
            hasher.update(label.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Training `(head, relation)` pairs in ascending order.
    pub fn kvsall_pairs(&self) -> Vec<(usize, usize)> {
        self.er_vocab_train.keys().copied().collect()
    }

    /// Multi-hot targets: row `i` is 1.0 at every training tail of `pairs[i]`.
    pub fn kvsall_targets(&self, pairs: &[(usize, usize)]) -> Result<Matrix> {
        let n = self.entity_count();
        let mut targets = Matrix::zeros(pairs.len(), n);
        for (i, &(head, relation)) in pairs.iter().enumerate() {
            let tails = self
                .er_vocab_train
                .get(&(head, relation))
                .ok_or(Error::UnknownPair { head, relation })?;
            let row = targets.row_mut(i);
            for &t in tails {
                row[t] = 1.0;
            }
        }
        Ok(targets)
    }

    /// Known tails of `(head, relation)` across all splits, minus `true_tail`.
    pub fn filter_mask(&self, head: usize, relation: usize, true_tail: usize) -> Vec<usize> {
        self.known_tails(head, relation)
            .iter()
            .copied()
            .filter(|&t| t != true_tail)
            .collect()
    }

    pub fn known_tails(&self, head: usize, relation: usize) -> &[usize] {
        self.er_vocab_all
            .get(&(head, relation))
            .map_or(&[], Vec::as_slice)
    }

    /// Moves a seeded `1 - ratio` share of the training split into the
    /// validation split. The full-graph index is unchanged.
    pub fn with_holdout(&self, ratio: f64, seed: u64) -> Result<Self> {
        let (train, holdout) = holdout_split(&self.train, ratio, seed)?;
        let er_vocab_train = build_er_vocab(self.base_relation_count(), &[&train]);
        Ok(Self {
            entities: self.entities.clone(),
            relations: self.relations.clone(),
            train,
            valid: holdout,
            test: self.test.clone(),
            er_vocab_train,
            er_vocab_all: self.er_vocab_all.clone(),
            holdout: true,
        })
    }
}

fn build_er_vocab(base_relations: usize, splits: &[&[Triple]]) -> ErVocab {
    let mut vocab: ErVocab = BTreeMap::new();
    for t in splits.iter().flat_map(|s| s.iter()) {
        vocab.entry((t.head, t.relation)).or_default().push(t.tail);
        vocab
            .entry((t.tail, t.relation + base_relations))
            .or_default()
            .push(t.head);
    }
    for tails in vocab.values_mut() {
        tails.sort_unstable();
        tails.dedup();
    }
    vocab
}

/// Seeded shuffle, then the first `round(ratio * n)` triples form the first part.
pub fn holdout_split(
    triples: &[Triple],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<Triple>, Vec<Triple>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!(
            "holdout ratio {ratio} outside (0, 1)"
        )));
    }
    let n = triples.len();
    let keep = (ratio * n as f64).round() as usize;
    if keep < 1 || keep >= n {
        return Err(Error::Config(format!(
            "holdout ratio {ratio} leaves an empty part of {n} triples"
        )));
    }
    let mut shuffled = triples.to_vec();
    shuffled.shuffle(&mut stream_rng(seed, Stream::Holdout, 0));
    let holdout = shuffled.split_off(keep);
    Ok((shuffled, holdout))
}

/// Loader paths for the bundled benchmark layout `<root>/<NAME>/`.
pub fn dataset_dir(root: impl AsRef<Path>, name: &str) -> PathBuf {
    root.as_ref().join(name)
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeSet, HashSet};

    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn toy_dir(train: &str, valid: &str, test: &str) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "train.txt", train);
        write(dir.path(), "valid.txt", valid);
        write(dir.path(), "test.txt", test);
        dir
    }

    #[test]
    fn three_line_toy_file() {
        let dir = toy_dir("a\tr\tb\nb\tr\tc\na\tr\tc\n", "", "");
        let kg = load_dataset(dir.path()).unwrap();
        assert_eq!(kg.entity_count(), 3);
        assert_eq!(kg.augmented_relation_count(), 2);
        assert_eq!(kg.entities().labels(), &["a", "b", "c"]);
    }

    #[test]
    fn empty_train_is_an_error() {
        let dir = toy_dir("", "a\tr\tb\n", "a\tr\tb\n");
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::EmptyTrainingSplit(_))
        ));
    }

    #[test]
    fn malformed_line_names_file_and_line() {
        let dir = toy_dir("a\tr\tb\na\tr\n", "", "");
        match load_dataset(dir.path()) {
            Err(Error::Parse { file, line, .. }) => {
                assert!(file.ends_with("train.txt"));
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "train.txt", "a\tr\tb\n");
        write(dir.path(), "valid.txt", "");
        assert!(matches!(load_dataset(dir.path()), Err(Error::Io { .. })));
        let kg = load_dataset_with(dir.path(), LoadOptions { no_test: true }).unwrap();
        assert!(kg.test().is_empty());
    }

    #[test]
    fn vocabulary_uses_first_appearance_across_splits() {
        let dir = toy_dir("z\tr\ty\n", "x\ts\tz\n", "w\tr\tx\n");
        let kg = load_dataset(dir.path()).unwrap();
        assert_eq!(kg.entities().labels(), &["z", "y", "x", "w"]);
        assert_eq!(kg.relations().labels(), &["r", "s"]);
        let again = load_dataset(dir.path()).unwrap();
        assert_eq!(kg.vocab_hash(), again.vocab_hash());
    }

    fn six_entity_kg() -> KnowledgeGraph {
        KnowledgeGraph::from_indexed(
            6,
            2,
            vec![
                Triple::new(0, 0, 2),
                Triple::new(0, 0, 5),
                Triple::new(1, 1, 3),
                Triple::new(4, 0, 1),
            ],
            vec![Triple::new(0, 0, 1)],
            vec![Triple::new(1, 1, 4)],
        )
        .unwrap()
    }

    #[test]
    fn kvsall_rows() {
        let kg = six_entity_kg();
        let targets = kg.kvsall_targets(&[(0, 0), (1, 1)]).unwrap();
        assert_eq!(targets.row(0), &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(targets.row(1), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            kg.kvsall_targets(&[(3, 0)]),
            Err(Error::UnknownPair {
                head: 3,
                relation: 0
            })
        ));
    }

    #[test]
    fn inverse_augmentation_is_indexed() {
        let kg = six_entity_kg();
        for t in kg.train() {
            assert!(kg.er_vocab_train()[&(t.tail, t.relation + 2)].contains(&t.head));
        }
        for (key, tails) in kg.er_vocab_train() {
            let all = &kg.er_vocab_all()[key];
            assert!(tails.iter().all(|t| all.contains(t)));
        }
    }

    #[test]
    fn filter_masks() {
        let kg = KnowledgeGraph::from_indexed(
            8,
            1,
            vec![Triple::new(0, 0, 1), Triple::new(0, 0, 4)],
            vec![],
            vec![Triple::new(0, 0, 7)],
        )
        .unwrap();
        assert_eq!(kg.filter_mask(0, 0, 4), vec![1, 7]);
        assert!(kg.filter_mask(3, 0, 1).is_empty());
    }

    #[test]
    fn holdout_sizes_and_determinism() {
        let triples: Vec<Triple> = (0..100).map(|i| Triple::new(i, 0, i + 1)).collect();
        let (a, b) = holdout_split(&triples, 0.95, 11).unwrap();
        assert_eq!((a.len(), b.len()), (95, 5));
        assert_eq!(
            holdout_split(&triples, 0.95, 11).unwrap(),
            (a.clone(), b.clone())
        );

        let mut union: Vec<Triple> = a.iter().chain(&b).copied().collect();
        union.sort();
        assert_eq!(union, triples);
        let left: HashSet<_> = a.iter().collect();
        assert!(b.iter().all(|t| !left.contains(t)));
    }

    #[test]
    fn holdout_differs_across_seeds() {
        let triples: Vec<Triple> = (0..20).map(|i| Triple::new(i, 0, i + 1)).collect();
        let held = |s: u64| -> BTreeSet<Triple> {
            holdout_split(&triples, 0.9, s)
                .unwrap()
                .1
                .into_iter()
                .collect()
        };
        let differing = (0..20u64).filter(|&s| held(s) != held(s + 100)).count();
        assert!(differing >= 19, "only {differing}/20 seed pairs differ");
    }

    #[test]
    fn degenerate_holdout_ratio() {
        let triples: Vec<Triple> = (0..10).map(|i| Triple::new(i, 0, i)).collect();
        assert!(holdout_split(&triples, 0.99, 0).is_err());
        assert!(holdout_split(&triples, 0.01, 0).is_err());
        assert!(holdout_split(&triples, 1.0, 0).is_err());
    }

    #[test]
    fn with_holdout_moves_training_triples() {
        let triples: Vec<Triple> = (0..40)
            .map(|i| Triple::new(i % 10, i % 2, (i * 3) % 10))
            .collect();
        let kg = KnowledgeGraph::from_indexed(10, 2, triples, vec![], vec![]).unwrap();
        let held = kg.with_holdout(0.95, 3).unwrap();
        assert!(held.uses_holdout());
        assert_eq!(held.train().len() + held.valid().len(), 40);
        assert_eq!(held.valid().len(), 2);
        assert_eq!(held.er_vocab_all(), kg.er_vocab_all());
    }
}
