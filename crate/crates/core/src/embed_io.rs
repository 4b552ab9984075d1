//! Embedding and dictionary loading, plus the distance matrices the solvers consume.
//!
//! Embedding files use the word2vec text layout: a `count dim` header line
//! followed by one `token v1 ... vd` line per word, most frequent first.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Tolerance on `|sum(mass) - 1|` for a valid probability vector.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Vocabulary of one language together with its `n x d` embedding matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSpace {
    language: String,
    words: Vec<String>,
    vectors: Array2<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingSpace {
    pub fn new(language: impl Into<String>, words: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        let language = language.into();
        if words.len() != vectors.nrows() {
            return Err(Error::Dimension(format!(
                "{} words but {} vectors for `{language}`",
                words.len(),
                vectors.nrows()
            )));
        }
        if words.is_empty() {
            return Err(Error::Empty(format!("embedding space `{language}`")));
        }
        if let Some(bad) = vectors.iter().position(|v| !v.is_finite()) {
            let row = bad / vectors.ncols().max(1);
            return Err(Error::InvalidInput(format!(
                "non-finite entry in row {row} (`{}`) of `{language}`",
                words[row]
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate token `{w}` in `{language}`")));
            }
        }
        Ok(Self {
            language,
            words,
            vectors,
            index,
        })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Same vocabulary with a replaced matrix of identical shape.
    pub fn with_vectors(&self, vectors: Array2<f64>) -> Result<Self> {
        if vectors.dim() != self.vectors.dim() {
            return Err(Error::Dimension(format!(
                "replacement matrix {:?} does not match {:?}",
                vectors.dim(),
                self.vectors.dim()
            )));
        }
        Ok(Self {
            vectors,
            ..self.clone()
        })
    }

    /// Discrete distribution over this space's word vectors.
    pub fn distribution(&self, mass: MassModel) -> DiscreteDistribution {
        DiscreteDistribution {
            support: self.vectors.clone(),
            mass: mass.weights(self.len()),
        }
    }
}

/// How word probabilities are assigned when building a language distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MassModel {
    #[default]
    Uniform,
    /// Mass proportional to `1 / (rank + 10)` with 1-based frequency rank.
    Zipf,
}

impl MassModel {
    pub fn weights(self, n: usize) -> Array1<f64> {
        match self {
            MassModel::Uniform => Array1::from_elem(n, 1.0 / n as f64),
            MassModel::Zipf => {
                let raw: Array1<f64> = (1..=n).map(|rank| 1.0 / (rank as f64 + 10.0)).collect();
                let total = raw.sum();
                raw / total
            }
        }
    }
}

impl fmt::Display for MassModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MassModel::Uniform => "uniform",
            MassModel::Zipf => "zipf",
        })
    }
}

impl FromStr for MassModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(MassModel::Uniform),
            "zipf" => Ok(MassModel::Zipf),
            other => Err(Error::Config(format!("unknown mass model `{other}` (expected uniform|zipf)"))),
        }
    }
}

/// Weighted point cloud `sum_j mass_j * delta(support_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    pub support: Array2<f64>,
    pub mass: Array1<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Array2<f64>, mass: Array1<f64>) -> Result<Self> {
        if support.nrows() != mass.len() {
            return Err(Error::Dimension(format!(
                "{} support points but {} mass entries",
                support.nrows(),
                mass.len()
            )));
        }
        check_probability(&mass, "mass")?;
        Ok(Self { support, mass })
    }

    pub fn uniform(support: Array2<f64>) -> Self {
        let k = support.nrows();
        Self {
            support,
            mass: Array1::from_elem(k, 1.0 / k as f64),
        }
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }
}

pub(crate) fn check_probability(v: &Array1<f64>, what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidInput(format!("{what} is empty")));
    }
    if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} has negative or non-finite entries")));
    }
    let total = v.sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::InvalidInput(format!("{what} sums to {total}, expected 1")));
    }
    Ok(())
}

/// Counters reported by [`load_embeddings`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub declared_count: usize,
    pub duplicates_skipped: usize,
}

/// Reads the first `max_vocab` distinct rows of a word2vec text file.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    language: &str,
    max_vocab: usize,
) -> Result<(EmbeddingSpace, LoadStats)> {
    let path = path.as_ref();
    if max_vocab == 0 {
        return Err(Error::InvalidInput("max_vocab must be at least 1".into()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();

    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (declared, dim) = match fields.as_slice() {
        [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => return Err(parse_err(1, format!("malformed header `{header}`"))),
        },
        _ => return Err(parse_err(1, format!("malformed header `{header}`"))),
    };

    let wanted = max_vocab.min(declared);
    let mut words = Vec::with_capacity(wanted);
    let mut seen = HashSet::with_capacity(wanted);
    let mut data = Vec::with_capacity(wanted * dim);
    let mut stats = LoadStats {
        declared_count: declared,
        ..Default::default()
    };

    for (offset, line) in lines.enumerate() {
        if words.len() >= wanted {
            break;
        }
        let lineno = offset + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap_or_default();
        let start = data.len();
        for field in parts {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad number `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value `{field}`")));
            }
            data.push(v);
        }
        let got = data.len() - start;
        if got != dim {
            return Err(parse_err(lineno, format!("expected {dim} values, found {got}")));
        }
        if !seen.insert(token.to_string()) {
            data.truncate(start);
            stats.duplicates_skipped += 1;
            continue;
        }
        words.push(token.to_string());
    }

    if stats.duplicates_skipped > 0 {
        warn!(
            "{}: skipped {} duplicate tokens",
            path.display(),
            stats.duplicates_skipped
        );
    }
    if words.is_empty() {
        return Err(Error::Empty(path.display().to_string()));
    }
    if words.len() < wanted {
        warn!(
            "{}: header declares {declared} rows, only {} read",
            path.display(),
            words.len()
        );
    }
    let n = words.len();
    let vectors = Array2::from_shape_vec((n, dim), data)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok((EmbeddingSpace::new(language, words, vectors)?, stats))
}

/// Writes a space in word2vec text layout with round-trip float formatting.
pub fn write_embeddings(path: impl AsRef<Path>, space: &EmbeddingSpace) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{} {}", space.len(), space.dim()).map_err(io)?;
    for (word, row) in space.words().iter().zip(space.vectors().rows()) {
        write!(out, "{word}").map_err(io)?;
        for v in row {
            write!(out, " {v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Subtracts the column means.
pub fn center_embeddings(space: &EmbeddingSpace) -> EmbeddingSpace {
    let centered = center_rows(space.vectors().view());
    EmbeddingSpace {
        vectors: centered,
        ..space.clone()
    }
}

pub(crate) fn center_rows(x: ArrayView2<f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).expect("at least one row");
    &x - &mean
}

/// `D[j][k] = 1 - cos(x_j, x_k)`, symmetric with zero diagonal and entries in `[0, 2]`.
pub fn cosine_distance_matrix(space: &EmbeddingSpace) -> Result<Array2<f64>> {
    cosine_distances(space.vectors().view())
}

pub(crate) fn cosine_distances(x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = x.nrows();
    let mut unit = x.to_owned();
    for (i, mut row) in unit.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput(format!("row {i} has zero norm")));
        }
        row /= norm;
    }
    let gram = unit.dot(&unit.t());
    let mut d = Array2::zeros((n, n));
    for j in 0..n {
        for k in (j + 1)..n {
            let v = (1.0 - gram[[j, k]]).clamp(0.0, 2.0);
            d[[j, k]] = v;
            d[[k, j]] = v;
        }
    }
    Ok(d)
}

/// `C[j][l] = |a_j - b_l|^2`.
pub fn squared_euclidean_cost(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "cost between {}-d and {}-d points",
            a.ncols(),
            b.ncols()
        )));
    }
    let a_sq: Array1<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
    let b_sq: Array1<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut cost = a.dot(&b.t());
    for ((j, l), c) in cost.indexed_iter_mut() {
        let scale = a_sq[j] + b_sq[l];
        let v = scale - 2.0 * *c;
        // Cancellation dominates near coincident points; redo those exactly.
        *c = if v <= 1e-8 * scale {
            a.row(j)
                .iter()
                .zip(b.row(l))
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        } else {
            v
        };
    }
    Ok(cost)
}

/// Line counters reported alongside a loaded dictionary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DictionaryStats {
    pub lines: usize,
    pub malformed: usize,
    pub source_oov: usize,
    pub target_oov: usize,
    pub duplicates: usize,
}

impl DictionaryStats {
    pub fn dropped(&self) -> usize {
        self.malformed + self.source_oov + self.target_oov + self.duplicates
    }
}

/// Gold translations restricted to the loaded vocabularies.
#[derive(Clone, Debug, PartialEq)]
pub struct GoldDictionary {
    pub source_language: String,
    pub target_language: String,
    /// Query words in first-seen order, each with one or more gold targets.
    pub entries: Vec<(String, Vec<String>)>,
    pub stats: DictionaryStats,
}

impl GoldDictionary {
    /// Builds a dictionary from explicit pairs, merging repeated sources.
    pub fn from_pairs<'a>(
        source_language: &str,
        target_language: &str,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Self {
        let mut dict = GoldDictionary {
            source_language: source_language.to_string(),
            target_language: target_language.to_string(),
            entries: Vec::new(),
            stats: DictionaryStats::default(),
        };
        let mut slot: HashMap<String, usize> = HashMap::new();
        for (s, t) in pairs {
            dict.stats.lines += 1;
            dict.push(&mut slot, s, t);
        }
        dict
    }

    fn push(&mut self, slot: &mut HashMap<String, usize>, source: &str, target: &str) {
        match slot.get(source) {
            Some(&i) => {
                let golds = &mut self.entries[i].1;
                if golds.iter().any(|g| g == target) {
                    self.stats.duplicates += 1;
                } else {
                    golds.push(target.to_string());
                }
            }
            None => {
                slot.insert(source.to_string(), self.entries.len());
                self.entries.push((source.to_string(), vec![target.to_string()]));
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reads a `source<TAB or SPACE>target` file, keeping pairs covered by both vocabularies.
pub fn load_gold_dictionary(
    path: impl AsRef<Path>,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
) -> Result<GoldDictionary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dict = GoldDictionary {
        source_language: src.language().to_string(),
        target_language: tgt.language().to_string(),
        entries: Vec::new(),
        stats: DictionaryStats::default(),
    };
    let mut slot = HashMap::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        dict.stats.lines += 1;
        let mut parts = line.split_whitespace();
        let (Some(s), Some(t), None) = (parts.next(), parts.next(), parts.next()) else {
            dict.stats.malformed += 1;
            continue;
        };
        if !src.contains(s) {
            dict.stats.source_oov += 1;
            continue;
        }
        if !tgt.contains(t) {
            dict.stats.target_oov += 1;
            continue;
        }
        dict.push(&mut slot, s, t);
    }
    if dict.is_empty() {
        return Err(Error::Empty(format!(
            "dictionary {} ({} lines, none usable)",
            path.display(),
            dict.stats.lines
        )));
    }
    Ok(dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn space(rows: Array2<f64>) -> EmbeddingSpace {
        let words = (0..rows.nrows()).map(|i| format!("w{i}")).collect();
        EmbeddingSpace::new("xx", words, rows).unwrap()
    }

    #[test]
    fn load_keeps_all_rows_when_vocab_is_large() {
        let f = write_tmp("3 2\na 1 2\nb 3 4\nc 5 6\n");
        let (s, stats) = load_embeddings(f.path(), "xx", 5).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.dim(), 2);
        assert_eq!(stats.duplicates_skipped, 0);
        assert_eq!(s.vectors()[[2, 1]], 6.0);
    }

    #[test]
    fn load_truncates_to_prefix() {
        let f = write_tmp("3 2\na 1 2\nb 3 4\nc 5 6\n");
        let (s, _) = load_embeddings(f.path(), "xx", 2).unwrap();
        assert_eq!(s.words(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn load_rejects_bad_header_and_rows() {
        let f = write_tmp("three 2\na 1 2\n");
        assert!(matches!(load_embeddings(f.path(), "xx", 5), Err(Error::Parse { line: 1, .. })));
        let f = write_tmp("2 2\na 1 2\nb 3\n");
        assert!(matches!(load_embeddings(f.path(), "xx", 5), Err(Error::Parse { line: 3, .. })));
        let f = write_tmp("0 2\n");
        assert!(matches!(load_embeddings(f.path(), "xx", 5), Err(Error::Empty(_))));
        assert!(load_embeddings(f.path(), "xx", 0).is_err());
    }

    #[test]
    fn load_skips_duplicates() {
        let f = write_tmp("3 1\na 1\na 2\nb 3\n");
        let (s, stats) = load_embeddings(f.path(), "xx", 5).unwrap();
        assert_eq!(stats.duplicates_skipped, 1);
        assert_eq!(s.words(), &["a".to_string(), "b".to_string()]);
        assert_eq!(s.vectors()[[0, 0]], 1.0);
    }

    #[test]
    fn load_write_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((7, 3), |_| rng.random::<f64>() - 0.5);
        let s = space(x);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_embeddings(f.path(), &s).unwrap();
        let (back, _) = load_embeddings(f.path(), "xx", 100).unwrap();
        assert_eq!(back, s);
        assert_eq!(center_embeddings(&back), center_embeddings(&s));
    }

    #[test]
    fn centering_examples() {
        let c = center_embeddings(&space(array![[1.0, 1.0], [3.0, 3.0]]));
        assert_eq!(c.vectors(), &array![[-1.0, -1.0], [1.0, 1.0]]);
        let again = center_embeddings(&c);
        assert!(again.vectors().iter().zip(c.vectors()).all(|(a, b)| (a - b).abs() <= 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((100, 4), |_| rng.random::<f64>() * 10.0 - 2.0);
        let c = center_embeddings(&space(x));
        for col in c.vectors().columns() {
            // direct column sum
            let mean: f64 = col.iter().sum::<f64>() / 100.0;
            assert!(mean.abs() <= 1e-10);
        }
    }

    #[test]
    fn cosine_examples() {
        let d = cosine_distance_matrix(&space(array![[1.0, 2.0], [1.0, 2.0]])).unwrap();
        assert!(d.iter().all(|&v| v.abs() < 1e-15));
        let d = cosine_distance_matrix(&space(array![[1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_eq!(d[[0, 1]], 1.0);
        let d = cosine_distance_matrix(&space(array![[1.0, 0.0], [-1.0, 0.0]])).unwrap();
        assert_eq!(d[[1, 0]], 2.0);
        assert!(cosine_distance_matrix(&space(array![[0.0, 0.0], [1.0, 0.0]])).is_err());
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((20, 6), |_| rng.random::<f64>() - 0.5);
        let mut scaled = x.clone();
        for mut row in scaled.rows_mut() {
            let c: f64 = rng.random_range(0.1..50.0);
            row *= c;
        }
        let d1 = cosine_distances(x.view()).unwrap();
        let d2 = cosine_distances(scaled.view()).unwrap();
        assert!(d1.iter().zip(&d2).all(|(a, b)| (a - b).abs() <= 1e-10));
        assert!(d1.iter().all(|&v| (0.0..=2.0).contains(&v)));
    }

    #[test]
    fn squared_euclidean_examples() {
        let a = array![[0.3, -1.2]];
        assert_eq!(squared_euclidean_cost(a.view(), a.view()).unwrap(), array![[0.0]]);
        let c = squared_euclidean_cost(array![[0.0, 0.0]].view(), array![[3.0, 4.0]].view()).unwrap();
        assert_eq!(c, array![[25.0]]);
        assert!(squared_euclidean_cost(array![[0.0]].view(), array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn squared_euclidean_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Array2::from_shape_fn((5, 3), |_| rng.random::<f64>() * 4.0 - 2.0);
        let b = Array2::from_shape_fn((7, 3), |_| rng.random::<f64>() * 4.0 - 2.0);
        let c = squared_euclidean_cost(a.view(), b.view()).unwrap();
        for j in 0..5 {
            for l in 0..7 {
                let mut naive = 0.0;
                for t in 0..3 {
                    naive += (a[[j, t]] - b[[l, t]]).powi(2);
                }
                assert!((c[[j, l]] - naive).abs() <= 1e-10);
            }
        }
        let self_cost = squared_euclidean_cost(a.view(), a.view()).unwrap();
        for j in 0..5 {
            assert_eq!(self_cost[[j, j]], 0.0);
            for l in 0..5 {
                assert_eq!(self_cost[[j, l]], self_cost[[l, j]]);
            }
        }
    }

    #[test]
    fn dictionary_filters_vocabulary() {
        let src = EmbeddingSpace::new("en", vec!["cat".into(), "dog".into()], Array2::ones((2, 1))).unwrap();
        let tgt = EmbeddingSpace::new("es", vec!["gato".into(), "perro".into()], Array2::ones((2, 1))).unwrap();
        let f = write_tmp("cat\tgato\ndog perro\n");
        let d = load_gold_dictionary(f.path(), &src, &tgt).unwrap();
        assert_eq!(d.len(), 2);

        let f = write_tmp("cat gato\nbird pajaro\ncat perro\ncat gato\ndog lobo\nbroken\n");
        let d = load_gold_dictionary(f.path(), &src, &tgt).unwrap();
        assert_eq!(d.entries, vec![("cat".to_string(), vec!["gato".to_string(), "perro".to_string()])]);
        assert_eq!(d.stats.source_oov, 1);
        assert_eq!(d.stats.target_oov, 1);
        assert_eq!(d.stats.duplicates, 1);
        assert_eq!(d.stats.malformed, 1);
        assert_eq!(d.stats.dropped(), 4);

        let f = write_tmp("bird pajaro\n");
        assert!(matches!(load_gold_dictionary(f.path(), &src, &tgt), Err(Error::Empty(_))));
    }

    #[test]
    fn zipf_mass_is_normalized_and_decreasing() {
        let m = MassModel::Zipf.weights(50);
        assert!((m.sum() - 1.0).abs() < 1e-12);
        assert!(m.windows(2).into_iter().all(|w| w[0] > w[1]));
        assert!((m[0] / m[1] - 12.0 / 11.0).abs() < 1e-12);
    }
}
