//! Seeded synthetic languages: one Gaussian base cloud, copied into each
//! language through a random orthogonal map plus isotropic noise. Word `i` of
//! every language comes from row `i` of the base cloud, which gives a planted
//! gold lexicon between every pair.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::align::{random_orthogonal, OrthogonalMap};
use crate::embed_io::{write_embeddings, EmbeddingSpace, GoldDictionary};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub languages: Vec<String>,
    /// Words per language.
    pub n: usize,
    pub d: usize,
    /// Standard deviation of the per-language noise (the base cloud has unit variance).
    pub noise: f64,
    pub seed: u64,
    /// Shuffle each language's row order so word order carries no signal.
    pub shuffle: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            languages: vec!["l0".into(), "l1".into(), "l2".into()],
            n: 500,
            d: 20,
            noise: 1e-2,
            seed: 0,
            shuffle: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub spaces: Vec<EmbeddingSpace>,
    /// Rotation applied to the base cloud for each language.
    pub rotations: Vec<OrthogonalMap>,
}

/// Word for base row `i` in language `tag`.
pub fn word(tag: &str, i: usize) -> String {
    format!("{tag}_{i}")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.languages.is_empty() || cfg.n == 0 || cfg.d == 0 {
        return Err(Error::Config("synthetic data needs languages, n >= 1 and d >= 1".into()));
    }
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = Array2::from_shape_simple_fn((cfg.n, cfg.d), || StandardNormal.sample(&mut rng));
    let mut spaces = Vec::new();
    let mut rotations = Vec::new();
    for tag in &cfg.languages {
        let q = random_orthogonal(cfg.d, &mut rng);
        let mut x = q.apply(base.view());
        x.mapv_inplace(|v| v + noise.sample(&mut rng));
        let mut order: Vec<usize> = (0..cfg.n).collect();
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let rows = x.select(ndarray::Axis(0), &order);
        let words = order.iter().map(|&i| word(tag, i)).collect();
        spaces.push(EmbeddingSpace::new(tag.clone(), words, rows)?);
        rotations.push(q);
    }
    Ok(SynthData { spaces, rotations })
}

impl SynthData {
    /// Planted lexicon from `src` to `tgt`.
    pub fn gold(&self, src: usize, tgt: usize) -> GoldDictionary {
        let (a, b) = (self.spaces[src].language(), self.spaces[tgt].language());
        let n = self.spaces[src].len();
        let pairs: Vec<(String, String)> = (0..n).map(|i| (word(a, i), word(b, i))).collect();
        GoldDictionary::from_pairs(a, b, pairs.iter().map(|(s, t)| (s.as_str(), t.as_str())))
    }

    /// Writes `<tag>.vec` per language and `dictionaries/<src>-<tgt>.txt` per
    /// ordered pair. Returns the embedding paths in language order.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let dict_dir = dir.join("dictionaries");
        fs::create_dir_all(&dict_dir).map_err(|e| Error::io(&dict_dir, e))?;
        let mut paths = Vec::new();
        for space in &self.spaces {
            let path = dir.join(format!("{}.vec", space.language()));
            write_embeddings(&path, space)?;
            paths.push(path);
        }
        for a in 0..self.spaces.len() {
            for b in 0..self.spaces.len() {
                if a == b {
                    continue;
                }
                let gold = self.gold(a, b);
                let path = dict_dir.join(format!("{}-{}.txt", gold.source_language, gold.target_language));
                let mut out = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                for (s, targets) in &gold.entries {
                    for t in targets {
                        writeln!(out, "{s} {t}").map_err(|e| Error::io(&path, e))?;
                    }
                }
            }
        }
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let cfg = SynthConfig {
            n: 30,
            d: 4,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.spaces.len(), 3);
        for (x, y) in a.spaces.iter().zip(&b.spaces) {
            assert_eq!(x, y);
            assert_eq!(x.vectors().dim(), (30, 4));
        }
    }

    #[test]
    fn languages_are_rotated_noisy_copies() {
        let cfg = SynthConfig {
            n: 40,
            d: 5,
            noise: 1e-3,
            shuffle: false,
            ..Default::default()
        };
        let data = generate(&cfg).unwrap();
        // undo each rotation; the copies then agree up to the noise
        let back: Vec<Array2<f64>> = data
            .spaces
            .iter()
            .zip(&data.rotations)
            .map(|(s, q)| q.unapply(s.vectors().view()))
            .collect();
        let gap = (&back[0] - &back[1]).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(gap < 1e-2, "{gap}");
    }

    #[test]
    fn planted_gold_links_base_rows() {
        let data = generate(&SynthConfig {
            n: 10,
            d: 2,
            ..Default::default()
        })
        .unwrap();
        let gold = data.gold(0, 2);
        assert_eq!(gold.len(), 10);
        assert_eq!(gold.entries[3], ("l0_3".to_string(), vec!["l2_3".to_string()]));
        assert!(data.spaces[2].contains("l2_3"));
    }
}
