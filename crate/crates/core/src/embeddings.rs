//! Word vectors in the plain text format: a `COUNT DIM` header line, then
//! one `word v1 … vDIM` line per word.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Half-width of the uniform box unknown words are drawn from.
pub const OOV_RANGE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("embedding dimension must be at least 1"));
        }
        Ok(Self {
            dim,
            words: Vec::new(),
            vectors: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Adds or replaces `word`.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::shape("embedding", &[self.dim], &[vector.len()]));
        }
        let word = word.into();
        if self.vectors.insert(word.clone(), vector).is_none() {
            self.words.push(word);
        }
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Stored vector, or a fixed pseudo-random one for unknown words.
    pub fn vector(&self, word: &str) -> Vec<f64> {
        match self.get(word) {
            Some(v) => v.to_vec(),
            None => oov_vector(word, self.dim),
        }
    }

    /// `|tokens| × dim` matrix of token vectors.
    pub fn embed_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Tensor> {
        if tokens.is_empty() {
            return Err(Error::arg("cannot embed an empty token list"));
        }
        let mut data = Vec::with_capacity(tokens.len() * self.dim);
        for t in tokens {
            data.extend(self.vector(t.as_ref()));
        }
        Tensor::new(vec![tokens.len(), self.dim], data)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, detail: String| {
            Error::format("embeddings", format!("line {line}: {detail}"))
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "missing COUNT DIM header".into()))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(1, format!("bad header {header:?}: {e}")))?;
        let [count, dim] = nums[..] else {
            return Err(bad(1, format!("header {header:?} must be COUNT DIM")));
        };
        let mut table = Self::new(dim)?;
        for (i, line) in lines {
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap();
            let vector: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(i + 1, format!("{e}")))?;
            if vector.len() != dim {
                return Err(bad(
                    i + 1,
                    format!("{word:?} has {} values, expected {dim}", vector.len()),
                ));
            }
            table.insert(word, vector)?;
        }
        if table.len() != count {
            return Err(Error::format(
                "embeddings",
                format!("header promises {count} words, found {}", table.len()),
            ));
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.len(), self.dim);
        for w in &self.words {
            s.push_str(w);
            for x in &self.vectors[w] {
                let _ = write!(s, " {x}");
            }
            s.push('\n');
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&crate::io::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_text().as_bytes())
    }
}

/// Uniform draw in `[-OOV_RANGE, OOV_RANGE]^dim` seeded by a hash of `word`.
pub fn oov_vector(word: &str, dim: usize) -> Vec<f64> {
    let digest = Sha256::digest(word.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(digest.into());
    (0..dim)
        .map(|_| rng.random_range(-OOV_RANGE..=OOV_RANGE))
        .collect()
}
