//! Word vectors in the plain text format: a header line with the dimension,
//! then `word v1 .. vD` per line.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding file {0}: {1}")]
    Io(String, std::io::Error),
    #[error("embedding table line {line}: {reason}")]
    Format { line: usize, reason: String },
}

#[derive(Debug, Clone, Default)]
pub struct Embeddings {
    dim: usize,
    index: HashMap<String, usize>,
    words: Vec<String>,
    data: Vec<f32>,
}

impl Embeddings {
    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(EmbeddingError::Format {
            line: 1,
            reason: "missing dimension header".into(),
        })?;
        let dim: usize = header.trim().parse().map_err(|_| EmbeddingError::Format {
            line: 1,
            reason: format!("header `{}` is not a dimension", header.trim()),
        })?;
        if dim == 0 {
            return Err(EmbeddingError::Format {
                line: 1,
                reason: "dimension must be positive".into(),
            });
        }
        let mut table = Embeddings {
            dim,
            ..Default::default()
        };
        for (n, line) in lines {
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap_or_default().to_lowercase();
            let values: Result<Vec<f32>, _> = parts.map(str::parse::<f32>).collect();
            let values = values.map_err(|e| EmbeddingError::Format {
                line: n + 1,
                reason: e.to_string(),
            })?;
            if values.len() != dim {
                return Err(EmbeddingError::Format {
                    line: n + 1,
                    reason: format!("expected {dim} values, got {}", values.len()),
                });
            }
            if table.index.contains_key(&word) {
                continue;
            }
            table.index.insert(word.clone(), table.words.len());
            table.words.push(word);
            table.data.extend(values);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let text =
            fs::read_to_string(path).map_err(|e| EmbeddingError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
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

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Mean vector of the tokens; unknown tokens contribute zeros.
    pub fn mean(&self, tokens: &[String]) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.dim];
        if tokens.is_empty() {
            return acc;
        }
        for t in tokens {
            if let Some(v) = self.get(t) {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += f64::from(*x);
                }
            }
        }
        let n = tokens.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// `1 - cos(a, b)`, or 1.0 when either vector is zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "2\ncar 1 0\nseats 0 1\nleather 1 1\n";

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn parses_and_averages_with_oov_zeros() {
        let e = Embeddings::parse(TABLE).unwrap();
        assert_eq!((e.dim(), e.len()), (2, 3));
        assert_eq!(e.mean(&w("car seats")), vec![0.5, 0.5]);
        assert_eq!(e.mean(&w("car unknown")), vec![0.5, 0.0]);
    }

    #[test]
    fn distance_cases() {
        let e = Embeddings::parse(TABLE).unwrap();
        let d = cosine_distance(&e.mean(&w("car")), &e.mean(&w("car")));
        assert!(d.abs() < 1e-12);
        assert_eq!(cosine_distance(&e.mean(&w("car")), &e.mean(&w("seats"))), 1.0);
        assert_eq!(cosine_distance(&e.mean(&w("zzz")), &e.mean(&w("car"))), 1.0);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(Embeddings::parse("2\ncar 1\n").is_err());
        assert!(Embeddings::parse("x\n").is_err());
        assert!(Embeddings::parse("").is_err());
    }
}
