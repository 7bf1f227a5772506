//! Global image similarity and the pair schedule derived from it.

use std::io::{Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("descriptor {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed descriptor file: {0}")]
    Format(String),
}

/// Symmetric `n x n` matrix with entries in `[0, 1]` and unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`, clamping to `[0, 1]`. Diagonal entries stay 1.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        if i == j {
            return;
        }
        let v = value.clamp(0.0, 1.0);
        self.values[i * self.n + j] = v;
        self.values[j * self.n + i] = v;
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| self.get(i, j).to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Inner products of the unit-normalized descriptors, negatives floored at 0.
pub fn similarity_from_descriptors(descriptors: &[Vec<f32>]) -> Result<SimilarityMatrix, SimilarityError> {
    let n = descriptors.len();
    let dim = descriptors.first().map_or(0, Vec::len);
    let mut unit = Vec::with_capacity(n);
    for (index, d) in descriptors.iter().enumerate() {
        if d.len() != dim {
            return Err(SimilarityError::DimensionMismatch { index, expected: dim, found: d.len() });
        }
        let norm = d.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        unit.push(d.iter().map(|&v| f64::from(v) * scale).collect::<Vec<f64>>());
    }
    let mut m = SimilarityMatrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            m.set(i, j, unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum());
        }
    }
    Ok(m)
}

/// Co-visibility similarity `|Vi ∩ Vj| / sqrt(|Vi| |Vj|)`, where `Vi` is the
/// sorted set of point ids seen by view `i`. This is the cosine of the
/// visibility indicator vectors.
pub fn similarity_from_visibility(visible: &[Vec<u32>]) -> SimilarityMatrix {
    let n = visible.len();
    let mut m = SimilarityMatrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&visible[i], &visible[j]);
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let shared = sorted_intersection(a, b);
            m.set(i, j, shared as f64 / ((a.len() * b.len()) as f64).sqrt());
        }
    }
    m
}

fn sorted_intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Unordered pairs `(i, j)`, `i < j`, with similarity above `min_similarity`,
/// most similar first; ties in index order.
pub fn ordered_pairs(sim: &SimilarityMatrix, min_similarity: f64) -> Vec<(u32, u32)> {
    let n = sim.len();
    let mut pairs: Vec<(u32, u32)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i as u32, j as u32)))
        .filter(|&(i, j)| sim.get(i as usize, j as usize) > min_similarity)
        .collect();
    pairs.sort_by(|a, b| {
        sim.get(b.0 as usize, b.1 as usize)
            .total_cmp(&sim.get(a.0 as usize, a.1 as usize))
            .then(a.cmp(b))
    });
    pairs
}

const BINARY_MAGIC: &[u8; 8] = b"PGGDES01";

/// Global descriptors as a JSON array of equal-length arrays.
pub fn read_descriptors_json<R: Read>(input: R) -> Result<Vec<Vec<f32>>, SimilarityError> {
    serde_json::from_reader(input).map_err(|e| SimilarityError::Format(e.to_string()))
}

pub fn write_descriptors_json<W: Write>(descriptors: &[Vec<f32>], out: W) -> Result<(), SimilarityError> {
    serde_json::to_writer(out, descriptors).map_err(|e| SimilarityError::Format(e.to_string()))
}

/// Binary layout: magic `PGGDES01`, `u32` count, `u32` dimension, then
/// `count * dimension` little-endian `f32` values.
pub fn write_descriptors_binary<W: Write>(descriptors: &[Vec<f32>], mut out: W) -> Result<(), SimilarityError> {
    let dim = descriptors.first().map_or(0, Vec::len);
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&(descriptors.len() as u32).to_le_bytes())?;
    out.write_all(&(dim as u32).to_le_bytes())?;
    for (index, d) in descriptors.iter().enumerate() {
        if d.len() != dim {
            return Err(SimilarityError::DimensionMismatch { index, expected: dim, found: d.len() });
        }
        for v in d {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_descriptors_binary<R: Read>(mut input: R) -> Result<Vec<Vec<f32>>, SimilarityError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(SimilarityError::Format("bad magic".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let n = u32::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let dim = u32::from_le_bytes(word) as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut d = Vec::with_capacity(dim);
        for _ in 0..dim {
            input.read_exact(&mut word)?;
            d.push(f32::from_le_bytes(word));
        }
        out.push(d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn descriptor_similarity() {
        let d = vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![0.0, 3.0, 0.0], vec![0.6, 0.8, 0.0], vec![-1.0, 0.0, 0.0]];
        let m = similarity_from_descriptors(&d).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert!((m.get(0, 3) - 0.6).abs() < 1e-7);
        assert!((m.get(2, 3) - 0.8).abs() < 1e-7);
        assert_eq!(m.get(0, 4), 0.0);
        assert_eq!(m.get(4, 4), 1.0);
        assert!(matches!(
            similarity_from_descriptors(&[vec![1.0], vec![1.0, 2.0]]),
            Err(SimilarityError::DimensionMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn visibility_similarity() {
        let v = vec![vec![0, 1, 2, 3], vec![0, 1, 2, 3], vec![2, 3, 4, 5], vec![6, 7]];
        let m = similarity_from_visibility(&v);
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(0, 2), 0.5);
        assert_eq!(m.get(0, 3), 0.0);
    }

    #[test]
    fn pair_ordering() {
        let mut m = SimilarityMatrix::identity(3);
        m.set(0, 1, 0.9);
        m.set(0, 2, 0.5);
        m.set(1, 2, 0.3);
        assert_eq!(ordered_pairs(&m, 0.4), vec![(0, 1), (0, 2)]);
        assert!(ordered_pairs(&m, 1.0).is_empty());
    }

    #[test]
    fn file_round_trips() {
        let d = vec![vec![0.5f32, -1.25, 3.0], vec![0.0, 1e-3, 7.5]];
        let mut bin = Vec::new();
        write_descriptors_binary(&d, &mut bin).unwrap();
        assert_eq!(read_descriptors_binary(bin.as_slice()).unwrap(), d);
        let mut json = Vec::new();
        write_descriptors_json(&d, &mut json).unwrap();
        assert_eq!(read_descriptors_json(json.as_slice()).unwrap(), d);
    }

    proptest! {
        #[test]
        fn ordered_pairs_filtered_and_sorted(vals in proptest::collection::vec(0.0f64..1.0, 28), t in 0.0f64..1.0) {
            let mut m = SimilarityMatrix::identity(8);
            let mut k = 0;
            for i in 0..8 {
                for j in i + 1..8 {
                    m.set(i, j, vals[k]);
                    k += 1;
                }
            }
            let pairs = ordered_pairs(&m, t);
            for w in pairs.windows(2) {
                prop_assert!(m.get(w[0].0 as usize, w[0].1 as usize) >= m.get(w[1].0 as usize, w[1].1 as usize));
            }
            for &(i, j) in &pairs {
                prop_assert!(m.get(i as usize, j as usize) > t);
            }
            let expected = vals.iter().filter(|&&v| v > t).count();
            prop_assert_eq!(pairs.len(), expected);
            for i in 0..8 {
                for j in 0..8 {
                    prop_assert_eq!(m.get(i, j), m.get(j, i));
                }
            }
        }
    }
}
