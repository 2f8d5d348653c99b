//! Row-major sample matrices and epoch iteration.

use alloc::vec::Vec;

use super::rng::Rng;

/// `n` samples of dimension `dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn zeros(n: usize, dim: usize) -> Batch {
        Batch {
            n,
            dim,
            data: alloc::vec![0.0; n * dim],
        }
    }

    pub fn from_vec(data: Vec<f64>, dim: usize) -> Batch {
        assert!(dim > 0 && data.len().is_multiple_of(dim));
        Batch {
            n: data.len() / dim,
            dim,
            data,
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Batch {
        let dim = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim);
            data.extend_from_slice(r);
        }
        Batch {
            n: rows.len(),
            dim,
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Per-coordinate sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = alloc::vec![0.0; self.dim];
        for r in self.rows() {
            for (mi, xi) in m.iter_mut().zip(r) {
                *mi += xi;
            }
        }
        for mi in &mut m {
            *mi /= self.n as f64;
        }
        m
    }

    /// Per-coordinate sample variance (population convention).
    pub fn var(&self) -> Vec<f64> {
        let m = self.mean();
        let mut v = alloc::vec![0.0; self.dim];
        for r in self.rows() {
            for d in 0..self.dim {
                let c = r[d] - m[d];
                v[d] += c * c;
            }
        }
        for vi in &mut v {
            *vi /= self.n as f64;
        }
        v
    }

    /// Sample covariance between coordinates `a` and `b`.
    pub fn cov(&self, a: usize, b: usize) -> f64 {
        let m = self.mean();
        let mut acc = 0.0;
        for r in self.rows() {
            acc += (r[a] - m[a]) * (r[b] - m[b]);
        }
        acc / self.n as f64
    }
}

/// One epoch of shuffled minibatches: a fresh permutation per call, every
/// sample appearing exactly once, the final batch possibly smaller.
pub fn batches<'a>(data: &'a Batch, batch_size: usize, rng: &mut Rng) -> Batches<'a> {
    assert!(batch_size > 0);
    Batches {
        data,
        order: rng.permutation(data.len()),
        batch_size,
        pos: 0,
    }
}

pub struct Batches<'a> {
    data: &'a Batch,
    order: Vec<u32>,
    batch_size: usize,
    pos: usize,
}

impl<'a> Iterator for Batches<'a> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let mut out = Batch::zeros(end - self.pos, self.data.dim());
        for (k, &i) in self.order[self.pos..end].iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.data.row(i as usize));
        }
        self.pos = end;
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partitions_with_ragged_tail() {
        let data = Batch::from_vec((0..10).map(|i| i as f64).collect(), 1);
        let mut rng = Rng::new(0);
        let sizes: Vec<usize> = batches(&data, 4, &mut rng).map(|b| b.len()).collect();
        assert_eq!(sizes, alloc::vec![4, 4, 2]);
    }

    #[test]
    fn epoch_covers_every_sample_once() {
        let data = Batch::from_vec((0..23).map(|i| i as f64).collect(), 1);
        let mut rng = Rng::new(1);
        let mut seen: Vec<f64> = batches(&data, 5, &mut rng)
            .flat_map(|b| b.as_slice().to_vec())
            .collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect: Vec<f64> = (0..23).map(|i| i as f64).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn epochs_are_reshuffled() {
        let data = Batch::from_vec((0..64).map(|i| i as f64).collect(), 1);
        let mut rng = Rng::new(2);
        let first: Vec<f64> = batches(&data, 64, &mut rng).next().unwrap().as_slice().to_vec();
        let second: Vec<f64> = batches(&data, 64, &mut rng).next().unwrap().as_slice().to_vec();
        assert_ne!(first, second);
    }
}
