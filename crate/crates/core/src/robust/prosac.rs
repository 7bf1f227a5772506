//! Progressive sampling from a quality-ordered correspondence list.

use rand::seq::index::sample as sample_indices;
use rand::Rng;

/// Iteration count after which sampling from the full set would have drawn
/// every possible sample as often as plain uniform sampling.
pub const GROWTH_HORIZON: f64 = 200_000.0;

/// Samples positions in a quality ordering: draws start from the top of the
/// list and the sampled prefix grows on the standard schedule until it covers
/// the whole list, after which sampling is uniform.
#[derive(Debug, Clone)]
pub struct ProsacSampler {
    total: usize,
    m: usize,
    n: usize,
    t_n: f64,
    t_n_prime: f64,
    iteration: usize,
}

impl ProsacSampler {
    pub fn new(total: usize, sample_size: usize) -> Self {
        assert!(sample_size >= 1 && total >= sample_size, "need at least {sample_size} points");
        let mut t_n = GROWTH_HORIZON;
        for i in 0..sample_size {
            t_n *= (sample_size - i) as f64 / (total - i) as f64;
        }
        Self { total, m: sample_size, n: sample_size, t_n, t_n_prime: 1.0, iteration: 0 }
    }

    /// Current prefix size.
    pub fn prefix(&self) -> usize {
        self.n
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Next sample as positions into the ordering, all distinct.
    pub fn next_sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<usize> {
        self.iteration += 1;
        let t = self.iteration as f64;
        if t > self.t_n_prime && self.n < self.total {
            let t_next = self.t_n * (self.n + 1) as f64 / (self.n + 1 - self.m) as f64;
            self.t_n_prime += (t_next - self.t_n).ceil();
            self.t_n = t_next;
            self.n += 1;
        }
        if self.t_n_prime < t {
            sample_indices(rng, self.n, self.m).into_vec()
        } else {
            let mut s = sample_indices(rng, self.n - 1, self.m - 1).into_vec();
            s.push(self.n - 1);
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_sample_is_the_top() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ProsacSampler::new(100, 5);
        let mut first = s.next_sample(&mut rng);
        first.sort_unstable();
        assert_eq!(first, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn samples_distinct_and_prefix_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ProsacSampler::new(50, 5);
        let mut last = 0;
        for _ in 0..5000 {
            let mut x = s.next_sample(&mut rng);
            assert!(x.iter().all(|&i| i < s.prefix()));
            x.sort_unstable();
            x.dedup();
            assert_eq!(x.len(), 5);
            assert!(s.prefix() >= last);
            last = s.prefix();
        }
    }

    #[test]
    fn converges_to_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20;
        let mut s = ProsacSampler::new(n, 5);
        while s.prefix() < n || s.t_n_prime >= (s.iteration + 1) as f64 {
            s.next_sample(&mut rng);
        }
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            for i in s.next_sample(&mut rng) {
                counts[i] += 1;
            }
        }
        let expected = (draws * 5) as f64 / n as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 19 degrees of freedom, 0.999 quantile.
        assert!(chi2 < 43.82, "{chi2}");
    }
}
