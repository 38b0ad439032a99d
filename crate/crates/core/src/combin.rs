//! Lexicographic combinadic enumeration of k-subsets of `0..n`.
//!
//! Subsets are ranked in lexicographic order of their strictly increasing
//! index tuples, so any contiguous rank range can be unranked and walked
//! independently. This is what lets the exact U-statistic split its sum
//! into a fixed number of chunks.

/// Binomial coefficient, `None` on overflow of `u128`.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc * (n - k + i) / i stays integral at every step
        acc = acc.checked_mul((n - k + i) as u128)? / i as u128;
    }
    Some(acc)
}

/// Binomial coefficient as `f64`, for sizes that overflow integers.
pub fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (1..=k).fold(1.0, |acc, i| acc * (n - k + i) as f64 / i as f64)
}

/// The `rank`-th k-subset of `0..n` in lexicographic order.
///
/// Panics if `rank >= C(n, k)`.
pub fn unrank(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let total = binomial(n, k).expect("binomial overflow");
    assert!(rank < total, "rank {rank} out of range for C({n}, {k})");
    let mut out = Vec::with_capacity(k);
    let mut c = 0usize;
    for slot in 0..k {
        loop {
            // number of subsets whose `slot`-th element is `c`
            let count = binomial(n - c - 1, k - slot - 1).unwrap();
            if rank < count {
                out.push(c);
                c += 1;
                break;
            }
            rank -= count;
            c += 1;
        }
    }
    out
}

/// Advance `tuple` to its lexicographic successor. Returns `false` when
/// `tuple` was the last subset (it is left unchanged then).
#[inline]
pub fn next_combination(tuple: &mut [usize], n: usize) -> bool {
    let k = tuple.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if tuple[i] < n - k + i {
            tuple[i] += 1;
            for j in i + 1..k {
                tuple[j] = tuple[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Iterator over all k-subsets of `0..n`, lexicographic.
pub struct Combinations {
    n: usize,
    current: Vec<usize>,
    remaining: u128,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        let remaining = binomial(n, k).unwrap_or(u128::MAX);
        Self {
            n,
            current: (0..k).collect(),
            remaining,
        }
    }

    /// Subsets with ranks in `start..end`.
    pub fn range(n: usize, k: usize, start: u128, end: u128) -> Self {
        let total = binomial(n, k).unwrap_or(u128::MAX);
        let end = end.min(total);
        if start >= end {
            return Self {
                n,
                current: Vec::new(),
                remaining: 0,
            };
        }
        Self {
            n,
            current: unrank(n, k, start),
            remaining: end - start,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.remaining == 0 {
            return None;
        }
        let out = self.current.clone();
        self.remaining -= 1;
        if self.remaining > 0 {
            next_combination(&mut self.current, self.n);
        }
        Some(out)
    }
}

/// Split `0..total` into `chunks` contiguous rank ranges of near-equal size.
pub fn chunk_bounds(total: u128, chunks: usize) -> Vec<(u128, u128)> {
    let chunks = chunks.max(1) as u128;
    (0..chunks)
        .map(|c| (total * c / chunks, total * (c + 1) / chunks))
        .filter(|(a, b)| a < b)
        .collect()
}
