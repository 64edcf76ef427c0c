//! Exact inference over a linear-chain lattice of log-potentials.
//!
//! A [`LogLattice`] stores `log ψ(t_{i-1}, t_i, w)` for every position.
//! Position 0 has a single previous state (the beginning-of-sentence
//! context), so its block has `k` entries; every later position has `k * k`
//! entries indexed `[prev][cur]`. The flat layout is shared by
//! [`Posteriors::edge_marginals`], which is also the gradient of `log Z`
//! with respect to the lattice.

use crate::error::{Error, Result};

/// Log-score used for hard exclusions. Finite, so all arithmetic stays total.
pub const SENTINEL: f64 = -1e9;

/// Largest number of paths [`brute_force_log_partition`] will enumerate.
pub const MAX_ENUMERATION: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct LogLattice {
    n: usize,
    k: usize,
    scores: Vec<f64>,
}

#[inline]
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

impl LogLattice {
    pub fn flat_len(n: usize, k: usize) -> usize {
        k + n.saturating_sub(1) * k * k
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        assert!(n >= 1 && k >= 1, "lattice needs n >= 1 and k >= 1");
        LogLattice {
            n,
            k,
            scores: vec![0.0; Self::flat_len(n, k)],
        }
    }

    pub fn from_flat(n: usize, k: usize, scores: Vec<f64>) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::InvalidLattice(format!("empty shape n={n}, k={k}")));
        }
        if scores.len() != Self::flat_len(n, k) {
            return Err(Error::InvalidLattice(format!(
                "expected {} scores for n={n}, k={k}, got {}",
                Self::flat_len(n, k),
                scores.len()
            )));
        }
        Ok(LogLattice { n, k, scores })
    }

    /// Builds a lattice from a closure `f(i, prev, cur)` where `prev` is
    /// `None` at position 0.
    pub fn from_fn(n: usize, k: usize, mut f: impl FnMut(usize, Option<usize>, usize) -> f64) -> Self {
        let mut lat = LogLattice::zeros(n, k);
        for t in 0..k {
            lat.scores[t] = f(0, None, t);
        }
        for i in 1..n {
            for a in 0..k {
                for b in 0..k {
                    let idx = lat.index(i, Some(a), b);
                    lat.scores[idx] = f(i, Some(a), b);
                }
            }
        }
        lat
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_tags(&self) -> usize {
        self.k
    }

    pub fn flat(&self) -> &[f64] {
        &self.scores
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.scores
    }

    /// Number of previous states at position `i`.
    pub fn prev_count(&self, i: usize) -> usize {
        if i == 0 {
            1
        } else {
            self.k
        }
    }

    #[inline]
    pub fn index(&self, i: usize, prev: Option<usize>, cur: usize) -> usize {
        match prev {
            None => {
                debug_assert_eq!(i, 0);
                cur
            }
            Some(a) => {
                debug_assert!(i >= 1);
                self.k + (i - 1) * self.k * self.k + a * self.k + cur
            }
        }
    }

    #[inline]
    pub fn score(&self, i: usize, prev: Option<usize>, cur: usize) -> f64 {
        self.scores[self.index(i, prev, cur)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, prev: Option<usize>, cur: usize, value: f64) {
        let idx = self.index(i, prev, cur);
        self.scores[idx] = value;
    }

    /// Scores of position `i >= 1` as a row-major `k x k` block.
    #[inline]
    pub fn block(&self, i: usize) -> &[f64] {
        let start = self.k + (i - 1) * self.k * self.k;
        &self.scores[start..start + self.k * self.k]
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(pos) = self.scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidLattice(format!(
                "non-finite score {} at flat index {pos}",
                self.scores[pos]
            )));
        }
        Ok(())
    }

    /// Unnormalized log score of a complete tagging.
    pub fn path_score(&self, tags: &[usize]) -> Result<f64> {
        if tags.len() != self.n {
            return Err(Error::Shape(format!(
                "tag sequence has length {}, lattice has {}",
                tags.len(),
                self.n
            )));
        }
        if let Some(&bad) = tags.iter().find(|&&t| t >= self.k) {
            return Err(Error::InvalidTag {
                index: bad,
                size: self.k,
            });
        }
        let mut total = self.score(0, None, tags[0]);
        for i in 1..self.n {
            total += self.score(i, Some(tags[i - 1]), tags[i]);
        }
        Ok(total)
    }
}

/// Forward log-messages: `alpha[i * k + t]` is the log-sum of all prefixes
/// ending in tag `t` at position `i`.
fn forward(lat: &LogLattice) -> Vec<f64> {
    let (n, k) = (lat.n, lat.k);
    let mut alpha = vec![0.0; n * k];
    alpha[..k].copy_from_slice(&lat.scores[..k]);
    let mut buf = vec![0.0; k];
    for i in 1..n {
        let block = lat.block(i);
        let (prev, cur) = alpha.split_at_mut(i * k);
        let prev = &prev[(i - 1) * k..];
        for b in 0..k {
            for a in 0..k {
                buf[a] = prev[a] + block[a * k + b];
            }
            cur[b] = log_sum_exp(&buf);
        }
    }
    alpha
}

fn backward(lat: &LogLattice) -> Vec<f64> {
    let (n, k) = (lat.n, lat.k);
    let mut beta = vec![0.0; n * k];
    let mut buf = vec![0.0; k];
    for i in (0..n - 1).rev() {
        let block = lat.block(i + 1);
        let (cur, next) = beta.split_at_mut((i + 1) * k);
        let cur = &mut cur[i * k..];
        let next = &next[..k];
        for a in 0..k {
            for b in 0..k {
                buf[b] = block[a * k + b] + next[b];
            }
            cur[a] = log_sum_exp(&buf);
        }
    }
    beta
}

/// `log Z`: log-sum over all `k^n` taggings, by the forward recursion.
pub fn log_partition(lat: &LogLattice) -> Result<f64> {
    lat.validate()?;
    let alpha = forward(lat);
    Ok(log_sum_exp(&alpha[(lat.n - 1) * lat.k..]))
}

/// Exhaustive enumeration of every tagging. Reference for [`log_partition`].
pub fn brute_force_log_partition(lat: &LogLattice) -> Result<f64> {
    lat.validate()?;
    let count = (lat.k as f64).powi(lat.n as i32);
    if count > MAX_ENUMERATION {
        return Err(Error::TooLarge(count));
    }
    let mut scores = Vec::with_capacity(count as usize);
    for_each_path(lat.n, lat.k, |path| scores.push(lat.path_score(path).unwrap()));
    Ok(log_sum_exp(&scores))
}

/// Visits all `k^n` tag sequences in lexicographic order.
pub fn for_each_path(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut path = vec![0usize; n];
    loop {
        visit(&path);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            path[i] += 1;
            if path[i] < k {
                break;
            }
            path[i] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    pub n: usize,
    pub k: usize,
    /// `[n][k]`, row-major.
    pub node_marginals: Vec<f64>,
    /// Same flat layout as [`LogLattice`].
    pub edge_marginals: Vec<f64>,
    pub log_z: f64,
}

impl Posteriors {
    pub fn node(&self, i: usize, t: usize) -> f64 {
        self.node_marginals[i * self.k + t]
    }

    pub fn edge(&self, i: usize, prev: Option<usize>, cur: usize) -> f64 {
        match prev {
            None => self.edge_marginals[cur],
            Some(a) => self.edge_marginals[self.k + (i - 1) * self.k * self.k + a * self.k + cur],
        }
    }
}

/// Forward-backward node and edge marginals together with `log Z`.
pub fn posteriors(lat: &LogLattice) -> Result<Posteriors> {
    lat.validate()?;
    let (n, k) = (lat.n, lat.k);
    let alpha = forward(lat);
    let beta = backward(lat);
    let log_z = log_sum_exp(&alpha[(n - 1) * k..]);

    let node_marginals: Vec<f64> = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a + b - log_z).exp())
        .collect();

    let mut edge_marginals = vec![0.0; lat.scores.len()];
    edge_marginals[..k].copy_from_slice(&node_marginals[..k]);
    for i in 1..n {
        let block = lat.block(i);
        let start = k + (i - 1) * k * k;
        let out = &mut edge_marginals[start..start + k * k];
        let prev = &alpha[(i - 1) * k..i * k];
        let next = &beta[i * k..(i + 1) * k];
        for a in 0..k {
            for b in 0..k {
                out[a * k + b] = (prev[a] + block[a * k + b] + next[b] - log_z).exp();
            }
        }
    }

    Ok(Posteriors {
        n,
        k,
        node_marginals,
        edge_marginals,
        log_z,
    })
}

/// Highest-scoring tagging and its unnormalized log score.
///
/// Ties go to the lowest tag index, both for the final tag and at every
/// backpointer, which makes the result the reverse-lexicographically
/// smallest optimal path.
pub fn viterbi(lat: &LogLattice) -> Result<(Vec<usize>, f64)> {
    lat.validate()?;
    let (n, k) = (lat.n, lat.k);
    let mut delta = lat.scores[..k].to_vec();
    let mut next = vec![0.0; k];
    let mut backptr = vec![0usize; n * k];
    for i in 1..n {
        let block = lat.block(i);
        for b in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for a in 0..k {
                let s = delta[a] + block[a * k + b];
                if s > best {
                    best = s;
                    arg = a;
                }
            }
            next[b] = best;
            backptr[i * k + b] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for (t, &d) in delta.iter().enumerate() {
        if d > best {
            best = d;
            last = t;
        }
    }
    let mut tags = vec![0; n];
    tags[n - 1] = last;
    for i in (1..n).rev() {
        tags[i - 1] = backptr[i * k + tags[i]];
    }
    Ok((tags, best))
}

/// `log p(tags | w)`, always `<= 0`.
pub fn sequence_log_prob(lat: &LogLattice, tags: &[usize]) -> Result<f64> {
    let score = lat.path_score(tags)?;
    let log_z = log_partition(lat)?;
    Ok((score - log_z).min(0.0))
}
