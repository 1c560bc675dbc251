use alloc::vec::Vec;

use rand::Rng;

use crate::error::{bail, Result};

/// Number of raw byte ids.
pub const BYTE_VOCAB: usize = 256;
/// Marks the start of the stream.
pub const BOS: usize = 256;
/// Marks the end of the stream.
pub const EOS: usize = 257;
pub const VOCAB_SIZE: usize = 258;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
}

/// A byte-level token stream split into a training prefix and a disjoint
/// validation suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    tokens: Vec<usize>,
    train_end: usize,
}

impl Corpus {
    /// Tokenizes `bytes` as `BOS b0 b1 ... EOS` and reserves the final
    /// `valid_fraction` of the stream for validation.
    pub fn from_bytes(bytes: &[u8], valid_fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&valid_fraction) {
            bail!(
                Config,
                "valid_fraction must lie in [0, 1), got {}",
                valid_fraction
            );
        }
        let mut tokens = Vec::with_capacity(bytes.len() + 2);
        tokens.push(BOS);
        tokens.extend(bytes.iter().map(|&b| b as usize));
        tokens.push(EOS);
        let n_valid = libm::floor(tokens.len() as f64 * valid_fraction) as usize;
        let train_end = tokens.len() - n_valid;
        if train_end < 2 {
            bail!(Input, "corpus leaves fewer than 2 training tokens");
        }
        if n_valid == 1 {
            bail!(Input, "validation split of a single token has no targets");
        }
        Ok(Self { tokens, train_end })
    }

    pub fn tokens(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.tokens[..self.train_end],
            Split::Valid => &self.tokens[self.train_end..],
        }
    }

    /// Random `(inputs, targets)` windows of up to `seq_len` tokens from
    /// `split`; targets are inputs shifted by one.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        split: Split,
        seq_len: usize,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        let s = self.tokens(split);
        if s.len() < 2 {
            bail!(Input, "split has fewer than 2 tokens");
        }
        let len = seq_len.min(s.len() - 1);
        let starts = s.len() - len;
        Ok((0..batch)
            .map(|_| {
                let i = rng.random_range(0..starts);
                (s[i..i + len].to_vec(), s[i + 1..i + 1 + len].to_vec())
            })
            .collect())
    }
}

/// Teacher-forced windows of `seq_len` tokens covering every target of
/// `tokens` exactly once. Each item is `(inputs, targets, first_scored)`;
/// the last window is shifted back to full length when possible and scores
/// only the targets from `first_scored` on.
pub(crate) fn eval_windows(tokens: &[usize], seq_len: usize) -> Vec<(&[usize], &[usize], usize)> {
    let n_targets = tokens.len().saturating_sub(1);
    let len = seq_len.min(n_targets);
    let mut out = Vec::new();
    let mut i = 0;
    while i < n_targets {
        let start = i.min(n_targets - len);
        out.push((
            &tokens[start..start + len],
            &tokens[start + 1..start + 1 + len],
            i - start,
        ));
        i = start + len;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn splits_are_disjoint_and_cover_stream() {
        let c = Corpus::from_bytes(b"abcdefghij", 0.25).unwrap();
        let (t, v) = (c.tokens(Split::Train), c.tokens(Split::Valid));
        assert_eq!(t.len() + v.len(), 12);
        assert_eq!(v.len(), 3);
        assert_eq!(t[0], BOS);
        assert_eq!(*v.last().unwrap(), EOS);
    }

    #[test]
    fn batches_are_shifted_windows() {
        let c = Corpus::from_bytes(b"hello world", 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (x, y) in c.sample_batch(Split::Train, 4, 10, &mut rng).unwrap() {
            assert_eq!(x.len(), 4);
            assert_eq!(&x[1..], &y[..3]);
        }
    }

    #[test]
    fn eval_windows_cover_each_target_once() {
        let toks: Vec<usize> = (0..11).collect();
        let w = eval_windows(&toks, 4);
        let targets: Vec<usize> = w
            .iter()
            .flat_map(|(_, t, k)| t[*k..].iter().copied())
            .collect();
        assert_eq!(targets, (1..11).collect::<Vec<_>>());
        assert!(w.iter().all(|(x, _, _)| x.len() == 4));
        assert_eq!(w.last().unwrap().2, 2);
    }

    #[test]
    fn bad_fraction() {
        assert!(Corpus::from_bytes(b"abc", 1.0).is_err());
        assert!(Corpus::from_bytes(b"", 0.0).is_ok());
    }
}
