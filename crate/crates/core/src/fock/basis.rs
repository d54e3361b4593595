use crate::error::{Error, Result};

/// Number of ways to place `n` fermions on `l` sites.
pub fn hilbert_dimension(l: usize, n: usize) -> Result<usize> {
    if n > l {
        return Err(Error::InvalidArgument(format!(
            "particle count {n} exceeds site count {l}"
        )));
    }
    let k = n.min(l - n);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (l - i) as u128 / (i + 1) as u128;
    }
    usize::try_from(acc).map_err(|_| Error::InvalidArgument("dimension overflows usize".into()))
}

/// Occupation-number basis with a fixed particle count.
///
/// Site `i` is bit `i` of the state word. States are kept in increasing
/// integer order, so lookup is a binary search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockBasis {
    pub l: usize,
    pub n: usize,
    states: Vec<u64>,
}

impl FockBasis {
    pub fn new(l: usize, n: usize) -> Result<Self> {
        if l == 0 || l > 40 {
            return Err(Error::InvalidArgument(format!("site count {l} outside 1..=40")));
        }
        let dim = hilbert_dimension(l, n)?;
        let mut states = Vec::with_capacity(dim);
        if n == 0 {
            states.push(0);
        } else {
            // Gosper's hack walks n-bit words in increasing order.
            let mut s: u64 = (1u64 << n) - 1;
            let limit = 1u64 << l;
            while s < limit {
                states.push(s);
                let c = s & s.wrapping_neg();
                let r = s + c;
                s = (((r ^ s) >> 2) / c) | r;
            }
        }
        debug_assert_eq!(states.len(), dim);
        Ok(Self { l, n, states })
    }

    /// Half filling, `N = L / 2`; `L` must be even.
    pub fn half_filled(l: usize) -> Result<Self> {
        if l < 2 || l % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "half filling needs an even site count >= 2, got {l}"
            )));
        }
        Self::new(l, l / 2)
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn state(&self, k: usize) -> u64 {
        self.states[k]
    }

    pub fn index_of(&self, state: u64) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }

    pub fn occupied(state: u64, site: usize) -> bool {
        state >> site & 1 == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        assert_eq!(hilbert_dimension(12, 6).unwrap(), 924);
        assert_eq!(hilbert_dimension(14, 7).unwrap(), 3432);
        assert_eq!(hilbert_dimension(2, 1).unwrap(), 2);
        assert_eq!(hilbert_dimension(5, 0).unwrap(), 1);
        assert!(hilbert_dimension(3, 4).is_err());
    }

    #[test]
    fn basis_is_ordered_and_indexed() {
        for l in [2, 4, 6, 8, 10] {
            let b = FockBasis::half_filled(l).unwrap();
            assert_eq!(b.dim(), hilbert_dimension(l, l / 2).unwrap());
            for (k, &s) in b.states().iter().enumerate() {
                assert_eq!(s.count_ones() as usize, l / 2);
                assert_eq!(b.index_of(s), Some(k));
                if k > 0 {
                    assert!(b.states()[k - 1] < s);
                }
            }
        }
        assert!(FockBasis::half_filled(7).is_err());
    }
}
