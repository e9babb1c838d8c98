/// All ordered frame pairs `1 <= p1 < p2 <= F`, lexicographic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSet {
    frames: usize,
    pairs: Vec<(usize, usize)>,
    first: Vec<usize>,
    second: Vec<usize>,
}

impl PairSet {
    pub fn new(frames: usize) -> Self {
        let mut pairs = Vec::with_capacity(frames * frames.saturating_sub(1) / 2);
        for p1 in 1..=frames {
            for p2 in p1 + 1..=frames {
                pairs.push((p1, p2));
            }
        }
        let first = pairs.iter().map(|p| p.0 - 1).collect();
        let second = pairs.iter().map(|p| p.1 - 1).collect();
        Self {
            frames,
            pairs,
            first,
            second,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// One-based pairs.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Zero-based index of each pair's earlier frame.
    pub(crate) fn first_rows(&self) -> &[usize] {
        &self.first
    }

    pub(crate) fn second_rows(&self) -> &[usize] {
        &self.second
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_small() {
        assert_eq!(PairSet::new(3).pairs(), &[(1, 2), (1, 3), (2, 3)]);
        assert_eq!(PairSet::new(2).pairs(), &[(1, 2)]);
        assert!(PairSet::new(1).is_empty());
    }

    #[test]
    fn cardinality_and_order() {
        for f in 2..=20 {
            let set = PairSet::new(f);
            assert_eq!(set.len(), f * (f - 1) / 2);
            assert!(set.pairs().iter().all(|&(a, b)| 1 <= a && a < b && b <= f));
            assert!(set.pairs().windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(PairSet::new(16).len(), 120);
    }
}
