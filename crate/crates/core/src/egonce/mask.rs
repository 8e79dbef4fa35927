use crate::corpus::ActionTags;

/// Square boolean relation: `get(i, j)` is true when row `j` is a positive
/// for anchor `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveMask {
    size: usize,
    bits: Vec<bool>,
}

impl PositiveMask {
    pub fn identity(size: usize) -> Self {
        Self::from_fn(size, |i, j| i == j)
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                bits.push(f(i, j));
            }
        }
        Self { size, bits }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.size..(i + 1) * self.size]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.size, |i, j| self.get(j, i))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|i| (i + 1..self.size).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Number of positives per anchor row.
    pub fn positives_per_row(&self) -> Vec<usize> {
        (0..self.size)
            .map(|i| self.row(i).iter().filter(|&&b| b).count())
            .collect()
    }
}

/// `bits(i, j)` holds when rows `i` and `j` share a noun and a verb. Rows
/// without any noun or any verb are still their own positive.
pub fn build_positive_mask<'a, I>(tags: I) -> PositiveMask
where
    I: IntoIterator<Item = &'a ActionTags>,
{
    let tags: Vec<&ActionTags> = tags.into_iter().collect();
    PositiveMask::from_fn(tags.len(), |i, j| {
        tags[i].shares_action(tags[j]) || (i == j && tags[i].is_incomplete())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case() {
        let a = ActionTags::new(["tomato", "knife"], ["cut"]);
        let b = ActionTags::new(["tomato"], ["cut", "slice"]);
        let c = ActionTags::new(["door"], ["open"]);
        let m = build_positive_mask([&a, &b, &c]);
        assert!(m.get(0, 1) && m.get(1, 0));
        assert!(!m.get(0, 2) && !m.get(1, 2) && !m.get(2, 0));
        assert!((0..3).all(|i| m.get(i, i)));
    }

    #[test]
    fn disjoint_tags_give_identity() {
        let tags: Vec<_> = (0..5)
            .map(|i| ActionTags::new([format!("n{i}")], [format!("v{i}")]))
            .collect();
        assert_eq!(build_positive_mask(&tags), PositiveMask::identity(5));
    }

    #[test]
    fn identical_tags_give_full_mask() {
        let tags = vec![ActionTags::new(["cup"], ["take"]); 4];
        let m = build_positive_mask(&tags);
        assert!((0..4).all(|i| (0..4).all(|j| m.get(i, j))));
    }

    #[test]
    fn incomplete_rows_are_self_positive_only() {
        let tags = vec![
            ActionTags::new(["cup"], Vec::<String>::new()),
            ActionTags::new(["cup"], Vec::<String>::new()),
            ActionTags::default(),
        ];
        assert_eq!(build_positive_mask(&tags), PositiveMask::identity(3));
    }

    #[test]
    fn empty_input() {
        assert_eq!(build_positive_mask(&[]).size(), 0);
    }
}
