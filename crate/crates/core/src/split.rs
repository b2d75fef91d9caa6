use std::ops::Range;

/// Contiguous balanced split of `len` items into `parts` pieces: the first
/// `len % parts` pieces get one extra item.
pub fn balanced_range(len: usize, parts: usize, index: usize) -> Range<usize> {
    debug_assert!(parts >= 1 && index < parts);
    let base = len / parts;
    let rem = len % parts;
    let start = index * base + index.min(rem);
    let count = base + usize::from(index < rem);
    start..start + count
}

/// Inverse of [`balanced_range`]: the piece containing `item`.
pub fn balanced_owner(len: usize, parts: usize, item: usize) -> usize {
    debug_assert!(item < len);
    let base = len / parts;
    let rem = len % parts;
    let wide = rem * (base + 1);
    if item < wide {
        item / (base + 1)
    } else {
        rem + (item - wide) / base
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_into_four() {
        let ranges: Vec<_> = (0..4).map(|i| balanced_range(10, 4, i)).collect();
        assert_eq!(ranges, vec![0..3, 3..6, 6..8, 8..10]);
    }

    #[test]
    fn owner_matches_ranges() {
        for len in 1..40 {
            for parts in 1..=len {
                for item in 0..len {
                    let owner = balanced_owner(len, parts, item);
                    assert!(balanced_range(len, parts, owner).contains(&item));
                }
            }
        }
    }
}
