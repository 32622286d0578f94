//! Fan-out helpers for the data-parallel inner loops.
//!
//! With the `parallel` feature (default) and `parallel == true` the closures
//! run on rayon's global pool; otherwise they run inline. Output order is
//! identical either way, so callers stay byte-deterministic.

#[allow(unused_variables)]
pub(crate) fn map_collect<T, U, F>(items: &[T], parallel: bool, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return items.par_iter().map(&f).collect();
    }
    items.iter().map(f).collect()
}

#[allow(unused_variables)]
pub(crate) fn map_range<U, F>(n: usize, parallel: bool, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(&f).collect();
    }
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u32> = (0..1000).collect();
        let doubled = map_collect(&items, true, |x| x * 2);
        assert_eq!(doubled, (0..1000).map(|x| x * 2).collect::<Vec<_>>());
        let seq = map_collect(&items, false, |x| x * 2);
        assert_eq!(doubled, seq);
    }

    #[test]
    fn range_matches_iter() {
        assert_eq!(map_range(10, true, |i| i * i), map_range(10, false, |i| i * i));
    }
}
