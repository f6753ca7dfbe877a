//! Index-ordered parallel map. With the `parallel` feature the work is spread
//! over the current rayon pool; without it, or through
//! [`map_indexed_sequential`], it runs on the calling thread. Results always
//! come back in index order, so merges are independent of the schedule.

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_sequential(n, f)
}

pub fn map_indexed_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_preserved() {
        let a = map_indexed(1000, |i| i * i);
        let b = map_indexed_sequential(1000, |i| i * i);
        assert_eq!(a, b);
    }
}
