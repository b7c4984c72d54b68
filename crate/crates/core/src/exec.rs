//! Execution mode for the data-parallel inner loops.
//!
//! Every parallel map collects its results in index order and all reductions
//! happen afterwards on one thread, so `Sequential` and `Parallel` produce
//! bit-identical output. Without the `parallel` feature both modes run
//! sequentially.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// `f(i)` for `i in 0..n`, in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Calls `f(i, row)` for each `width`-sized chunk of `out`.
    pub fn for_each_row<F>(self, out: &mut [f64], width: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if width == 0 {
            return;
        }
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                out.par_chunks_mut(width)
                    .enumerate()
                    .for_each(|(i, row)| f(i, row));
            }
            _ => out
                .chunks_mut(width)
                .enumerate()
                .for_each(|(i, row)| f(i, row)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        assert_eq!(Exec::Sequential.map(1000, f), Exec::Parallel.map(1000, f));

        let mut a = vec![0.0; 30];
        let mut b = vec![0.0; 30];
        let g = |i: usize, row: &mut [f64]| {
            row.iter_mut()
                .enumerate()
                .for_each(|(j, x)| *x = (i * 10 + j) as f64)
        };
        Exec::Sequential.for_each_row(&mut a, 3, g);
        Exec::Parallel.for_each_row(&mut b, 3, g);
        assert_eq!(a, b);
        assert_eq!(a[29], 92.0);
    }
}
