use std::collections::HashMap;
use std::ops::Deref;
use std::rc::Rc;

use super::KernelMatrix;

const CACHE_BYTES: usize = 256 << 20;

/// A kernel row, either borrowed from a dense kernel or shared from the cache.
pub(crate) enum Row<'a> {
    Borrowed(&'a [f64]),
    Shared(Rc<[f64]>),
}

impl Deref for Row<'_> {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        match self {
            Row::Borrowed(r) => r,
            Row::Shared(r) => r,
        }
    }
}

/// Least-recently-used cache of kernel rows for on-demand kernels.
pub(crate) struct RowCache<'a> {
    kernel: &'a dyn KernelMatrix,
    rows: HashMap<usize, (Rc<[f64]>, u64)>,
    capacity: usize,
    clock: u64,
}

impl<'a> RowCache<'a> {
    pub(crate) fn new(kernel: &'a dyn KernelMatrix) -> Self {
        let row_bytes = kernel.size().max(1) * std::mem::size_of::<f64>();
        RowCache {
            kernel,
            rows: HashMap::new(),
            capacity: (CACHE_BYTES / row_bytes).max(2),
            clock: 0,
        }
    }

    pub(crate) fn row(&mut self, i: usize) -> Row<'a> {
        if self.kernel.is_dense() {
            return match self.kernel.row(i) {
                std::borrow::Cow::Borrowed(r) => Row::Borrowed(r),
                std::borrow::Cow::Owned(v) => Row::Shared(v.into()),
            };
        }
        self.clock += 1;
        if let Some((row, stamp)) = self.rows.get_mut(&i) {
            *stamp = self.clock;
            return Row::Shared(row.clone());
        }
        if self.rows.len() >= self.capacity {
            let oldest = self
                .rows
                .iter()
                .min_by_key(|(_, (_, stamp))| *stamp)
                .map(|(&k, _)| k)
                .expect("cache is full");
            self.rows.remove(&oldest);
        }
        let row: Rc<[f64]> = self.kernel.row(i).into_owned().into();
        self.rows.insert(i, (row.clone(), self.clock));
        Row::Shared(row)
    }
}
