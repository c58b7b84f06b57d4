//! Shared-memory execution layer.
//!
//! Two iteration contracts are offered:
//!
//! * [`Engine::for_each_user`] runs one task per user. Tasks may mutate their
//!   own user's parameters freely and item-side parameters only while holding
//!   the matching slots of a [`LockTable`]. Slots are always taken in ascending
//!   id order, so workers cannot deadlock. The interleaving across workers is
//!   unspecified; with one thread tasks run in the given order.
//! * [`Engine::map_rows`] fills independent output rows from read-only input.
//!   The result does not depend on the thread count.

use std::marker::PhantomData;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Mutex, MutexGuard};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Most slots a single update may hold at once.
pub const MAX_LOCKS: usize = 4;

/// One mutual-exclusion slot per lockable id.
#[derive(Debug)]
pub struct LockTable {
    slots: Vec<Mutex<()>>,
}

impl LockTable {
    pub fn new(len: usize) -> Self {
        LockTable {
            slots: (0..len).map(|_| Mutex::new(())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn acquire(&self, id: usize) -> MutexGuard<'_, ()> {
        // A panicking task is reported through the engine; the slot itself
        // protects no invariant of its own.
        self.slots[id].lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn lock_one(&self, id: usize) -> LockSet<'_> {
        let mut set = LockSet::empty();
        set.guards[0] = Some(self.acquire(id));
        set.ids[0] = id;
        set.len = 1;
        set
    }

    /// Locks every id in `ids` (duplicates allowed) in ascending order.
    pub fn lock_set(&self, ids: &[usize]) -> LockSet<'_> {
        assert!(ids.len() <= MAX_LOCKS, "lock set larger than {MAX_LOCKS}");
        let mut sorted = [usize::MAX; MAX_LOCKS];
        sorted[..ids.len()].copy_from_slice(ids);
        sorted[..ids.len()].sort_unstable();
        let mut set = LockSet::empty();
        for &id in &sorted[..ids.len()] {
            if set.len > 0 && set.ids[set.len - 1] == id {
                continue;
            }
            set.guards[set.len] = Some(self.acquire(id));
            set.ids[set.len] = id;
            set.len += 1;
        }
        set
    }
}

/// Guards for a set of slots; released on drop.
pub struct LockSet<'a> {
    guards: [Option<MutexGuard<'a, ()>>; MAX_LOCKS],
    ids: [usize; MAX_LOCKS],
    len: usize,
}

impl<'a> LockSet<'a> {
    fn empty() -> Self {
        LockSet {
            guards: [None, None, None, None],
            ids: [usize::MAX; MAX_LOCKS],
            len: 0,
        }
    }

    /// Held ids, ascending.
    pub fn ids(&self) -> &[usize] {
        &self.ids[..self.len]
    }

    pub fn holds(&self, id: usize) -> bool {
        self.ids().contains(&id)
    }
}

/// Mutable view of a parameter array shared between workers.
///
/// Exclusive access to each region is established outside the type system:
/// a lock slot for item-side rows, task ownership for user-side rows.
#[derive(Clone, Copy)]
pub(crate) struct SharedSlice<'a> {
    ptr: *mut f64,
    len: usize,
    _marker: PhantomData<&'a mut [f64]>,
}

unsafe impl Send for SharedSlice<'_> {}
unsafe impl Sync for SharedSlice<'_> {}

impl<'a> SharedSlice<'a> {
    pub(crate) fn new(data: &'a mut [f64]) -> Self {
        SharedSlice {
            ptr: data.as_mut_ptr(),
            len: data.len(),
            _marker: PhantomData,
        }
    }

    /// # Safety
    ///
    /// No other live reference may overlap `start..start + len` while the
    /// returned slice is in use.
    #[allow(clippy::mut_from_ref)]
    pub(crate) unsafe fn slice(&self, start: usize, len: usize) -> &'a mut [f64] {
        assert!(start + len <= self.len, "row {start}+{len} out of bounds {}", self.len);
        std::slice::from_raw_parts_mut(self.ptr.add(start), len)
    }

    /// # Safety
    ///
    /// As for [`slice`](Self::slice).
    #[allow(clippy::mut_from_ref)]
    pub(crate) unsafe fn at(&self, idx: usize) -> &'a mut f64 {
        assert!(idx < self.len, "index {idx} out of bounds {}", self.len);
        &mut *self.ptr.add(idx)
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// Thread pool handle shared by all trainers.
pub struct Engine {
    threads: usize,
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("threads", &self.threads).finish()
    }
}

impl Engine {
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Task(format!("cannot start thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Engine { threads, pool })
    }

    pub fn sequential() -> Self {
        Engine {
            threads: 1,
            pool: None,
        }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Runs `f` inside the pool (or inline when single-threaded).
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    /// Runs `task` once per user in `order`.
    ///
    /// The first failing (or panicking) task aborts the remaining work and its
    /// error is returned.
    pub fn for_each_user<F>(&self, order: &[u32], locks: &LockTable, task: F) -> Result<()>
    where
        F: Fn(u32, &LockTable) -> Result<()> + Sync,
    {
        let run = |u: u32| -> Result<()> {
            match panic::catch_unwind(AssertUnwindSafe(|| task(u, locks))) {
                Ok(r) => r,
                Err(payload) => Err(Error::Task(format!("user {u}: {}", panic_message(payload)))),
            }
        };
        let Some(pool) = &self.pool else {
            return order.iter().try_for_each(|&u| run(u));
        };

        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let failure: Mutex<Option<Error>> = Mutex::new(None);
        pool.scope(|s| {
            for _ in 0..self.threads {
                s.spawn(|_| loop {
                    if abort.load(Ordering::Relaxed) {
                        break;
                    }
                    let idx = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&u) = order.get(idx) else {
                        break;
                    };
                    if let Err(e) = run(u) {
                        abort.store(true, Ordering::Relaxed);
                        let mut slot = failure.lock().unwrap_or_else(|p| p.into_inner());
                        slot.get_or_insert(e);
                        break;
                    }
                });
            }
        });
        match failure.into_inner().unwrap_or_else(|p| p.into_inner()) {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Fills `out` (rows of `width` values) by calling `task(row, slot)`.
    pub fn map_rows<F>(&self, out: &mut [f64], width: usize, task: F) -> Result<()>
    where
        F: Fn(usize, &mut [f64]) -> Result<()> + Sync,
    {
        if width == 0 || out.is_empty() {
            return Ok(());
        }
        let run = |(r, row): (usize, &mut [f64])| -> Result<()> {
            match panic::catch_unwind(AssertUnwindSafe(|| task(r, row))) {
                Ok(res) => res,
                Err(payload) => Err(Error::Task(format!("row {r}: {}", panic_message(payload)))),
            }
        };
        match &self.pool {
            None => out.chunks_mut(width).enumerate().try_for_each(run),
            Some(pool) => pool.install(|| out.par_chunks_mut(width).enumerate().try_for_each(run)),
        }
    }

    /// Parallel map over `0..n`, collecting results in index order.
    pub fn map_indices<T, F>(&self, n: usize, task: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match &self.pool {
            None => (0..n).map(task).collect(),
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(task).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::UnsafeCell;

    struct Counter(UnsafeCell<u64>);
    unsafe impl Sync for Counter {}

    impl Counter {
        /// Caller must hold the lock guarding the counter.
        unsafe fn bump(&self) {
            *self.0.get() += 1;
        }
    }

    #[test]
    fn lock_set_sorts_and_dedups() {
        let t = LockTable::new(10);
        let set = t.lock_set(&[7, 2, 7, 5]);
        assert_eq!(set.ids(), &[2, 5, 7]);
        assert!(set.holds(5));
        drop(set);
        let again = t.lock_set(&[2]);
        assert_eq!(again.ids(), &[2]);
    }

    #[test]
    fn no_lost_updates_on_one_shared_slot() {
        let users: Vec<u32> = (0..5000).collect();
        let locks = LockTable::new(1);
        let counter = Counter(UnsafeCell::new(0));
        let engine = Engine::new(16).unwrap();
        engine
            .for_each_user(&users, &locks, |_, locks| {
                let _g = locks.lock_one(0);
                unsafe { counter.bump() };
                Ok(())
            })
            .unwrap();
        assert_eq!(unsafe { *counter.0.get() }, 5000);
    }

    #[test]
    fn single_thread_keeps_order() {
        let order = vec![3, 1, 2, 0];
        let seen = Mutex::new(Vec::new());
        Engine::sequential()
            .for_each_user(&order, &LockTable::new(0), |u, _| {
                seen.lock().unwrap().push(u);
                Ok(())
            })
            .unwrap();
        assert_eq!(seen.into_inner().unwrap(), order);
    }

    #[test]
    fn failures_surface() {
        let users: Vec<u32> = (0..100).collect();
        for threads in [1, 4] {
            let engine = Engine::new(threads).unwrap();
            let err = engine
                .for_each_user(&users, &LockTable::new(0), |u, _| {
                    if u == 42 {
                        Err(Error::Task("boom".into()))
                    } else {
                        Ok(())
                    }
                })
                .unwrap_err();
            assert!(matches!(err, Error::Task(_)));
            let err = engine
                .for_each_user(&users, &LockTable::new(0), |u, _| {
                    assert!(u != 7, "user seven");
                    Ok(())
                })
                .unwrap_err();
            assert!(err.to_string().contains("user 7"));
        }
    }

    #[test]
    fn map_rows_is_thread_count_invariant() {
        let compute = |threads: usize| {
            let mut out = vec![0.0; 3 * 50];
            Engine::new(threads)
                .unwrap()
                .map_rows(&mut out, 3, |r, row| {
                    for (k, v) in row.iter_mut().enumerate() {
                        *v = ((r * 3 + k) as f64).sqrt().sin();
                    }
                    Ok(())
                })
                .unwrap();
            out
        };
        let one = compute(1);
        assert_eq!(one, compute(2));
        assert_eq!(one, compute(64));
    }

    #[test]
    fn map_rows_reports_row() {
        let mut out = vec![0.0; 10];
        let err = Engine::new(2)
            .unwrap()
            .map_rows(&mut out, 1, |r, _| if r == 6 { panic!("bad row") } else { Ok(()) })
            .unwrap_err();
        assert!(err.to_string().contains("row 6"));
    }
}
