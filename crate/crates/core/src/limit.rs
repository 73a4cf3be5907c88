//! Blocking admission control shared by the network clients.

use std::sync::{Condvar, Mutex};

/// Counting semaphore. `acquire` blocks until a permit is free.
#[derive(Debug)]
pub struct Semaphore {
    capacity: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().expect("semaphore lock");
        while *used >= self.capacity {
            used = self.freed.wait(used).expect("semaphore lock");
        }
        *used += 1;
        Permit { owner: self }
    }

    pub fn in_use(&self) -> usize {
        *self.used.lock().expect("semaphore lock")
    }
}

pub struct Permit<'a> {
    owner: &'a Semaphore,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.owner.used.lock().expect("semaphore lock");
        *used -= 1;
        self.owner.freed.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn never_exceeds_capacity() {
        let sem = Arc::new(Semaphore::new(3));
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..16 {
                let (sem, live, peak) = (sem.clone(), live.clone(), peak.clone());
                s.spawn(move || {
                    let _p = sem.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(std::time::Duration::from_millis(5));
                    live.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
        assert_eq!(sem.in_use(), 0);
    }
}
