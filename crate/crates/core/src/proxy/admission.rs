use std::sync::{Condvar, Mutex};

/// Bounded admission with strict arrival order. A ticket is taken when a
/// request arrives; tickets are admitted in order while fewer than `limit`
/// requests run.
pub struct Admission {
    limit: usize,
    state: Mutex<State>,
    cv: Condvar,
}

#[derive(Default)]
struct State {
    next_ticket: u64,
    now_serving: u64,
    running: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ticket(u64);

pub struct Permit<'a> {
    adm: &'a Admission,
}

impl Admission {
    pub fn new(limit: usize) -> Self {
        assert!(limit > 0, "worker limit must be positive");
        Self { limit, state: Mutex::new(State::default()), cv: Condvar::new() }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn ticket(&self) -> Ticket {
        let mut s = self.state.lock().unwrap();
        s.next_ticket += 1;
        Ticket(s.next_ticket - 1)
    }

    /// Blocks until `ticket` is at the head of the queue and a worker is free.
    pub fn wait(&self, ticket: Ticket) -> Permit<'_> {
        let mut s = self.state.lock().unwrap();
        while s.now_serving != ticket.0 || s.running >= self.limit {
            s = self.cv.wait(s).unwrap();
        }
        s.now_serving += 1;
        s.running += 1;
        self.cv.notify_all();
        Permit { adm: self }
    }

    pub fn acquire(&self) -> Permit<'_> {
        self.wait(self.ticket())
    }

    /// Requests admitted and still running, and requests waiting.
    pub fn load(&self) -> (usize, u64) {
        let s = self.state.lock().unwrap();
        (s.running, s.next_ticket - s.now_serving)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut s = self.adm.state.lock().unwrap();
        s.running -= 1;
        self.adm.cv.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::time::Duration;

    #[test]
    fn tickets_are_admitted_in_order() {
        let adm = Arc::new(Admission::new(1));
        let order = Arc::new(Mutex::new(Vec::new()));
        let tickets: Vec<_> = (0..8).map(|_| adm.ticket()).collect();
        let handles: Vec<_> = tickets
            .into_iter()
            .enumerate()
            .rev()
            .map(|(i, t)| {
                let (adm, order) = (adm.clone(), order.clone());
                std::thread::spawn(move || {
                    let _p = adm.wait(t);
                    order.lock().unwrap().push(i);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(*order.lock().unwrap(), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn never_exceeds_limit() {
        let adm = Arc::new(Admission::new(3));
        let running = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..12 {
                s.spawn(|| {
                    let _p = adm.acquire();
                    let now = running.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    running.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
        assert_eq!(adm.load(), (0, 0));
    }
}
