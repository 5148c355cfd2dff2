//! Background suggestion queries, one in flight at a time.
//!
//! Each request bumps a generation counter and overwrites the single mailbox
//! slot, so a burst of selections collapses to one query for the latest text.
//! Results from superseded generations are discarded on arrival.

use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{get_suggestions, ProviderError, SuggestionProvider, SuggestionSet};

/// Generation number of a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ticket(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerResult {
    pub ticket: Ticket,
    pub partial: String,
    pub set: SuggestionSet,
    pub error: Option<ProviderError>,
}

struct Request {
    ticket: Ticket,
    partial: String,
    previous: SuggestionSet,
}

#[derive(Default)]
struct Shared {
    generation: u64,
    pending: Option<Request>,
    result: Option<WorkerResult>,
    shutdown: bool,
}

pub struct SuggestionWorker {
    state: Arc<(Mutex<Shared>, Condvar)>,
    handle: Option<JoinHandle<()>>,
}

impl SuggestionWorker {
    pub fn spawn(provider: Arc<dyn SuggestionProvider>, timeout: Duration) -> Self {
        let state = Arc::new((Mutex::new(Shared::default()), Condvar::new()));
        let worker_state = Arc::clone(&state);
        let handle = std::thread::spawn(move || {
            let (lock, cv) = &*worker_state;
            loop {
                let req = {
                    let mut s = lock.lock().unwrap();
                    loop {
                        if s.shutdown {
                            return;
                        }
                        if let Some(r) = s.pending.take() {
                            break r;
                        }
                        s = cv.wait(s).unwrap();
                    }
                };
                let (set, error) = get_suggestions(provider.as_ref(), &req.partial, timeout, &req.previous);
                let mut s = lock.lock().unwrap();
                if req.ticket.0 == s.generation {
                    s.result = Some(WorkerResult { ticket: req.ticket, partial: req.partial, set, error });
                    cv.notify_all();
                } else {
                    log::debug!("dropping superseded suggestions for generation {}", req.ticket.0);
                }
            }
        });
        Self { state, handle: Some(handle) }
    }

    /// Queue a query for `partial`, superseding anything not yet delivered.
    pub fn request(&self, partial: &str, previous: &SuggestionSet) -> Ticket {
        let (lock, cv) = &*self.state;
        let mut s = lock.lock().unwrap();
        s.generation += 1;
        let ticket = Ticket(s.generation);
        s.pending = Some(Request { ticket, partial: partial.to_string(), previous: previous.clone() });
        s.result = None;
        cv.notify_all();
        ticket
    }

    pub fn current(&self) -> Ticket {
        Ticket(self.state.0.lock().unwrap().generation)
    }

    /// Take the result for the latest request if it has arrived.
    pub fn poll(&self) -> Option<WorkerResult> {
        self.state.0.lock().unwrap().result.take()
    }

    /// Block until the result for `ticket` arrives, it is superseded, or `limit` passes.
    pub fn wait(&self, ticket: Ticket, limit: Duration) -> Option<WorkerResult> {
        let (lock, cv) = &*self.state;
        let deadline = Instant::now() + limit;
        let mut s = lock.lock().unwrap();
        loop {
            if s.generation != ticket.0 {
                return None;
            }
            if s.result.as_ref().is_some_and(|r| r.ticket == ticket) {
                return s.result.take();
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            s = cv.wait_timeout(s, deadline - now).unwrap().0;
        }
    }
}

impl Drop for SuggestionWorker {
    fn drop(&mut self) {
        {
            let (lock, cv) = &*self.state;
            lock.lock().unwrap().shutdown = true;
            cv.notify_all();
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suggest::{MockProvider, Provenance};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Slow {
        calls: AtomicUsize,
        delay: Duration,
    }

    impl SuggestionProvider for Slow {
        fn query(&self, partial: &str, _t: Duration) -> Result<SuggestionSet, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(self.delay);
            Ok(SuggestionSet::new(vec![format!("{}X", partial.trim())], Provenance::Mock))
        }
        fn provenance(&self) -> Provenance {
            Provenance::Mock
        }
    }

    #[test]
    fn delivers_latest() {
        let w = SuggestionWorker::spawn(Arc::new(MockProvider::default()), Duration::from_secs(1));
        let t = w.request("I WOULD ", &SuggestionSet::empty());
        let r = w.wait(t, Duration::from_secs(5)).unwrap();
        assert!(r.set.candidates.contains(&"LIKE".to_string()));
    }

    #[test]
    fn superseded_requests_are_dropped() {
        let slow = Arc::new(Slow { calls: AtomicUsize::new(0), delay: Duration::from_millis(150) });
        let w = SuggestionWorker::spawn(slow.clone(), Duration::from_secs(1));
        let first = w.request("A", &SuggestionSet::empty());
        std::thread::sleep(Duration::from_millis(20));
        for p in ["AB", "ABC", "ABCD"] {
            w.request(p, &SuggestionSet::empty());
        }
        let last = w.current();
        assert!(w.wait(first, Duration::from_millis(10)).is_none());
        let r = w.wait(last, Duration::from_secs(5)).unwrap();
        assert_eq!(r.set.candidates, ["ABCDX"]);
        // The in-flight query plus one for the latest text; the middle two never ran.
        assert_eq!(slow.calls.load(Ordering::SeqCst), 2);
    }
}
