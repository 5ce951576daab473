use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

/// Encoded message shared by every queue it is pushed to.
pub type Payload = Arc<[u8]>;

#[derive(Debug, Default)]
struct QueueState {
    items: VecDeque<Payload>,
    closed: bool,
}

/// Outbound queue of one client session. Pushing never blocks.
#[derive(Debug)]
pub struct OutboundQueue {
    capacity: usize,
    state: Mutex<QueueState>,
    ready: Condvar,
}

pub enum Pop {
    Item(Payload),
    Empty,
    Closed,
}

impl OutboundQueue {
    pub fn new(capacity: usize) -> Arc<Self> {
        Arc::new(Self {
            capacity: capacity.max(1),
            state: Mutex::default(),
            ready: Condvar::new(),
        })
    }

    /// Appends a message. When the backlog is at capacity the queue is
    /// emptied, `terminal` becomes its last message and it closes; returns
    /// false in that case or if it was already closed.
    pub fn push(&self, item: Payload, terminal: impl FnOnce() -> Payload) -> bool {
        let mut s = self.state.lock().unwrap();
        if s.closed {
            return false;
        }
        if s.items.len() >= self.capacity {
            s.items.clear();
            s.items.push_back(terminal());
            s.closed = true;
            self.ready.notify_all();
            return false;
        }
        s.items.push_back(item);
        self.ready.notify_all();
        true
    }

    /// Appends a final message and closes, ignoring the bound.
    pub fn close_with(&self, last: Option<Payload>) {
        let mut s = self.state.lock().unwrap();
        if !s.closed {
            s.items.extend(last);
            s.closed = true;
        }
        self.ready.notify_all();
    }

    /// Next message, waiting up to `timeout`. `Closed` once closed and drained.
    pub fn pop(&self, timeout: Duration) -> Pop {
        let mut s = self.state.lock().unwrap();
        if s.items.is_empty() && !s.closed {
            s = self.ready.wait_timeout(s, timeout).unwrap().0;
        }
        match s.items.pop_front() {
            Some(p) => Pop::Item(p),
            None if s.closed => Pop::Closed,
            None => Pop::Empty,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().unwrap().closed
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
struct Subscribers {
    queues: Vec<Arc<OutboundQueue>>,
    closed: Option<Payload>,
}

/// Fan-out to subscribed sessions.
#[derive(Debug, Default)]
pub struct Broadcaster {
    state: Mutex<Subscribers>,
}

impl Broadcaster {
    /// Adds a subscriber. After [`Broadcaster::close_all`] the queue instead
    /// receives the closing message and is closed.
    pub fn subscribe(&self, queue: Arc<OutboundQueue>) {
        let mut s = self.state.lock().unwrap();
        if let Some(last) = &s.closed {
            queue.close_with(Some(last.clone()));
        } else if !s.queues.iter().any(|q| Arc::ptr_eq(q, &queue)) {
            s.queues.push(queue);
        }
    }

    pub fn subscriber_count(&self) -> usize {
        self.state.lock().unwrap().queues.len()
    }

    /// Delivers the same bytes to every subscriber. Subscribers whose
    /// backlog overflows receive `terminal` and are removed.
    pub fn publish(&self, payload: &Payload, terminal: &Payload) {
        let mut s = self.state.lock().unwrap();
        s.queues.retain(|q| q.push(payload.clone(), || terminal.clone()));
    }

    /// Sends `last` to every subscriber, closes them and refuses new ones.
    pub fn close_all(&self, last: &Payload) {
        let mut s = self.state.lock().unwrap();
        for q in s.queues.drain(..) {
            q.close_with(Some(last.clone()));
        }
        s.closed = Some(last.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Payload {
        Arc::from(s.as_bytes())
    }

    #[test]
    fn overflow_replaces_backlog_with_terminal() {
        let q = OutboundQueue::new(2);
        assert!(q.push(p("a"), || p("x")));
        assert!(q.push(p("b"), || p("x")));
        assert!(!q.push(p("c"), || p("dropped")));
        assert!(q.is_closed());
        match q.pop(Duration::ZERO) {
            Pop::Item(m) => assert_eq!(&*m, b"dropped"),
            _ => panic!("expected terminal"),
        }
        assert!(matches!(q.pop(Duration::ZERO), Pop::Closed));
    }

    #[test]
    fn publish_shares_bytes_and_prunes_slow_subscribers() {
        let b = Broadcaster::default();
        let fast = OutboundQueue::new(8);
        let slow = OutboundQueue::new(1);
        b.subscribe(fast.clone());
        b.subscribe(slow.clone());
        let msg = p("frame");
        b.publish(&msg, &p("dropped"));
        assert_eq!(b.subscriber_count(), 2);
        b.publish(&msg, &p("dropped"));
        assert_eq!(b.subscriber_count(), 1);
        let Pop::Item(a) = fast.pop(Duration::ZERO) else { panic!() };
        assert!(Arc::ptr_eq(&a, &msg));
        assert!(slow.is_closed());
    }

    #[test]
    fn subscribing_after_close_gets_the_closing_message() {
        let b = Broadcaster::default();
        b.close_all(&p("finished"));
        let q = OutboundQueue::new(4);
        b.subscribe(q.clone());
        assert_eq!(b.subscriber_count(), 0);
        let Pop::Item(m) = q.pop(Duration::ZERO) else { panic!() };
        assert_eq!(&*m, b"finished");
        assert!(matches!(q.pop(Duration::ZERO), Pop::Closed));
    }

    #[test]
    fn empty_broadcast_is_a_no_op() {
        Broadcaster::default().publish(&p("x"), &p("y"));
    }
}
