//! In-memory session store with time-based eviction.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use pdsim_core::simulator::SimulatedPanel;
use pdsim_core::spec::{SimulationSpec, ValidatedSpec};

/// A simulated panel and the request that produced it. Never mutated after
/// insertion; handlers hold an `Arc` so eviction cannot cut a download short.
#[derive(Debug)]
pub struct SessionRecord {
    pub token: String,
    /// Effective spec, defaults filled in.
    pub spec: SimulationSpec,
    pub validated: ValidatedSpec,
    pub panel: SimulatedPanel,
    pub created_at: Instant,
}

#[derive(Clone)]
pub struct SessionStore {
    inner: Arc<Mutex<HashMap<String, Arc<SessionRecord>>>>,
    ttl: Duration,
}

fn new_token() -> String {
    format!("{:032x}", rand::random::<u128>())
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        SessionStore {
            inner: Arc::new(Mutex::new(HashMap::new())),
            ttl,
        }
    }

    fn expired(&self, record: &SessionRecord, now: Instant) -> bool {
        now.duration_since(record.created_at) >= self.ttl
    }

    /// Stores a new record under a fresh token and returns it.
    pub fn insert(
        &self,
        spec: SimulationSpec,
        validated: ValidatedSpec,
        panel: SimulatedPanel,
    ) -> Arc<SessionRecord> {
        let now = Instant::now();
        let mut map = self.inner.lock().expect("session store poisoned");
        map.retain(|_, r| !self.expired(r, now));
        let token = loop {
            let t = new_token();
            if !map.contains_key(&t) {
                break t;
            }
        };
        let record = Arc::new(SessionRecord {
            token: token.clone(),
            spec,
            validated,
            panel,
            created_at: now,
        });
        map.insert(token, Arc::clone(&record));
        record
    }

    pub fn get(&self, token: &str) -> Option<Arc<SessionRecord>> {
        let now = Instant::now();
        let mut map = self.inner.lock().expect("session store poisoned");
        match map.get(token) {
            Some(r) if self.expired(r, now) => {
                map.remove(token);
                None
            }
            Some(r) => Some(Arc::clone(r)),
            None => None,
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("session store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
