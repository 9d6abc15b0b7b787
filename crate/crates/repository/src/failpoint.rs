//! Crash injection for recovery tests.
//!
//! `DIDLKIT_FAILPOINT=<name>` aborts the process the first time the named
//! point is reached; `<name>@<n>` aborts on the n-th time. Unset, every
//! point is a no-op.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

pub const ENV: &str = "DIDLKIT_FAILPOINT";

/// Package file written and synced under its temporary name.
pub const AFTER_TEMP_WRITE: &str = "after-temp-write";
/// Package file renamed into place, index line not yet written.
pub const AFTER_RENAME: &str = "after-rename";
/// Half of the index line written and synced.
pub const TORN_INDEX: &str = "torn-index";
/// Index line written and synced.
pub const AFTER_INDEX: &str = "after-index";

pub const ALL: [&str; 4] = [AFTER_TEMP_WRITE, AFTER_RENAME, TORN_INDEX, AFTER_INDEX];

struct Armed {
    name: String,
    at: usize,
    hits: AtomicUsize,
}

fn armed() -> Option<&'static Armed> {
    static ARMED: OnceLock<Option<Armed>> = OnceLock::new();
    ARMED
        .get_or_init(|| {
            let spec = std::env::var(ENV).ok()?;
            let (name, at) = match spec.split_once('@') {
                Some((n, k)) => (n.to_string(), k.parse().ok()?),
                None => (spec, 1),
            };
            Some(Armed { name, at, hits: AtomicUsize::new(0) })
        })
        .as_ref()
}

/// True when this hit of `name` is the one that must crash.
pub fn triggers(name: &str) -> bool {
    match armed() {
        Some(a) if a.name == name => a.hits.fetch_add(1, Ordering::SeqCst) + 1 == a.at,
        _ => false,
    }
}

pub fn hit(name: &str) {
    if triggers(name) {
        crash();
    }
}

pub fn crash() -> ! {
    std::process::abort()
}
