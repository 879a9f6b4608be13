//! Redirect resolution behind a pluggable single-hop interface.
//!
//! The default resolver is an offline table (CSV `pattern,target`) keyed by
//! scheme-stripped `host/path`, so test runs stay hermetic. A live resolver
//! that follows HTTP redirects implements the same interface and is opt-in.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use crate::net::HttpTransport;

/// One redirect hop: maps a URL to its target, or `None` when the input is
/// not recognized as a redirector.
pub trait RedirectResolver {
    fn resolve_once(&self, url: &str) -> Option<String>;
}

/// Maximum hops followed before declaring a loop.
pub const MAX_REDIRECT_HOPS: usize = 5;

/// Result of following redirects. `loop_detected` marks both cycles and
/// hop-budget exhaustion; `url` is then the last URL seen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub url: String,
    pub hops: usize,
    pub loop_detected: bool,
}

/// Strip scheme and lowercase the host part, keeping the path as-is.
fn resolver_key(url: &str) -> String {
    let rest = url
        .split_once("://")
        .map(|(_, rest)| rest)
        .unwrap_or(url);
    match rest.split_once('/') {
        Some((host, path)) => format!("{}/{}", host.to_lowercase(), path),
        None => rest.to_lowercase(),
    }
}

/// Offline shortener table loaded from a fixture file.
#[derive(Debug, Clone, Default)]
pub struct FixtureResolver {
    map: HashMap<String, String>,
}

impl FixtureResolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pattern: &str, target: &str) {
        self.map.insert(resolver_key(pattern), target.to_string());
    }

    /// Load a CSV fixture with columns `pattern,target`.
    pub fn from_csv(path: &Path) -> io::Result<FixtureResolver> {
        let text = fs::read_to_string(path)?;
        let mut resolver = FixtureResolver::new();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        for record in reader.records() {
            let record = record.map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            if record.len() >= 2 {
                resolver.insert(&record[0], &record[1]);
            }
        }
        Ok(resolver)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl RedirectResolver for FixtureResolver {
    fn resolve_once(&self, url: &str) -> Option<String> {
        self.map.get(&resolver_key(url)).cloned()
    }
}

/// Live resolver following `Location` headers via HTTP HEAD, one hop per
/// call. Opt-in; never used by tests.
pub struct LiveResolver<T: HttpTransport> {
    transport: T,
}

impl<T: HttpTransport> LiveResolver<T> {
    pub fn new(transport: T) -> Self {
        LiveResolver { transport }
    }
}

impl<T: HttpTransport> RedirectResolver for LiveResolver<T> {
    fn resolve_once(&self, url: &str) -> Option<String> {
        self.transport.head_location(url)
    }
}

/// Follow redirects up to [`MAX_REDIRECT_HOPS`], passing unrecognized URLs
/// through unchanged. Cycles and budget exhaustion return the last URL seen
/// with `loop_detected` set; the caller emits the warning record.
pub fn resolve_redirects(url: &str, resolver: &dyn RedirectResolver) -> Resolution {
    let mut seen: Vec<String> = vec![resolver_key(url)];
    let mut current = url.to_string();
    let mut hops = 0;
    while let Some(next) = resolver.resolve_once(&current) {
        hops += 1;
        let key = resolver_key(&next);
        if seen.contains(&key) || hops > MAX_REDIRECT_HOPS {
            return Resolution {
                url: next,
                hops,
                loop_detected: true,
            };
        }
        seen.push(key);
        current = next;
    }
    Resolution {
        url: current,
        hops,
        loop_detected: false,
    }
}
