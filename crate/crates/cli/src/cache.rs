//! Append-only verdict cache, one JSON object per line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use segre_core::tangent::{Verdict, VerificationResult, Verifier};
use segre_core::Statement;
use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = concat!("segre ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub statement: Statement,
    pub verdict: Verdict,
    pub rank: u64,
    pub expected: u64,
    pub primes: Vec<u64>,
    pub seeds: Vec<u64>,
    pub timestamp: u64,
    pub tool_version: String,
}

impl CacheEntry {
    pub fn from_result(r: &VerificationResult) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Self {
            statement: r.statement.canonicalize(),
            verdict: r.verdict,
            rank: r.best_rank,
            expected: r.expected,
            primes: r.primes_used.clone(),
            seeds: r.seeds_used.clone(),
            timestamp,
            tool_version: TOOL_VERSION.to_string(),
        }
    }

    fn to_result(&self, asked: &Statement) -> VerificationResult {
        VerificationResult {
            statement: asked.clone(),
            verdict: self.verdict,
            best_rank: self.rank,
            expected: self.expected,
            deficiency: self.expected - self.rank,
            trials_run: self.primes.len() as u32,
            primes_used: self.primes.clone(),
            seeds_used: self.seeds.clone(),
        }
    }
}

/// Keeps `new` unless `old` has a strictly stronger verdict.
fn merge(map: &mut HashMap<Statement, CacheEntry>, new: CacheEntry) -> bool {
    match map.get(&new.statement) {
        Some(old) if old.verdict >= new.verdict => false,
        _ => {
            map.insert(new.statement.clone(), new);
            true
        }
    }
}

pub fn load(path: &Path) -> Result<HashMap<Statement, CacheEntry>> {
    let mut map = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(map),
        Err(e) => return Err(e).with_context(|| format!("opening cache {}", path.display())),
    };
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CacheEntry>(&line) {
            Ok(entry) => {
                merge(&mut map, entry);
            }
            // a torn final line from an interrupted writer
            Err(e) => eprintln!("warning: {}:{}: skipping unreadable cache line: {e}", path.display(), n + 1),
        }
    }
    Ok(map)
}

pub fn append(path: &Path, entry: &CacheEntry) -> Result<()> {
    let mut line = serde_json::to_string(entry)?;
    line.push('\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening cache {}", path.display()))?;
    file.lock()?;
    file.write_all(line.as_bytes())?;
    file.unlock()?;
    Ok(())
}

/// Verifier backed by the cache file. A cached `ProbablyFalse` is reused as
/// is; a fresh `ProvenTrue` upgrades it.
pub struct CachedVerifier<V> {
    inner: V,
    path: Option<PathBuf>,
    entries: Mutex<HashMap<Statement, CacheEntry>>,
}

impl<V: Verifier> CachedVerifier<V> {
    pub fn open(inner: V, path: Option<PathBuf>) -> Result<Self> {
        let entries = match &path {
            Some(p) => load(p)?,
            None => HashMap::new(),
        };
        Ok(Self {
            inner,
            path,
            entries: Mutex::new(entries),
        })
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }
}

impl<V: Verifier> Verifier for CachedVerifier<V> {
    fn verify(&self, st: &Statement) -> segre_core::Result<VerificationResult> {
        let key = st.canonicalize();
        if let Some(hit) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(hit.to_result(st));
        }
        let result = self.inner.verify(st)?;
        let entry = CacheEntry::from_result(&result);
        let fresh = merge(&mut self.entries.lock().expect("cache lock"), entry.clone());
        if fresh {
            if let Some(p) = &self.path {
                if let Err(e) = append(p, &entry) {
                    eprintln!("warning: cache write failed: {e:#}");
                }
            }
        }
        Ok(result)
    }
}
