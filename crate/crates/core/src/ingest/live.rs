//! Live collection against a chat-completions endpoint.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use super::jsonl::append_run;
use super::wire::{parse_response, ParseWarning, RunContext, WireRequest};
use crate::error::{Error, Result};
use crate::token::GenerationRun;

pub const API_KEY_VAR: &str = "MODELBELIEF_API_KEY";
pub const API_BASE_VAR: &str = "MODELBELIEF_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";
pub const MAX_ATTEMPTS: u32 = 5;
pub const DEFAULT_IN_FLIGHT: usize = 4;

pub struct LiveClient {
    agent: ureq::Agent,
    url: String,
    key: String,
}

impl LiveClient {
    /// Credentials from the environment; the key is never written anywhere.
    pub fn from_env() -> Result<Self> {
        let key = std::env::var(API_KEY_VAR)
            .map_err(|_| Error::Network(format!("{API_KEY_VAR} is not set")))?;
        let base = std::env::var(API_BASE_VAR).unwrap_or_else(|_| DEFAULT_API_BASE.to_owned());
        Ok(Self::new(&base, key))
    }

    pub fn new(base: &str, key: String) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            url: format!("{}/chat/completions", base.trim_end_matches('/')),
            key,
        }
    }

    /// POST with bounded exponential backoff on transport errors, 429 and 5xx.
    pub fn complete(&self, request: &WireRequest) -> Result<Vec<u8>> {
        request.validate()?;
        let body = request.to_json_bytes();
        let mut last = String::new();
        for attempt in 0..MAX_ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(500 << (attempt - 1)));
            }
            let sent = self
                .agent
                .post(&self.url)
                .header("Authorization", &format!("Bearer {}", self.key))
                .header("Content-Type", "application/json")
                .send(&body[..]);
            match sent {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let bytes = resp
                        .body_mut()
                        .read_to_vec()
                        .map_err(|e| Error::Network(e.to_string()))?;
                    if (200..300).contains(&status) {
                        return Ok(bytes);
                    }
                    last = format!("HTTP {status}: {}", String::from_utf8_lossy(&bytes));
                    if status != 429 && status < 500 {
                        return Err(Error::Network(last));
                    }
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::Network(format!(
            "giving up after {MAX_ATTEMPTS} attempts: {last}"
        )))
    }
}

/// Run every job with at most `in_flight` requests outstanding. Runs are
/// appended to `out` in job order as soon as all earlier jobs are written.
pub fn fetch_runs<W: Write>(
    client: &LiveClient,
    jobs: &[(RunContext, WireRequest)],
    in_flight: usize,
    out: &mut W,
) -> Result<Vec<(usize, Vec<ParseWarning>)>> {
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<(GenerationRun, Vec<ParseWarning>)>)>();
    let mut warnings = Vec::new();
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..in_flight.max(1) {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((ctx, req)) = jobs.get(i) else { break };
                let result = client
                    .complete(req)
                    .and_then(|raw| parse_response(&raw, ctx))
                    .map(|p| (p.run, p.warnings));
                let failed = result.is_err();
                if tx.send((i, result)).is_err() || failed {
                    // Stop handing out work once anything fails.
                    next.store(jobs.len(), Ordering::SeqCst);
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut written = 0;
        for (i, result) in rx {
            let (run, w) = result?;
            if !w.is_empty() {
                warnings.push((i, w));
            }
            pending.insert(i, run);
            while let Some(run) = pending.remove(&written) {
                append_run(&run, out)?;
                written += 1;
            }
        }
        out.flush()?;
        Ok(())
    })?;
    Ok(warnings)
}
