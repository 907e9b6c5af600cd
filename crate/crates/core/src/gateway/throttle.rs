use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::{BackendError, CompletionBackend, CompletionRequest};

/// Time source for rate limiting and backoff, so tests can run on a
/// virtual clock.
pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, duration: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// A clock that only moves when someone sleeps on it.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: Mutex<Duration>,
    sleeps: Mutex<Vec<Duration>>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        *self.now.lock().unwrap() += by;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().unwrap().clone()
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, duration: Duration) {
        self.sleeps.lock().unwrap().push(duration);
        self.advance(duration);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateLimit {
    pub requests: usize,
    pub per: Duration,
}

impl RateLimit {
    /// Converts a requests-per-second figure; rates below one become one
    /// request per `1/rate` seconds.
    pub fn per_second(rate: f64) -> Result<Self, String> {
        if !rate.is_finite() || rate <= 0.0 {
            return Err(format!("rate limit must be positive, got {rate}"));
        }
        Ok(if rate >= 1.0 {
            Self {
                requests: rate.round() as usize,
                per: Duration::from_secs(1),
            }
        } else {
            Self {
                requests: 1,
                per: Duration::from_secs_f64(1.0 / rate),
            }
        })
    }
}

/// Sliding-window limiter: at most `limit.requests` acquisitions in any
/// window of length `limit.per`.
pub struct RateLimiter {
    limit: RateLimit,
    clock: Arc<dyn Clock>,
    window: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn new(limit: RateLimit, clock: Arc<dyn Clock>) -> Self {
        Self {
            limit,
            clock,
            window: Mutex::new(VecDeque::new()),
        }
    }

    /// Blocks until a request may be issued; returns the admission time.
    pub fn acquire(&self) -> Duration {
        loop {
            let wait = {
                let mut window = self.window.lock().unwrap();
                let now = self.clock.now();
                while window.front().is_some_and(|&t| now >= t + self.limit.per) {
                    window.pop_front();
                }
                if window.len() < self.limit.requests {
                    window.push_back(now);
                    return now;
                }
                (window[0] + self.limit.per).saturating_sub(now)
            };
            self.clock.sleep(wait);
        }
    }
}

pub struct Throttled<B> {
    inner: B,
    limiter: Arc<RateLimiter>,
}

impl<B> Throttled<B> {
    pub fn new(inner: B, limiter: Arc<RateLimiter>) -> Self {
        Self { inner, limiter }
    }
}

impl<B: CompletionBackend> CompletionBackend for Throttled<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.limiter.acquire();
        self.inner.complete(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: usize,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Retries retryable failures with exponential backoff: at most
/// `retries + 1` attempts, sleeping `base * 2^k` before retry `k + 1`.
pub struct Retrying<B> {
    inner: B,
    policy: RetryPolicy,
    clock: Arc<dyn Clock>,
}

impl<B> Retrying<B> {
    pub fn new(inner: B, policy: RetryPolicy, clock: Arc<dyn Clock>) -> Self {
        Self {
            inner,
            policy,
            clock,
        }
    }
}

impl<B: CompletionBackend> CompletionBackend for Retrying<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let mut attempt = 0;
        loop {
            match self.inner.complete(request) {
                Err(e) if e.retryable && attempt < self.policy.retries => {
                    let delay = self.policy.base_delay * 2u32.saturating_pow(attempt as u32);
                    tracing::debug!(tag = %request.tag, attempt, ?delay, error = %e.message, "retrying completion");
                    self.clock.sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}
