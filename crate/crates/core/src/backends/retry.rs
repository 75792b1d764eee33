use std::time::Duration;

use super::BackendError;

/// One failed attempt. Transient failures (timeouts, connection errors,
/// 5xx) are retried; everything else fails immediately.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttemptError {
    pub transient: bool,
    pub status: Option<u16>,
    pub message: String,
}

impl AttemptError {
    pub fn transport(message: impl Into<String>) -> Self {
        AttemptError {
            transient: true,
            status: None,
            message: message.into(),
        }
    }

    pub fn status(status: u16, message: impl Into<String>) -> Self {
        AttemptError {
            transient: status >= 500,
            status: Some(status),
            message: message.into(),
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        AttemptError {
            transient: false,
            status: None,
            message: message.into(),
        }
    }
}

/// Exponential backoff: the n-th retry waits `base_delay * factor^(n-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl RetryPolicy {
    pub fn new(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
        }
    }

    pub fn with_base_delay(mut self, d: Duration) -> Self {
        self.base_delay = d;
        self
    }

    /// Wait before retry number `retry` (1-based).
    pub fn delay_before(&self, retry: u32) -> Duration {
        if retry == 0 {
            return Duration::ZERO;
        }
        self.base_delay.mul_f64(self.factor.powi(retry as i32 - 1))
    }

    /// Runs `op` (given the 1-based attempt number) until it succeeds, fails
    /// permanently, or `max_retries + 1` attempts are spent.
    pub fn run<T>(&self, mut op: impl FnMut(u32) -> Result<T, AttemptError>) -> Result<T, BackendError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if e.transient && attempt <= self.max_retries => {
                    tracing::debug!(attempt, status = ?e.status, "transient backend failure: {}", e.message);
                    std::thread::sleep(self.delay_before(attempt));
                }
                Err(e) => return Err(BackendError::new(e.status, attempt, e.message)),
            }
        }
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy::new(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast(max: u32) -> RetryPolicy {
        RetryPolicy::new(max).with_base_delay(Duration::ZERO)
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::new(3);
        let d: Vec<_> = (1..=3).map(|i| p.delay_before(i).as_secs_f64()).collect();
        assert_eq!(d, [1.0, 2.0, 4.0]);
    }

    #[test]
    fn exhausts_on_transient() {
        let mut calls = 0;
        let err = fast(2)
            .run::<()>(|_| {
                calls += 1;
                Err(AttemptError::status(503, "down"))
            })
            .unwrap_err();
        assert_eq!(calls, 3);
        assert_eq!(err.attempts, 3);
        assert_eq!(err.status, Some(503));
    }

    #[test]
    fn no_retry_on_client_error() {
        let mut calls = 0;
        let err = fast(5)
            .run::<()>(|_| {
                calls += 1;
                Err(AttemptError::status(400, "bad request"))
            })
            .unwrap_err();
        assert_eq!(calls, 1);
        assert_eq!(err.attempts, 1);
    }

    #[test]
    fn recovers_after_timeout() {
        let v = fast(2)
            .run(|n| {
                if n < 3 {
                    Err(AttemptError::transport("timed out"))
                } else {
                    Ok(n)
                }
            })
            .unwrap();
        assert_eq!(v, 3);
    }

    #[test]
    fn zero_retries_means_one_attempt() {
        let err = fast(0).run::<()>(|_| Err(AttemptError::transport("x"))).unwrap_err();
        assert_eq!(err.attempts, 1);
    }
}
