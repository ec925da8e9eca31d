use std::time::Duration;

/// Bounded exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Whether a failed attempt may be retried.
pub(crate) enum Attempt<E> {
    Retry(E),
    Fatal(E),
}

impl RetryPolicy {
    /// Runs `op` until it succeeds, fails fatally, or attempts run out.
    /// The delay doubles after each retryable failure.
    pub(crate) fn run<T, E>(&self, mut op: impl FnMut(u32) -> Result<T, Attempt<E>>) -> Result<T, E> {
        let attempts = self.attempts.max(1);
        let mut delay = self.base_delay;
        for attempt in 1..=attempts {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt == attempts => return Err(e),
                Err(Attempt::Retry(_)) => {
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
        unreachable!("loop returns on the final attempt")
    }
}
