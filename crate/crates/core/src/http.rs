//! Blocking JSON-over-HTTP POST with bounded retries, shared by the remote
//! embedding provider and the chat-completions client.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts, at least one.
    pub attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PostFailure {
    /// Connection errors and non-200 statuses, after all attempts were spent.
    Transport { attempts: u32, message: String },
    /// A 200 response whose body did not decode.
    Decode(String),
}

pub struct JsonPoster {
    agent: ureq::Agent,
    policy: RetryPolicy,
}

impl JsonPoster {
    pub fn new(policy: RetryPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(policy.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, policy }
    }

    pub fn post<B, R>(&self, url: &str, bearer: Option<&str>, body: &B) -> Result<R, PostFailure>
    where
        B: Serialize,
        R: DeserializeOwned,
    {
        let attempts = self.policy.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            let mut request = self.agent.post(url);
            if let Some(token) = bearer {
                request = request.header("Authorization", &format!("Bearer {token}"));
            }
            match request.send_json(body) {
                Ok(mut response) if response.status().as_u16() == 200 => {
                    return response
                        .body_mut()
                        .read_json::<R>()
                        .map_err(|e| PostFailure::Decode(e.to_string()));
                }
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    let text = response.body_mut().read_to_string().unwrap_or_default();
                    last = format!("HTTP {status}: {}", text.chars().take(200).collect::<String>());
                }
                Err(e) => last = e.to_string(),
            }
            log::debug!("POST {url} attempt {attempt}/{attempts} failed: {last}");
            if attempt < attempts {
                thread::sleep(self.policy.backoff * attempt);
            }
        }
        Err(PostFailure::Transport {
            attempts,
            message: last,
        })
    }
}
