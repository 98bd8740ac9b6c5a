//! Capture-service client over a generic submit/poll/download protocol:
//!
//! - `POST {endpoint}/jobs` with `{"video", "duration"}` answers `{"id"}`
//! - `GET {endpoint}/jobs/{id}` answers `{"status": "queued"|"running"|"done"|"failed", "error"?}`
//! - `GET {endpoint}/jobs/{id}/{clip.json|mesh.obj|weights.json}` serves the
//!   same three files as a local capture bundle
//!
//! Requests carry `Authorization: Bearer $MOCAP_API_TOKEN` when the token is
//! set. Connection failures and 5xx answers are retried.

use std::thread;
use std::time::{Duration, Instant};

use meshmotion::anim::mocap::{BUNDLE_CLIP, BUNDLE_MESH, BUNDLE_WEIGHTS};
use meshmotion::{MoCapClient, MoCapError, MoCapRequest, MoCapResult};
use serde::Deserialize;
use ureq::http::Response;
use ureq::{Agent, Body};

pub const TOKEN_ENV: &str = "MOCAP_API_TOKEN";

#[derive(Debug, Clone)]
pub struct HttpMoCapClient {
    endpoint: String,
    token: Option<String>,
    agent: Agent,
    max_attempts: u32,
    retry_delay: Duration,
    poll_interval: Duration,
    timeout: Duration,
}

#[derive(Deserialize)]
struct Submitted {
    id: String,
}

#[derive(Deserialize)]
struct JobStatus {
    status: String,
    #[serde(default)]
    error: Option<String>,
}

impl HttpMoCapClient {
    pub fn new(endpoint: impl Into<String>, token: Option<String>) -> Self {
        let agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        HttpMoCapClient {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            token,
            agent,
            max_attempts: 3,
            retry_delay: Duration::from_millis(500),
            poll_interval: Duration::from_secs(1),
            timeout: Duration::from_secs(600),
        }
    }

    /// Reads the bearer token from `MOCAP_API_TOKEN`.
    pub fn from_env(endpoint: impl Into<String>) -> Self {
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        HttpMoCapClient::new(endpoint, token)
    }

    pub fn with_retries(mut self, max_attempts: u32, delay: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.retry_delay = delay;
        self
    }

    pub fn with_polling(mut self, interval: Duration, timeout: Duration) -> Self {
        self.poll_interval = interval;
        self.timeout = timeout;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn auth(&self) -> Option<String> {
        self.token.as_ref().map(|t| format!("Bearer {t}"))
    }

    /// Sends one request with retries and returns status and body text.
    fn send(&self, send: impl Fn(&Agent) -> Result<Response<Body>, ureq::Error>) -> Result<(u16, String), MoCapError> {
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            if attempt > 1 {
                thread::sleep(self.retry_delay);
            }
            match send(&self.agent) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    let body = response.body_mut().read_to_string().map_err(|e| MoCapError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    })?;
                    if status >= 500 {
                        last = format!("HTTP {status}: {body}");
                        continue;
                    }
                    return Ok((status, body));
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(MoCapError::Transport {
            attempts: self.max_attempts,
            message: last,
        })
    }

    fn get(&self, url: &str) -> Result<(u16, String), MoCapError> {
        self.send(|agent| {
            let mut req = agent.get(url);
            if let Some(auth) = self.auth() {
                req = req.header("Authorization", auth);
            }
            req.call()
        })
    }

    fn download(&self, job: &str, file: &str) -> Result<String, MoCapError> {
        match self.get(&format!("{}/jobs/{job}/{file}", self.endpoint))? {
            (200, body) => Ok(body),
            (status, body) => Err(MoCapError::JobFailed(format!("downloading {file}: HTTP {status}: {body}"))),
        }
    }
}

impl MoCapClient for HttpMoCapClient {
    fn capture(&self, request: &MoCapRequest) -> Result<MoCapResult, MoCapError> {
        let url = format!("{}/jobs", self.endpoint);
        let (status, body) = self.send(|agent| {
            let mut req = agent.post(&url);
            if let Some(auth) = self.auth() {
                req = req.header("Authorization", auth);
            }
            req.send_json(request)
        })?;
        let job = match status {
            200..=299 => serde_json::from_str::<Submitted>(&body)
                .map_err(|e| MoCapError::JobFailed(format!("bad submit answer: {e}")))?
                .id,
            404 => return Err(MoCapError::NotFound(request.video.clone())),
            _ => return Err(MoCapError::JobFailed(format!("submit: HTTP {status}: {body}"))),
        };

        let started = Instant::now();
        loop {
            let (status, body) = self.get(&format!("{}/jobs/{job}", self.endpoint))?;
            if status != 200 {
                return Err(MoCapError::JobFailed(format!("status of job {job}: HTTP {status}: {body}")));
            }
            let state: JobStatus =
                serde_json::from_str(&body).map_err(|e| MoCapError::JobFailed(format!("bad status answer: {e}")))?;
            match state.status.as_str() {
                "done" => break,
                "failed" => return Err(MoCapError::JobFailed(state.error.unwrap_or_else(|| format!("job {job} failed")))),
                _ if started.elapsed() >= self.timeout => {
                    return Err(MoCapError::JobFailed(format!("job {job} still {} after {:?}", state.status, self.timeout)));
                }
                _ => thread::sleep(self.poll_interval),
            }
        }

        let clip = self.download(&job, BUNDLE_CLIP)?;
        let mesh = self.download(&job, BUNDLE_MESH)?;
        let weights = self.download(&job, BUNDLE_WEIGHTS)?;
        MoCapResult::from_texts(&clip, &mesh, &weights).map_err(MoCapError::JobFailed)
    }
}
