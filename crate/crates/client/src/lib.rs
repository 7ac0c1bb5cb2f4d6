//! Thin HTTP client for a running MUIT engine.

use muit_core::wire::{ErrorBody, MetricsReport, ResultAck, SyncBatch, SyncResponse, INSTANCE_HEADER, RESUME_TOKEN_HEADER};
use reqwest::header::{HeaderMap, CONTENT_TYPE};
use reqwest::StatusCode;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("engine answered {status}: {}", .body.error)]
    Api { status: u16, body: ErrorBody },
    #[error("unexpected answer {status}: {detail}")]
    Unexpected { status: u16, detail: String },
}

/// What the engine said to a SOAP request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SoapAnswer {
    /// Asynchronous request taken; `body` is the acknowledgement envelope.
    Accepted { instance: String, body: String },
    /// Synchronous result, or a fault, within the long-poll window.
    Answered { status: u16, instance: Option<String>, body: String },
    /// Still open; resume with `token`.
    Pending { instance: String, token: String },
}

impl SoapAnswer {
    pub fn instance(&self) -> Option<&str> {
        match self {
            SoapAnswer::Accepted { instance, .. } | SoapAnswer::Pending { instance, .. } => Some(instance),
            SoapAnswer::Answered { instance, .. } => instance.as_deref(),
        }
    }
}

/// A task page fetch. 410 pages are returned, not treated as errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub status: u16,
    pub html: String,
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

fn header(h: &HeaderMap, name: &str) -> Option<String> {
    h.get(name).and_then(|v| v.to_str().ok()).map(str::to_string)
}

impl Client {
    pub fn new(base: impl Into<String>) -> Self {
        Client::with_http(base, reqwest::Client::new())
    }

    pub fn with_http(base: impl Into<String>, http: reqwest::Client) -> Self {
        let base = base.into().trim_end_matches('/').to_string();
        Client { base, http }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn soap(&self, service: &str, envelope: &str, token: Option<&str>) -> Result<SoapAnswer, ClientError> {
        let mut req = self.http.post(self.url(&format!("/svc/{service}"))).header(CONTENT_TYPE, "text/xml; charset=utf-8").body(envelope.to_string());
        if let Some(t) = token {
            req = req.header(RESUME_TOKEN_HEADER, t);
        }
        let r = req.send().await?;
        let status = r.status();
        let instance = header(r.headers(), INSTANCE_HEADER);
        let token = header(r.headers(), RESUME_TOKEN_HEADER);
        let body = r.text().await?;
        Ok(match (status, instance, token) {
            (StatusCode::ACCEPTED, Some(instance), Some(token)) => SoapAnswer::Pending { instance, token },
            (StatusCode::ACCEPTED, Some(instance), None) => SoapAnswer::Accepted { instance, body },
            (s, instance, _) => SoapAnswer::Answered { status: s.as_u16(), instance, body },
        })
    }

    pub async fn send_soap(&self, service: &str, envelope: &str) -> Result<SoapAnswer, ClientError> {
        self.soap(service, envelope, None).await
    }

    /// Continues waiting on a parked synchronous request.
    pub async fn resume(&self, service: &str, token: &str) -> Result<SoapAnswer, ClientError> {
        self.soap(service, "", Some(token)).await
    }

    /// Sends and keeps resuming until the request is answered.
    pub async fn call(&self, service: &str, envelope: &str) -> Result<SoapAnswer, ClientError> {
        let mut a = self.send_soap(service, envelope).await?;
        while let SoapAnswer::Pending { token, .. } = &a {
            a = self.resume(service, token).await?;
        }
        Ok(a)
    }

    async fn json<T: serde::de::DeserializeOwned>(r: reqwest::Response) -> Result<T, ClientError> {
        let status = r.status();
        let bytes = r.bytes().await?;
        if status.is_success() {
            return serde_json::from_slice(&bytes).map_err(|e| ClientError::Unexpected { status: status.as_u16(), detail: e.to_string() });
        }
        match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(body) => Err(ClientError::Api { status: status.as_u16(), body }),
            Err(_) => Err(ClientError::Unexpected { status: status.as_u16(), detail: String::from_utf8_lossy(&bytes).into_owned() }),
        }
    }

    pub async fn task_ui(&self, id: &str) -> Result<Page, ClientError> {
        let r = self.http.get(self.url(&format!("/task/{id}/ui"))).send().await?;
        let status = r.status().as_u16();
        let html = r.text().await?;
        if status == 200 || status == 410 {
            Ok(Page { status, html })
        } else {
            match serde_json::from_str::<ErrorBody>(&html) {
                Ok(body) => Err(ClientError::Api { status, body }),
                Err(_) => Err(ClientError::Unexpected { status, detail: html }),
            }
        }
    }

    pub async fn submit_result(&self, id: &str, body: &serde_json::Value) -> Result<ResultAck, ClientError> {
        let r = self.http.post(self.url(&format!("/task/{id}/result"))).json(body).send().await?;
        Self::json(r).await
    }

    pub async fn sync(&self, batch: &SyncBatch) -> Result<SyncResponse, ClientError> {
        let r = self.http.post(self.url("/sync")).json(batch).send().await?;
        Self::json(r).await
    }

    pub async fn metrics(&self) -> Result<MetricsReport, ClientError> {
        let r = self.http.get(self.url("/metrics")).send().await?;
        Self::json(r).await
    }

    /// The service's entry page.
    pub async fn entry(&self, service: &str) -> Result<String, ClientError> {
        let r = self.http.get(self.url(&format!("/svc/{service}"))).send().await?;
        let status = r.status().as_u16();
        let text = r.text().await?;
        if status == 200 {
            Ok(text)
        } else {
            Err(ClientError::Unexpected { status, detail: text })
        }
    }

    /// Returns the media type and bytes of a bundle asset.
    pub async fn asset(&self, service: &str, path: &str) -> Result<(String, Vec<u8>), ClientError> {
        let r = self.http.get(self.url(&format!("/bundle/{service}/{path}"))).send().await?;
        let status = r.status().as_u16();
        let media = header(r.headers(), CONTENT_TYPE.as_str()).unwrap_or_default();
        let bytes = r.bytes().await?.to_vec();
        if status == 200 {
            Ok((media, bytes))
        } else {
            Err(ClientError::Unexpected { status, detail: String::from_utf8_lossy(&bytes).into_owned() })
        }
    }
}
