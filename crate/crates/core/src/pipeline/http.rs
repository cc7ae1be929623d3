use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::adapters::{ImageInput, ImageModerator, OcrEngine, TextModerator};
use super::AdapterError;

/// Where and how to POST.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HttpEndpoint {
    pub url: String,
    /// Header carrying the credential, e.g. `Authorization`.
    #[serde(default)]
    pub auth_header: Option<String>,
    /// Environment variable holding the header value.
    #[serde(default)]
    pub auth_env: Option<String>,
}

/// Moderation or OCR service reached over HTTP. Images are sent as PNG
/// bytes, text as UTF-8; moderation responses are JSON `{category: score}`.
#[derive(Clone, Debug)]
pub struct HttpAdapter {
    endpoint: HttpEndpoint,
    agent: ureq::Agent,
    timeout: Duration,
    categories: Vec<String>,
}

impl HttpAdapter {
    pub fn new(endpoint: HttpEndpoint, timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            endpoint,
            timeout,
            categories: Vec::new(),
        }
    }

    /// Categories reported by `TextModerator::categories`; purely
    /// informational, responses may carry any keys.
    pub fn with_categories(mut self, categories: Vec<String>) -> Self {
        self.categories = categories;
        self
    }

    fn protocol(&self, reason: impl Into<String>) -> AdapterError {
        AdapterError::Protocol {
            adapter: self.endpoint.url.clone(),
            reason: reason.into(),
        }
    }

    fn post(&self, content_type: &str, body: &[u8]) -> Result<ureq::Response, AdapterError> {
        let mut req = self
            .agent
            .post(&self.endpoint.url)
            .set("Content-Type", content_type);
        if let (Some(h), Some(var)) = (&self.endpoint.auth_header, &self.endpoint.auth_env) {
            let value = std::env::var(var)
                .map_err(|_| self.protocol(format!("credential variable {var} is not set")))?;
            req = req.set(h, &value);
        }
        req.send_bytes(body).map_err(|e| match e {
            ureq::Error::Status(code, _) => self.protocol(format!("HTTP status {code}")),
            ureq::Error::Transport(t) => {
                let timed_out = matches!(t.kind(), ureq::ErrorKind::Io)
                    && t.to_string().to_lowercase().contains("timed out");
                if timed_out {
                    AdapterError::Timeout {
                        adapter: self.endpoint.url.clone(),
                        ms: self.timeout.as_millis() as u64,
                    }
                } else {
                    self.protocol(t.to_string())
                }
            }
        })
    }

    fn scores(&self, content_type: &str, body: &[u8]) -> Result<BTreeMap<String, f64>, AdapterError> {
        let resp = self.post(content_type, body)?;
        let text = resp
            .into_string()
            .map_err(|e| self.protocol(format!("reading body: {e}")))?;
        parse_scores(&text).map_err(|r| self.protocol(r))
    }
}

/// `{category: score}` with every score a number in [0, 1].
pub(crate) fn parse_scores(body: &str) -> Result<BTreeMap<String, f64>, String> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = v.as_object().ok_or("response is not a JSON object")?;
    let mut out = BTreeMap::new();
    for (k, v) in obj {
        let s = v.as_f64().ok_or_else(|| format!("score for {k:?} is not a number"))?;
        if !(0.0..=1.0).contains(&s) {
            return Err(format!("score for {k:?} outside [0, 1]: {s}"));
        }
        out.insert(k.clone(), s);
    }
    Ok(out)
}

impl TextModerator for HttpAdapter {
    fn name(&self) -> &str {
        &self.endpoint.url
    }

    fn categories(&self) -> Vec<String> {
        self.categories.clone()
    }

    fn score(&self, text: &str) -> Result<BTreeMap<String, f64>, AdapterError> {
        self.scores("text/plain; charset=utf-8", text.as_bytes())
    }
}

impl ImageModerator for HttpAdapter {
    fn name(&self) -> &str {
        &self.endpoint.url
    }

    fn score(&self, image: &ImageInput) -> Result<BTreeMap<String, f64>, AdapterError> {
        self.scores("image/png", &image.bytes)
    }
}

impl OcrEngine for HttpAdapter {
    fn name(&self) -> &str {
        &self.endpoint.url
    }

    /// Accepts either JSON `{"text": ...}` or a plain-text body.
    fn extract(&self, image: &ImageInput) -> Result<String, AdapterError> {
        let resp = self.post("image/png", &image.bytes)?;
        let is_json = resp.content_type().contains("json");
        let body = resp
            .into_string()
            .map_err(|e| self.protocol(format!("reading body: {e}")))?;
        if !is_json {
            return Ok(body.trim().to_string());
        }
        let v: serde_json::Value =
            serde_json::from_str(&body).map_err(|e| self.protocol(format!("invalid JSON: {e}")))?;
        v.get("text")
            .and_then(|t| t.as_str())
            .map(|t| t.trim().to_string())
            .ok_or_else(|| self.protocol("JSON response lacks a \"text\" string"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves one canned response and reports the request head and body.
    fn serve_once(status: &str, content_type: &str, body: &str) -> (String, mpsc::Receiver<(String, Vec<u8>)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/moderate", listener.local_addr().unwrap());
        let resp = format!(
            "HTTP/1.1 {status}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let mut stream = stream;
            stream.write_all(resp.as_bytes()).unwrap();
            tx.send((head, body)).unwrap();
        });
        (url, rx)
    }

    fn endpoint(url: String) -> HttpEndpoint {
        HttpEndpoint {
            url,
            auth_header: None,
            auth_env: None,
        }
    }

    #[test]
    fn text_scores_round_trip_with_credentials() {
        let (url, rx) = serve_once("200 OK", "application/json", r#"{"offensive": 0.9, "suggestive": 0.1}"#);
        std::env::set_var("TEXTCAP_TEST_TOKEN", "Bearer abc");
        let ep = HttpEndpoint {
            auth_header: Some("Authorization".into()),
            auth_env: Some("TEXTCAP_TEST_TOKEN".into()),
            ..endpoint(url)
        };
        let a = HttpAdapter::new(ep, Duration::from_secs(5));
        let s = TextModerator::score(&a, "I hate you").unwrap();
        assert_eq!(s["offensive"], 0.9);
        let (head, body) = rx.recv().unwrap();
        assert!(head.to_lowercase().contains("authorization: bearer abc"));
        assert_eq!(body, b"I hate you");
    }

    #[test]
    fn ocr_accepts_json_or_plain() {
        let img = ImageInput {
            bytes: vec![137, 80, 78, 71],
            path: None,
        };
        let (url, rx) = serve_once("200 OK", "application/json", r#"{"text": "hate\n"}"#);
        let a = HttpAdapter::new(endpoint(url), Duration::from_secs(5));
        assert_eq!(a.extract(&img).unwrap(), "hate");
        assert_eq!(rx.recv().unwrap().1, img.bytes);
        let (url, _rx) = serve_once("200 OK", "text/plain", "you\n");
        let a = HttpAdapter::new(endpoint(url), Duration::from_secs(5));
        assert_eq!(a.extract(&img).unwrap(), "you");
    }

    #[test]
    fn bad_responses_are_protocol_errors() {
        let (url, _rx) = serve_once("500 Internal Server Error", "text/plain", "boom");
        let a = HttpAdapter::new(endpoint(url), Duration::from_secs(5));
        assert!(matches!(TextModerator::score(&a, "x"), Err(AdapterError::Protocol { .. })));
        assert!(parse_scores(r#"{"a": 1.5}"#).is_err());
        assert!(parse_scores(r#"{"a": "high"}"#).is_err());
        assert!(parse_scores("[1]").is_err());
    }

    #[test]
    fn silent_server_times_out() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let hold = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            std::thread::sleep(Duration::from_millis(1500));
            drop(s);
        });
        let a = HttpAdapter::new(endpoint(url), Duration::from_millis(200));
        let r = TextModerator::score(&a, "x");
        assert!(matches!(r, Err(AdapterError::Timeout { .. })), "{r:?}");
        hold.join().unwrap();
    }
}
