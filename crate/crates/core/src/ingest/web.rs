//! Live web sources. Only exercised by the opt-in smoke command; tests use
//! fixture corpora.

use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde_json::Value;

use super::{strip_html, DocumentSource, Fetched, IngestError, RawDocument, SourceKind, SourceQuery};

#[derive(Debug, Clone)]
pub struct WebConfig {
    pub user_agent: String,
    pub timeout: Duration,
    /// Minimum spacing between consecutive requests to one host.
    pub min_interval: Duration,
}

impl Default for WebConfig {
    fn default() -> Self {
        WebConfig {
            user_agent: concat!("dallm/", env!("CARGO_PKG_VERSION"), " (research corpus builder)").into(),
            timeout: Duration::from_secs(30),
            min_interval: Duration::from_millis(500),
        }
    }
}

struct PoliteClient {
    client: reqwest::blocking::Client,
    last: Mutex<Option<Instant>>,
    min_interval: Duration,
}

impl PoliteClient {
    fn new(config: &WebConfig) -> Result<Self, IngestError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(config.user_agent.clone())
            .timeout(config.timeout)
            .build()
            .map_err(|e| IngestError::Network(e.to_string()))?;
        Ok(PoliteClient {
            client,
            last: Mutex::new(None),
            min_interval: config.min_interval,
        })
    }

    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<String, IngestError> {
        {
            let mut last = self.last.lock().expect("rate limiter poisoned");
            if let Some(prev) = *last {
                let elapsed = prev.elapsed();
                if elapsed < self.min_interval {
                    std::thread::sleep(self.min_interval - elapsed);
                }
            }
            *last = Some(Instant::now());
        }
        let resp = self
            .client
            .get(url)
            .query(query)
            .send()
            .map_err(|e| IngestError::Network(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(IngestError::Http {
                status: status.as_u16(),
                url: url.to_owned(),
            });
        }
        resp.text().map_err(|e| IngestError::Network(e.to_string()))
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Wikipedia via the MediaWiki search and plain-text extract APIs.
pub struct WikipediaSource {
    http: PoliteClient,
    api: String,
}

impl WikipediaSource {
    pub fn new(config: &WebConfig) -> Result<Self, IngestError> {
        Self::with_endpoint(config, "https://en.wikipedia.org/w/api.php")
    }

    pub fn with_endpoint(config: &WebConfig, api: &str) -> Result<Self, IngestError> {
        Ok(WikipediaSource {
            http: PoliteClient::new(config)?,
            api: api.to_owned(),
        })
    }
}

fn search_titles(json: &Value) -> Vec<String> {
    json.pointer("/query/search")
        .and_then(Value::as_array)
        .map(|hits| {
            hits.iter()
                .filter_map(|h| h.get("title").and_then(Value::as_str).map(str::to_owned))
                .collect()
        })
        .unwrap_or_default()
}

fn page_extract(json: &Value) -> Option<String> {
    json.pointer("/query/pages")?
        .as_object()?
        .values()
        .find_map(|p| p.get("extract").and_then(Value::as_str))
        .map(str::to_owned)
}

impl DocumentSource for WikipediaSource {
    fn kind(&self) -> SourceKind {
        SourceKind::Wikipedia
    }

    fn fetch(&self, query: &SourceQuery) -> Result<Fetched, IngestError> {
        let limit = query.limit().to_string();
        let search: Value = serde_json::from_str(&self.http.get(
            &self.api,
            &[
                ("action", "query"),
                ("list", "search"),
                ("srsearch", &query.term),
                ("srlimit", &limit),
                ("format", "json"),
            ],
        )?)?;
        let mut fetched = Fetched::default();
        for title in search_titles(&search) {
            let page = self.http.get(
                &self.api,
                &[
                    ("action", "query"),
                    ("prop", "extracts"),
                    ("explaintext", "1"),
                    ("redirects", "1"),
                    ("titles", &title),
                    ("format", "json"),
                ],
            );
            let body = match page {
                Ok(text) => serde_json::from_str::<Value>(&text)
                    .ok()
                    .and_then(|v| page_extract(&v))
                    .map(|t| strip_html(&t))
                    .filter(|t| !t.is_empty()),
                Err(IngestError::Http { status, .. }) => {
                    fetched.skipped.push(format!("{title}: http {status}"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            match body {
                Some(body) => fetched.documents.push(RawDocument {
                    source: SourceKind::Wikipedia,
                    term: query.term.clone(),
                    locator: format!("https://en.wikipedia.org/wiki/{}", title.replace(' ', "_")),
                    title,
                    body,
                    retrieved_at: Some(now_secs()),
                }),
                None => {
                    log::warn!("wikipedia: no extract for `{title}`");
                    fetched.skipped.push(format!("{title}: no extract"));
                }
            }
        }
        Ok(fetched)
    }
}

/// Radiopaedia article search scraped from the public HTML pages.
pub struct RadiopaediaSource {
    http: PoliteClient,
    base: String,
}

impl RadiopaediaSource {
    pub fn new(config: &WebConfig) -> Result<Self, IngestError> {
        Self::with_base(config, "https://radiopaedia.org")
    }

    pub fn with_base(config: &WebConfig, base: &str) -> Result<Self, IngestError> {
        Ok(RadiopaediaSource {
            http: PoliteClient::new(config)?,
            base: base.trim_end_matches('/').to_owned(),
        })
    }
}

/// Article paths (`/articles/<slug>`) in page order, without duplicates.
fn article_links(html: &str) -> Vec<String> {
    let mut links: Vec<String> = Vec::new();
    for piece in html.split("href=\"").skip(1) {
        let Some(end) = piece.find('"') else { continue };
        let href = &piece[..end];
        let path = href.split(['?', '#']).next().unwrap_or_default();
        let Some(slug) = path.strip_prefix("/articles/") else {
            continue;
        };
        if slug.is_empty() || slug.contains('/') {
            continue;
        }
        let link = format!("/articles/{slug}");
        if !links.contains(&link) {
            links.push(link);
        }
    }
    links
}

fn html_title(html: &str) -> Option<String> {
    let lower = html.to_ascii_lowercase();
    let start = lower.find("<title")?;
    let open_end = start + lower[start..].find('>')? + 1;
    let close = open_end + lower[open_end..].find("</title>")?;
    let title = strip_html(&html[open_end..close]);
    let title = title.split(" | ").next().unwrap_or_default().trim().to_owned();
    (!title.is_empty()).then_some(title)
}

impl DocumentSource for RadiopaediaSource {
    fn kind(&self) -> SourceKind {
        SourceKind::Radiopaedia
    }

    fn fetch(&self, query: &SourceQuery) -> Result<Fetched, IngestError> {
        let search_url = format!("{}/search", self.base);
        let page = self
            .http
            .get(&search_url, &[("q", &query.term), ("scope", "articles")])?;
        let mut fetched = Fetched::default();
        for link in article_links(&page).into_iter().take(query.limit()) {
            let url = format!("{}{link}", self.base);
            let html = match self.http.get(&url, &[]) {
                Ok(html) => html,
                Err(IngestError::Http { status, .. }) => {
                    fetched.skipped.push(format!("{url}: http {status}"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let body = strip_html(&html);
            if body.is_empty() {
                fetched.skipped.push(format!("{url}: empty body"));
                continue;
            }
            let title = html_title(&html).unwrap_or_else(|| link.trim_start_matches("/articles/").replace('-', " "));
            fetched.documents.push(RawDocument {
                source: SourceKind::Radiopaedia,
                term: query.term.clone(),
                title,
                locator: url,
                body,
                retrieved_at: Some(now_secs()),
            });
        }
        Ok(fetched)
    }
}
