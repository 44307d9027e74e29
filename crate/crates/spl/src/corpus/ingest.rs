//! Live ingestion clients for the NVD CVE API and a GitHub-style commit
//! API, with on-disk caching and retry/backoff. All tests run against
//! fixture servers; nothing here is required for the offline pipeline.

use super::{CommitRecord, CveRecord, FileDiff};
use crate::error::{Error, Result};
use crate::util;
use chrono::{DateTime, Utc};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::time::Duration;

/// Retry policy shared by both clients.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_backoff: Duration::from_millis(250),
        }
    }
}

fn get_with_retry(
    url: &str,
    headers: &[(&str, String)],
    retry: &RetryPolicy,
) -> Result<Value> {
    let mut last_err = None;
    for attempt in 0..retry.max_attempts {
        if attempt > 0 {
            std::thread::sleep(retry.base_backoff * 2u32.pow(attempt - 1));
        }
        let mut request = ureq::get(url);
        for (name, value) in headers {
            request = request.set(name, value);
        }
        match request.call() {
            Ok(response) => {
                return response
                    .into_json::<Value>()
                    .map_err(|e| Error::Network(format!("bad json from {url}: {e}")));
            }
            Err(ureq::Error::Status(404, _)) => return Err(Error::NotFound(url.to_string())),
            Err(ureq::Error::Status(429, _)) => {
                last_err = Some(Error::RateLimited(url.to_string()));
            }
            Err(e) => {
                last_err = Some(Error::Network(format!("{url}: {e}")));
            }
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Network(format!("{url}: no attempts made"))))
}

fn cache_path(dir: &Path, bucket: &str, key: &str) -> PathBuf {
    let safe: String = key
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    dir.join(bucket).join(format!("{safe}.json"))
}

/// Client for the NVD CVE REST API (v2 response shape).
pub struct NvdClient {
    pub base_url: String,
    pub api_key: Option<String>,
    pub cache_dir: PathBuf,
    pub retry: RetryPolicy,
}

impl NvdClient {
    pub fn new(cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_url: "https://services.nvd.nist.gov".into(),
            api_key: std::env::var("NVD_API_KEY").ok(),
            cache_dir: cache_dir.into(),
            retry: RetryPolicy::default(),
        }
    }

    /// Fetch one CVE, serving from the on-disk cache when present.
    pub fn fetch_cve(&self, cve_id: &str) -> Result<CveRecord> {
        let cached = cache_path(&self.cache_dir, "cves", cve_id);
        if cached.exists() {
            let record: CveRecord = serde_json::from_slice(&util::read_file(&cached)?)?;
            return Ok(record);
        }
        let url = format!("{}/rest/json/cves/2.0?cveId={}", self.base_url, cve_id);
        let mut headers = Vec::new();
        if let Some(key) = &self.api_key {
            headers.push(("apiKey", key.clone()));
        }
        let body = get_with_retry(&url, &headers, &self.retry)?;
        let record = parse_nvd_cve(&body, cve_id)?;
        util::atomic_write(&cached, &serde_json::to_vec(&record)?)?;
        Ok(record)
    }
}

fn parse_nvd_cve(body: &Value, cve_id: &str) -> Result<CveRecord> {
    let item = body["vulnerabilities"]
        .as_array()
        .and_then(|v| v.first())
        .map(|v| &v["cve"])
        .ok_or_else(|| Error::NotFound(format!("cve {cve_id} absent from NVD response")))?;
    let description = item["descriptions"]
        .as_array()
        .into_iter()
        .flatten()
        .find(|d| d["lang"] == "en")
        .and_then(|d| d["value"].as_str())
        .unwrap_or_default()
        .to_string();
    let published_time = parse_time(item["published"].as_str().unwrap_or_default())?;
    let weakness = item["weaknesses"]
        .as_array()
        .into_iter()
        .flatten()
        .flat_map(|w| w["description"].as_array().into_iter().flatten())
        .find_map(|d| d["value"].as_str().map(str::to_string));
    let reference_urls = item["references"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|r| r["url"].as_str().map(str::to_string))
        .collect();
    Ok(CveRecord {
        cve_id: item["id"].as_str().unwrap_or(cve_id).to_string(),
        description,
        published_time,
        cwe_id: weakness.clone(),
        // NVD reports the CWE id; the human-readable name arrives with
        // curated corpora, so live ingestion leaves it empty.
        cwe_name: None,
        reference_urls,
    })
}

fn parse_time(text: &str) -> Result<DateTime<Utc>> {
    // NVD omits the zone suffix; git hosts use full RFC 3339.
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Ok(t.with_timezone(&Utc));
    }
    chrono::NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%S%.3f")
        .map(|naive| naive.and_utc())
        .map_err(|e| Error::Network(format!("unparseable timestamp {text:?}: {e}")))
}

/// Client for a GitHub-style REST API serving commit listings and
/// per-commit file patches.
pub struct GitHostClient {
    pub base_url: String,
    pub token: Option<String>,
    pub cache_dir: PathBuf,
    pub retry: RetryPolicy,
    pub page_size: usize,
}

impl GitHostClient {
    pub fn new(cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_url: "https://api.github.com".into(),
            token: std::env::var("GIT_HOST_TOKEN").ok(),
            cache_dir: cache_dir.into(),
            retry: RetryPolicy::default(),
            page_size: 100,
        }
    }

    fn headers(&self) -> Vec<(&'static str, String)> {
        let mut headers = vec![("User-Agent", "spl-ingest".to_string())];
        if let Some(token) = &self.token {
            headers.push(("Authorization", format!("Bearer {token}")));
        }
        headers
    }

    /// Fetch every commit of `repo_id` (paginated), normalized into
    /// [`CommitRecord`]s. `since` restricts to commits after that RFC 3339
    /// instant. The full normalized list is cached per repo.
    pub fn fetch_repo_commits(
        &self,
        repo_id: &str,
        since: Option<&str>,
    ) -> Result<Vec<CommitRecord>> {
        let cache_key = match since {
            Some(s) => format!("{repo_id}@{s}"),
            None => repo_id.to_string(),
        };
        let cached = cache_path(&self.cache_dir, "commits", &cache_key);
        if cached.exists() {
            let records: Vec<CommitRecord> = serde_json::from_slice(&util::read_file(&cached)?)?;
            return Ok(records);
        }
        let mut records = Vec::new();
        let mut page = 1;
        loop {
            let mut url = format!(
                "{}/repos/{}/commits?per_page={}&page={}",
                self.base_url, repo_id, self.page_size, page
            );
            if let Some(s) = since {
                url.push_str(&format!("&since={s}"));
            }
            let body = get_with_retry(&url, &self.headers(), &self.retry)?;
            let listed = body
                .as_array()
                .ok_or_else(|| Error::Network(format!("expected a commit array from {url}")))?;
            if listed.is_empty() {
                break;
            }
            for item in listed {
                let sha = item["sha"]
                    .as_str()
                    .ok_or_else(|| Error::Network("commit without sha".into()))?;
                let detail_url = format!("{}/repos/{}/commits/{}", self.base_url, repo_id, sha);
                let detail = get_with_retry(&detail_url, &self.headers(), &self.retry)?;
                records.push(parse_commit(&detail, repo_id)?);
            }
            if listed.len() < self.page_size {
                break;
            }
            page += 1;
        }
        util::atomic_write(&cached, &serde_json::to_vec(&records)?)?;
        Ok(records)
    }
}

fn parse_commit(detail: &Value, repo_id: &str) -> Result<CommitRecord> {
    let meta = &detail["commit"];
    let author_time = parse_time(meta["author"]["date"].as_str().unwrap_or_default())?;
    let commit_time = parse_time(meta["committer"]["date"].as_str().unwrap_or_default())?;
    let diffs = detail["files"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|file| {
            parse_unified_diff(
                file["filename"].as_str().unwrap_or_default(),
                file["patch"].as_str().unwrap_or_default(),
            )
        })
        .collect();
    Ok(CommitRecord {
        commit_id: detail["sha"].as_str().unwrap_or_default().to_string(),
        repo_id: repo_id.to_string(),
        author: meta["author"]["name"].as_str().unwrap_or_default().to_string(),
        author_time,
        committer: meta["committer"]["name"].as_str().unwrap_or_default().to_string(),
        commit_time,
        message: meta["message"].as_str().unwrap_or_default().to_string(),
        parent_ids: detail["parents"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|p| p["sha"].as_str().map(str::to_string))
            .collect(),
        diffs: diffs,
    })
}

/// Split one file's unified-diff body into added lines, deleted lines and
/// hunk headers.
pub fn parse_unified_diff(file_path: &str, patch: &str) -> FileDiff {
    let mut added = Vec::new();
    let mut deleted = Vec::new();
    let mut hunks = Vec::new();
    for line in patch.lines() {
        if line.starts_with("@@") {
            hunks.push(line.to_string());
        } else if let Some(rest) = line.strip_prefix('+') {
            if !line.starts_with("+++") {
                added.push(rest.to_string());
            }
        } else if let Some(rest) = line.strip_prefix('-') {
            if !line.starts_with("---") {
                deleted.push(rest.to_string());
            }
        }
    }
    FileDiff {
        file_path: file_path.to_string(),
        added_lines: added,
        deleted_lines: deleted,
        hunk_headers: hunks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unified_diff_classifies_lines() {
        let patch = "@@ -10,4 +10,5 @@ static int init(void)\n context\n-    old();\n+    new();\n+    extra();\n--- not a deletion marker line\n";
        let diff = parse_unified_diff("src/init.c", patch);
        assert_eq!(diff.hunk_headers, vec!["@@ -10,4 +10,5 @@ static int init(void)"]);
        assert_eq!(diff.deleted_lines, vec!["    old();"]);
        assert_eq!(diff.added_lines, vec!["    new();", "    extra();"]);
    }

    #[test]
    fn nvd_body_normalizes() {
        let body: Value = serde_json::json!({
            "vulnerabilities": [{ "cve": {
                "id": "CVE-2020-11608",
                "published": "2020-04-07T17:15:00.000",
                "descriptions": [
                    {"lang": "es", "value": "otro"},
                    {"lang": "en", "value": "An issue was discovered in the Linux kernel"}
                ],
                "weaknesses": [{"description": [{"lang": "en", "value": "CWE-476"}]}],
                "references": [{"url": "https://example.org/patch"}]
            }}]
        });
        let record = parse_nvd_cve(&body, "CVE-2020-11608").unwrap();
        assert_eq!(record.cve_id, "CVE-2020-11608");
        assert!(record.description.starts_with("An issue"));
        assert_eq!(record.cwe_id.as_deref(), Some("CWE-476"));
        assert_eq!(record.reference_urls.len(), 1);
    }
}
