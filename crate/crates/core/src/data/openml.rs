use std::io::Read;
use std::path::{Path, PathBuf};

use super::{parse_arff, DataError, Dataset};

pub const DEFAULT_OPENML_URL: &str = "https://www.openml.org";

/// Cached files start with this comment when the server names a target.
const TARGET_MARKER: &str = "% openml-default-target: ";

/// Minimal OpenML reader: dataset description lookup by id, then the ARFF
/// download. Downloads are cached as `<cache_dir>/<id>.arff`.
#[derive(Debug, Clone)]
pub struct OpenMlClient {
    base_url: String,
    cache_dir: PathBuf,
}

impl OpenMlClient {
    pub fn new(cache_dir: impl Into<PathBuf>) -> Self {
        Self::with_base_url(DEFAULT_OPENML_URL, cache_dir)
    }

    pub fn with_base_url(base_url: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            cache_dir: cache_dir.into(),
        }
    }

    pub fn cache_path(&self, id: i64) -> PathBuf {
        self.cache_dir.join(format!("{id}.arff"))
    }

    pub fn fetch(&self, id: i64) -> Result<Dataset, DataError> {
        if id <= 0 {
            return Err(DataError::IdNotFound(id));
        }
        let cached = self.cache_path(id);
        let text = if cached.exists() {
            std::fs::read_to_string(&cached).map_err(|source| DataError::Io {
                path: cached.display().to_string(),
                source,
            })?
        } else {
            let text = self.download(id)?;
            write_cache(&cached, &text)?;
            text
        };
        let target = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix(TARGET_MARKER))
            .map(str::trim)
            .filter(|t| !t.is_empty());
        Ok(parse_arff(&text, target)?.with_external_id(id))
    }

    fn download(&self, id: i64) -> Result<String, DataError> {
        let url = format!("{}/api/v1/json/data/{id}", self.base_url);
        let description: serde_json::Value = match get(&url) {
            Ok(body) => serde_json::from_str(&body).map_err(|e| DataError::Transport {
                url: url.clone(),
                message: format!("bad description JSON: {e}"),
            })?,
            // OpenML answers unknown ids with 412 or 404.
            Err(DataError::Http { status: 404 | 412, .. }) => return Err(DataError::IdNotFound(id)),
            Err(e) => return Err(e),
        };
        let desc = &description["data_set_description"];
        let arff_url = desc["url"].as_str().ok_or_else(|| DataError::Transport {
            url: url.clone(),
            message: "description has no download url".into(),
        })?;
        let body = get(arff_url)?;
        // A comma-separated target list names multiple targets; only a single
        // target is usable as the class label.
        match desc["default_target_attribute"].as_str() {
            Some(t) if !t.is_empty() && !t.contains(',') => {
                Ok(format!("{TARGET_MARKER}{t}\n{body}"))
            }
            _ => Ok(body),
        }
    }
}

/// Fetches an OpenML dataset by id using the public server.
pub fn fetch_openml(dataset_id: i64, cache_dir: impl AsRef<Path>) -> Result<Dataset, DataError> {
    OpenMlClient::new(cache_dir.as_ref()).fetch(dataset_id)
}

fn get(url: &str) -> Result<String, DataError> {
    match ureq::get(url).call() {
        Ok(resp) => {
            let mut body = String::new();
            resp.into_reader()
                .read_to_string(&mut body)
                .map_err(|e| DataError::Transport {
                    url: url.to_string(),
                    message: e.to_string(),
                })?;
            Ok(body)
        }
        Err(ureq::Error::Status(status, _)) => Err(DataError::Http {
            url: url.to_string(),
            status,
        }),
        Err(e) => Err(DataError::Transport {
            url: url.to_string(),
            message: e.to_string(),
        }),
    }
}

fn write_cache(path: &Path, text: &str) -> Result<(), DataError> {
    let err = |source| DataError::CacheWrite {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(err)?;
    }
    let tmp = path.with_extension("arff.part");
    std::fs::write(&tmp, text).map_err(err)?;
    std::fs::rename(&tmp, path).map_err(err)
}
