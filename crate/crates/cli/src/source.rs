use std::path::{Path, PathBuf};

use treetune::data::{load_arff, load_csv, CsvOptions, LabelColumn, OpenMlClient, DEFAULT_OPENML_URL};
use treetune::Dataset;

use crate::error::CliError;
use crate::DataArgs;

pub const CACHE_ENV: &str = "TREETUNE_CACHE_DIR";
pub const OPENML_URL_ENV: &str = "TREETUNE_OPENML_URL";

pub fn cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(dir);
    }
    let base = std::env::var_os("XDG_CACHE_HOME")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| Path::new(&h).join(".cache")))
        .unwrap_or_else(|| PathBuf::from("."));
    base.join("treetune").join("openml")
}

pub fn load(args: &DataArgs) -> Result<Dataset, CliError> {
    let src = args.dataset.as_str();
    let loaded = if let Some(id) = src.strip_prefix("openml:") {
        let id: i64 = id
            .parse()
            .map_err(|_| CliError::config("data", format!("bad OpenML id {id:?}")))?;
        let url = std::env::var(OPENML_URL_ENV).unwrap_or_else(|_| DEFAULT_OPENML_URL.to_string());
        OpenMlClient::with_base_url(url, cache_dir()).fetch(id)
    } else if src.to_ascii_lowercase().ends_with(".csv") {
        let label = match &args.label {
            None => LabelColumn::Last,
            Some(l) => l.parse().map(LabelColumn::Index).unwrap_or_else(|_| LabelColumn::Name(l.clone())),
        };
        load_csv(src, &CsvOptions { label, ..CsvOptions::default() })
    } else {
        load_arff(src)
    };
    loaded.map_err(|e| CliError::data("data", e.to_string()))
}
