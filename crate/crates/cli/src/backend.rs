use std::fmt;
use std::str::FromStr;

/// `oracle`, `mock[:<seed>]`, `noisy:<p>` or `http:<url>`.
#[derive(Clone, Debug, PartialEq)]
pub enum BackendSpec {
    Oracle,
    Mock(Option<u64>),
    Noisy(f64),
    Http(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind, arg) {
            ("oracle", None) => Ok(BackendSpec::Oracle),
            ("mock", None) => Ok(BackendSpec::Mock(None)),
            ("mock", Some(seed)) => seed
                .parse()
                .map(|s| BackendSpec::Mock(Some(s)))
                .map_err(|_| format!("bad mock seed {seed:?}")),
            ("noisy", Some(p)) => match p.parse::<f64>() {
                Ok(p) if (0.0..=1.0).contains(&p) => Ok(BackendSpec::Noisy(p)),
                _ => Err(format!("flip probability {p:?} must be a number in [0, 1]")),
            },
            ("http", Some(url)) if !url.is_empty() => {
                let url = if url.starts_with("//") {
                    format!("http:{url}")
                } else {
                    url.to_string()
                };
                let url = if url.contains("://") {
                    url
                } else {
                    format!("http://{url}")
                };
                Ok(BackendSpec::Http(url))
            }
            _ => Err(format!(
                "unknown backend {s:?}; expected oracle, mock:<seed>, noisy:<p> or http:<url>"
            )),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Oracle => f.write_str("oracle"),
            BackendSpec::Mock(None) => f.write_str("mock"),
            BackendSpec::Mock(Some(s)) => write!(f, "mock:{s}"),
            BackendSpec::Noisy(p) => write!(f, "noisy:{p}"),
            BackendSpec::Http(url) => write!(f, "http:{url}"),
        }
    }
}
