//! Pure extraction from search-result markup and urls.

use scraper::{Html, Selector};
use url::Url;

use crate::error::{Error, Result};

pub const DEFAULT_SUGGESTION_SELECTOR: &str = "#did_u_mean a, #did_you_mean a";
pub const DEFAULT_RESULT_SELECTOR: &str = "a.result__a";
/// Landing-page text is cut to this many characters.
pub const MAX_TEXT_CHARS: usize = 10_000;

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn selector(css: &str) -> Result<Selector> {
    Selector::parse(css).map_err(|e| Error::Config(format!("invalid selector `{css}`: {e}")))
}

/// Text of the spelling-suggestion element, whitespace-normalized.
pub fn extract_did_u_mean(page: &str) -> Option<String> {
    extract_did_u_mean_with(page, DEFAULT_SUGGESTION_SELECTOR).ok().flatten()
}

pub fn extract_did_u_mean_with(page: &str, css: &str) -> Result<Option<String>> {
    let sel = selector(css)?;
    let doc = Html::parse_document(page);
    Ok(doc
        .select(&sel)
        .map(|el| collapse(&el.text().collect::<String>()))
        .find(|t| !t.is_empty()))
}

/// Absolute url of the first organic result. Redirect links carrying the
/// target in a `uddg` parameter are unwrapped.
pub fn extract_first_result(page: &str, css: &str, base: &Url) -> Result<Option<String>> {
    let sel = selector(css)?;
    let doc = Html::parse_document(page);
    let href = match doc.select(&sel).find_map(|el| el.value().attr("href")) {
        Some(h) => h.trim(),
        None => return Ok(None),
    };
    let joined = match base.join(href) {
        Ok(u) => u,
        Err(_) => return Ok(None),
    };
    let target = joined
        .query_pairs()
        .find(|(k, _)| k == "uddg")
        .map(|(_, v)| v.into_owned())
        .unwrap_or_else(|| joined.to_string());
    Ok(Url::parse(&target).ok().map(|u| u.to_string()))
}

/// Visible text of an html page: text nodes outside script/style/head,
/// whitespace-collapsed and truncated to [`MAX_TEXT_CHARS`].
pub fn visible_text(html: &str) -> String {
    let doc = Html::parse_document(html);
    let mut parts = Vec::new();
    for node in doc.root_element().descendants() {
        let Some(text) = node.value().as_text() else {
            continue;
        };
        let hidden = node.ancestors().any(|a| {
            a.value().as_element().is_some_and(|e| {
                matches!(e.name(), "script" | "style" | "noscript" | "head" | "template")
            })
        });
        if !hidden {
            parts.push(&**text);
        }
    }
    let text = collapse(&parts.join(" "));
    match text.char_indices().nth(MAX_TEXT_CHARS) {
        Some((cut, _)) => text[..cut].to_string(),
        None => text,
    }
}

/// Registrable domain of an absolute url, lowercase, without `www`.
pub fn extract_domain(url: &str) -> Result<String> {
    let parsed = Url::parse(url.trim())
        .map_err(|e| Error::InvalidInput(format!("unparseable url `{url}`: {e}")))?;
    let host = parsed
        .host_str()
        .ok_or_else(|| Error::InvalidInput(format!("url without host `{url}`")))?
        .trim_end_matches('.')
        .to_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host).to_string();
    if parsed.host().is_some_and(|h| !matches!(h, url::Host::Domain(_))) {
        return Ok(host);
    }
    Ok(psl::domain_str(&host).map(str::to_string).unwrap_or(host))
}
