//! Market page documents: rendering and a single-pass tokenizer-based parser.
//!
//! A page has one `<head>` holding `<meta name=".." content="..">` fields and
//! one `<div class="similar">` holding `<a class="similar" href="ID">` links.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AppId, AppSnapshot, DownloadBucket};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketPage {
    pub app: AppId,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("malformed document: {0}")]
    MalformedDocument(String),
}

fn malformed(msg: impl Into<String>) -> ParseError {
    ParseError::MalformedDocument(msg.into())
}

const REQUIRED: [&str; 14] = [
    "app",
    "fetch_time",
    "title",
    "developer",
    "category",
    "price",
    "free",
    "downloads_lo",
    "downloads_hi",
    "rating_avg",
    "rating_count",
    "version",
    "last_updated",
    "size_bytes",
];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, ParseError> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        let end = rest[i..].find(';').ok_or_else(|| malformed("unterminated entity"))? + i;
        out.push(match &rest[i + 1..end] {
            "amp" => '&',
            "lt" => '<',
            "gt" => '>',
            "quot" => '"',
            "#39" => '\'',
            other => return Err(malformed(format!("unknown entity &{other};"))),
        });
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn render_page(snapshot: &AppSnapshot, similar: &[AppId]) -> MarketPage {
    let mut raw = String::from("<html>\n<head>\n");
    let mut meta = |name: &str, value: &str| {
        let _ = writeln!(raw, "<meta name=\"{name}\" content=\"{}\">", escape(value));
    };
    meta("app", snapshot.app.as_str());
    meta("fetch_time", &snapshot.fetch_time.to_string());
    meta("title", &snapshot.title);
    meta("developer", &snapshot.developer);
    meta("category", &snapshot.category);
    meta("price", &snapshot.price_cents.to_string());
    meta("free", &snapshot.free.to_string());
    meta("downloads_lo", &snapshot.downloads.lo.to_string());
    meta("downloads_hi", &snapshot.downloads.hi.to_string());
    meta("rating_avg", &snapshot.rating_avg.to_string());
    meta("rating_count", &snapshot.rating_count.to_string());
    meta("version", &snapshot.version);
    meta("last_updated", &snapshot.last_updated.to_string());
    meta("size_bytes", &snapshot.size_bytes.to_string());
    for p in &snapshot.permissions {
        meta("permission", p);
    }
    raw.push_str("</head>\n<body>\n<div class=\"similar\">\n");
    for s in similar {
        let id = escape(s.as_str());
        let _ = writeln!(raw, "<a class=\"similar\" href=\"{id}\">{id}</a>");
    }
    raw.push_str("</div>\n</body>\n</html>\n");
    MarketPage { app: snapshot.app.clone(), raw }
}

struct Tag<'a> {
    name: String,
    closing: bool,
    attrs: Vec<(&'a str, &'a str)>,
}

impl Tag<'_> {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

/// Splits the inside of `<...>` into a tag name and `key="value"` pairs.
fn parse_tag(body: &str) -> Result<Tag<'_>, ParseError> {
    let (closing, body) = match body.strip_prefix('/') {
        Some(b) => (true, b),
        None => (false, body),
    };
    let body = body.trim_end_matches('/').trim();
    let name_end = body.find(char::is_whitespace).unwrap_or(body.len());
    let name = body[..name_end].to_ascii_lowercase();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric()) {
        return Err(malformed(format!("bad tag <{body}>")));
    }
    let mut attrs = Vec::new();
    let mut rest = body[name_end..].trim_start();
    while !rest.is_empty() {
        let eq = rest.find('=').ok_or_else(|| malformed(format!("attribute without value in <{body}>")))?;
        let key = rest[..eq].trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(malformed(format!("bad attribute name {key:?}")));
        }
        let after = rest[eq + 1..].trim_start();
        let quoted = after.strip_prefix('"').ok_or_else(|| malformed(format!("unquoted attribute in <{body}>")))?;
        let close = quoted.find('"').ok_or_else(|| malformed("unterminated attribute value"))?;
        attrs.push((key, &quoted[..close]));
        rest = quoted[close + 1..].trim_start();
    }
    Ok(Tag { name, closing, attrs })
}

const VOID: [&str; 5] = ["meta", "br", "img", "link", "input"];

/// Extracts the snapshot and the de-duplicated similar-app list, in document order.
pub fn parse_page(page: &MarketPage) -> Result<(AppSnapshot, Vec<AppId>), ParseError> {
    let raw = page.raw.as_str();
    if raw.trim().is_empty() {
        return Err(malformed("empty document"));
    }
    let mut stack: Vec<String> = Vec::new();
    let mut heads = 0;
    let mut similar_blocks = 0;
    let mut fields: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut similar: Vec<AppId> = Vec::new();
    let mut seen: BTreeSet<AppId> = BTreeSet::new();

    let mut rest = raw;
    while let Some(open) = rest.find('<') {
        if rest[..open].contains('>') {
            return Err(malformed("stray '>' in text"));
        }
        let close = rest[open..].find('>').ok_or_else(|| malformed("unterminated tag"))? + open;
        if rest[open + 1..close].contains('<') {
            return Err(malformed("unterminated tag"));
        }
        let tag = parse_tag(&rest[open + 1..close])?;
        rest = &rest[close + 1..];
        let inside = |n: &str| stack.iter().any(|s| s == n);

        if tag.closing {
            match stack.pop() {
                Some(top) if top == tag.name => {}
                Some(top) => return Err(malformed(format!("</{}> closes <{top}>", tag.name))),
                None => return Err(malformed(format!("unmatched </{}>", tag.name))),
            }
            continue;
        }
        match tag.name.as_str() {
            "head" => {
                heads += 1;
                if heads > 1 {
                    return Err(malformed("more than one metadata block"));
                }
            }
            "meta" => {
                if stack.last().map(String::as_str) != Some("head") {
                    return Err(malformed("meta outside the metadata block"));
                }
                let (Some(name), Some(content)) = (tag.attr("name"), tag.attr("content")) else {
                    return Err(malformed("meta without name and content"));
                };
                fields.entry(name.to_string()).or_default().push(unescape(content)?);
            }
            "div" if tag.attr("class") == Some("similar") => {
                similar_blocks += 1;
                if similar_blocks > 1 {
                    return Err(malformed("more than one similar-apps block"));
                }
                if !inside("body") {
                    return Err(malformed("similar-apps block outside body"));
                }
            }
            "a" if tag.attr("class") == Some("similar") => {
                if stack.last().map(String::as_str) != Some("div") || !inside("body") {
                    return Err(malformed("similar link outside the similar-apps block"));
                }
                let href = tag.attr("href").ok_or_else(|| malformed("similar link without href"))?;
                let id = AppId::new(unescape(href)?).map_err(|e| malformed(e.to_string()))?;
                if seen.insert(id.clone()) {
                    similar.push(id);
                }
            }
            _ => {}
        }
        if !VOID.contains(&tag.name.as_str()) {
            stack.push(tag.name);
        }
    }
    if rest.contains('>') {
        return Err(malformed("stray '>' in text"));
    }
    if let Some(open) = stack.last() {
        return Err(malformed(format!("unclosed <{open}>")));
    }
    if heads != 1 {
        return Err(malformed("no metadata block"));
    }
    if similar_blocks != 1 {
        return Err(malformed("no similar-apps block"));
    }
    Ok((snapshot_from_fields(&fields)?, similar))
}

fn snapshot_from_fields(fields: &BTreeMap<String, Vec<String>>) -> Result<AppSnapshot, ParseError> {
    for name in REQUIRED {
        match fields.get(name).map(Vec::len) {
            None => return Err(ParseError::MissingField(name.to_string())),
            Some(1) => {}
            Some(_) => return Err(malformed(format!("field {name:?} repeated"))),
        }
    }
    let text = |name: &str| fields[name][0].as_str();
    fn num<T: std::str::FromStr>(name: &str, v: &str) -> Result<T, ParseError> {
        v.parse().map_err(|_| malformed(format!("field {name:?} has invalid value {v:?}")))
    }
    let mut permissions = BTreeSet::new();
    for p in fields.get("permission").into_iter().flatten() {
        if !permissions.insert(p.clone()) {
            return Err(malformed(format!("permission {p:?} repeated")));
        }
    }
    Ok(AppSnapshot {
        app: AppId::new(text("app")).map_err(|e| malformed(e.to_string()))?,
        fetch_time: num("fetch_time", text("fetch_time"))?,
        title: text("title").to_string(),
        developer: text("developer").to_string(),
        category: text("category").to_string(),
        price_cents: num("price", text("price"))?,
        free: num("free", text("free"))?,
        downloads: DownloadBucket::new(
            num("downloads_lo", text("downloads_lo"))?,
            num("downloads_hi", text("downloads_hi"))?,
        )
        .map_err(|e| malformed(e.to_string()))?,
        rating_avg: num("rating_avg", text("rating_avg"))?,
        rating_count: num("rating_count", text("rating_count"))?,
        version: text("version").to_string(),
        last_updated: num::<NaiveDate>("last_updated", text("last_updated"))?,
        size_bytes: num("size_bytes", text("size_bytes"))?,
        permissions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::{app, snapshot};
    use proptest::prelude::*;

    const GOLDEN: &str = r#"<html>
<head>
<meta name="app" content="a">
<meta name="fetch_time" content="1414152000">
<meta name="title" content="Tom &amp; Jerry &quot;Deluxe&quot;">
<meta name="developer" content="Acme &lt;Games&gt;">
<meta name="category" content="ARCADE">
<meta name="price" content="199">
<meta name="free" content="false">
<meta name="downloads_lo" content="1000">
<meta name="downloads_hi" content="5000">
<meta name="rating_avg" content="4.25">
<meta name="rating_count" content="37">
<meta name="version" content="1.0.3">
<meta name="last_updated" content="2014-09-01">
<meta name="size_bytes" content="1887437">
<meta name="permission" content="android.permission.INTERNET">
<meta name="permission" content="android.permission.CAMERA">
</head>
<body>
<div class="similar">
<a class="similar" href="b">B</a>
<a class="similar" href="c">C</a>
<a class="similar" href="b">B again</a>
</div>
</body>
</html>
"#;

    fn page(raw: &str) -> MarketPage {
        MarketPage { app: app("a"), raw: raw.to_string() }
    }

    #[test]
    fn golden_page() {
        let (s, similar) = parse_page(&page(GOLDEN)).unwrap();
        assert_eq!(similar, vec![app("b"), app("c")]);
        assert_eq!(s.app, app("a"));
        assert_eq!(s.title, "Tom & Jerry \"Deluxe\"");
        assert_eq!(s.developer, "Acme <Games>");
        assert_eq!((s.price_cents, s.free, s.rating_count), (199, false, 37));
        assert_eq!(s.downloads, DownloadBucket::new(1000, 5000).unwrap());
        assert_eq!(s.rating_avg, 4.25);
        assert_eq!(s.permissions.len(), 2);
        assert_eq!(s.last_updated.to_string(), "2014-09-01");
    }

    #[test]
    fn missing_price() {
        let raw = GOLDEN.replace("<meta name=\"price\" content=\"199\">\n", "");
        assert_eq!(parse_page(&page(&raw)), Err(ParseError::MissingField("price".into())));
    }

    #[test]
    fn empty_similar_block() {
        let start = GOLDEN.find("<a ").unwrap();
        let end = GOLDEN.find("</div>").unwrap();
        let raw = format!("{}{}", &GOLDEN[..start], &GOLDEN[end..]);
        assert!(parse_page(&page(&raw)).unwrap().1.is_empty());
    }

    #[test]
    fn broken_structure() {
        for raw in [
            "",
            &GOLDEN.replace("</head>", ""),
            &GOLDEN.replace("<div class=\"similar\">", ""),
            &GOLDEN.replace("</html>", "</body>"),
            &GOLDEN.replace("content=\"ARCADE\">", "content=\"ARCADE\""),
            &GOLDEN.replace("</body>", "<div class=\"similar\"></div></body>"),
            &GOLDEN.replace("<head>", "<head><head></head>"),
            &GOLDEN.replace("&amp;", "&bogus;"),
        ] {
            assert!(matches!(parse_page(&page(raw)), Err(ParseError::MalformedDocument(_))), "accepted: {raw:.80}");
        }
        let bad_number = GOLDEN.replace("content=\"37\"", "content=\"many\"");
        assert!(matches!(parse_page(&page(&bad_number)), Err(ParseError::MalformedDocument(_))));
    }

    #[test]
    fn render_round_trip_of_fixture() {
        let mut s = snapshot("com.x");
        s.title = "Quotes \"&\" <tags> 'n' stuff".into();
        let similar = vec![app("b"), app("a.b&c")];
        let (back, sim) = parse_page(&render_page(&s, &similar)).unwrap();
        assert_eq!(back, s);
        assert_eq!(sim, similar);
    }

    proptest! {
        #[test]
        fn parse_inverts_render(
            title in "\\PC{0,30}",
            dev in "[ -~]{1,20}",
            price in 0u64..100_000,
            rating in 0.0f64..=5.0,
            count in 0u64..10_000_000,
            perms in proptest::collection::btree_set("[a-zA-Z._<>&\"']{1,24}", 0..6),
            similar in proptest::collection::vec("[a-z][a-z0-9._&<]{0,12}", 0..8),
        ) {
            let mut s = snapshot("com.prop");
            s.title = title;
            s.developer = dev;
            s.price_cents = price;
            s.free = price == 0;
            s.rating_avg = rating;
            s.rating_count = count;
            s.permissions = perms;
            let ids: Vec<AppId> = similar.iter().map(|x| app(x)).collect();
            let (back, sim) = parse_page(&render_page(&s, &ids)).unwrap();
            prop_assert_eq!(back, s);
            let mut dedup = Vec::new();
            for id in ids {
                if !dedup.contains(&id) {
                    dedup.push(id);
                }
            }
            prop_assert_eq!(sim, dedup);
        }
    }
}
