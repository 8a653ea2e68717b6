//! Wikipedia article HTML → ordered sections.

use std::collections::BTreeMap;

use ego_tree::NodeRef;
use scraper::{Html, Node, Selector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pseudo-header holding the lede, i.e. the text before the first heading.
pub const LEDE_HEADER: &str = "Contents";

const SKIP_TAGS: &[&str] = &["script", "style", "noscript", "table", "figure", "img", "link", "meta", "math"];

const SKIP_CLASSES: &[&str] = &[
    "mw-editsection",
    "navbox",
    "vertical-navbox",
    "navbox-styles",
    "toc",
    "sidebar",
    "infobox",
    "hatnote",
    "shortdescription",
    "noprint",
    "mw-jump-link",
    "catlinks",
    "printfooter",
    "metadata",
    "mw-empty-elt",
    "reference-text-hidden",
];

const SKIP_IDS: &[&str] = &["footer", "mw-navigation", "mw-head", "mw-panel", "toc", "catlinks", "siteNotice", "jump-to-nav"];

const BLOCK_TAGS: &[&str] = &["p", "li", "dd", "dt", "blockquote", "pre", "h5", "h6"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiPage {
    pub title: String,
    /// Section headers in document order, starting with [`LEDE_HEADER`].
    pub headers: Vec<String>,
    /// Heading level per header: 0 for the lede, otherwise 2–4.
    pub levels: Vec<u8>,
    /// Text directly under each header, excluding nested subsections.
    pub sections: BTreeMap<String, String>,
    pub full_text: String,
    /// Unix seconds.
    pub fetched_at: u64,
}

impl WikiPage {
    /// Index of `header` under case-insensitive, whitespace-trimmed matching.
    pub fn find_header(&self, header: &str) -> Option<usize> {
        let wanted = normalize_header(header);
        self.headers.iter().position(|h| normalize_header(h) == wanted)
    }

    /// Text of the section at `idx` including all of its nested subsections.
    /// The lede has no subsections.
    pub fn section_text(&self, idx: usize) -> String {
        let level = self.levels[idx];
        let mut end = idx + 1;
        if level > 0 {
            while end < self.headers.len() && self.levels[end] > level {
                end += 1;
            }
        }
        join_nonempty(self.headers[idx..end].iter().map(|h| self.sections[h].as_str()))
    }
}

fn normalize_header(h: &str) -> String {
    h.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn join_nonempty<'a>(parts: impl Iterator<Item = &'a str>) -> String {
    parts.filter(|p| !p.is_empty()).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty document")]
    Empty,
    #[error("unterminated comment starting at byte {0}")]
    UnterminatedComment(usize),
    #[error("unterminated tag '{snippet}' at byte {offset}")]
    UnterminatedTag { offset: usize, snippet: String },
    #[error("document has no article body")]
    NoBody,
}

fn precheck(html: &str) -> Result<(), ParseError> {
    if html.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut pos = 0;
    while let Some(start) = html[pos..].find("<!--") {
        let open = pos + start;
        match html[open + 4..].find("-->") {
            Some(end) => pos = open + 4 + end + 3,
            None => return Err(ParseError::UnterminatedComment(open)),
        }
    }
    if let Some(lt) = html.rfind('<') {
        let rest = &html[lt + 1..];
        let starts_tag = rest.starts_with(|c: char| c.is_ascii_alphabetic() || c == '/');
        if starts_tag && !rest.contains('>') {
            let snippet: String = html[lt..].chars().take(24).collect();
            return Err(ParseError::UnterminatedTag { offset: lt, snippet });
        }
    }
    Ok(())
}

fn skipped(el: &scraper::node::Element) -> bool {
    SKIP_TAGS.contains(&el.name())
        || el.classes().any(|c| SKIP_CLASSES.contains(&c))
        || el.id().is_some_and(|id| SKIP_IDS.contains(&id))
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn collect_text(node: NodeRef<'_, Node>, out: &mut String) {
    match node.value() {
        Node::Text(t) => out.push_str(t),
        Node::Element(el) => {
            if skipped(el) {
                return;
            }
            if el.name() == "br" {
                out.push(' ');
            }
            for child in node.children() {
                collect_text(child, out);
            }
        }
        _ => {}
    }
}

struct Builder {
    headers: Vec<String>,
    levels: Vec<u8>,
    paragraphs: Vec<Vec<String>>,
}

impl Builder {
    fn start(&mut self, header: String, level: u8) {
        let mut name = header;
        if self.headers.contains(&name) {
            let base = name.clone();
            let mut n = 2;
            while self.headers.contains(&name) {
                name = format!("{base} ({n})");
                n += 1;
            }
        }
        self.headers.push(name);
        self.levels.push(level);
        self.paragraphs.push(Vec::new());
    }

    fn walk(&mut self, node: NodeRef<'_, Node>) {
        let Node::Element(el) = node.value() else { return };
        if skipped(el) {
            return;
        }
        let level = match el.name() {
            "h1" => return,
            "h2" => Some(2),
            "h3" => Some(3),
            "h4" => Some(4),
            _ => None,
        };
        if let Some(level) = level {
            let mut text = String::new();
            collect_text(node, &mut text);
            let text = collapse_ws(&text);
            if !text.is_empty() {
                self.start(text, level);
            }
            return;
        }
        if BLOCK_TAGS.contains(&el.name()) {
            let mut text = String::new();
            collect_text(node, &mut text);
            let text = collapse_ws(&text);
            if !text.is_empty() {
                self.paragraphs.last_mut().expect("lede section exists").push(text);
            }
            return;
        }
        for child in node.children() {
            self.walk(child);
        }
    }
}

/// Splits an article into sections at `h2`–`h4` headings. Citation markers
/// such as `[12]` are kept as plain text; navigation, edit links, tables and
/// footers are dropped. Repeated heading names get a ` (2)`, ` (3)`, ...
/// suffix so every header is addressable.
pub fn parse_wiki_html(html: &str) -> Result<WikiPage, ParseError> {
    precheck(html)?;
    let doc = Html::parse_document(html);

    let first_heading = Selector::parse("h1#firstHeading").expect("static selector");
    let title_sel = Selector::parse("title").expect("static selector");
    let title = doc
        .select(&first_heading)
        .next()
        .map(|h| collapse_ws(&h.text().collect::<String>()))
        .or_else(|| {
            doc.select(&title_sel).next().map(|t| {
                let t = collapse_ws(&t.text().collect::<String>());
                t.strip_suffix(" - Wikipedia").map(str::to_string).unwrap_or(t)
            })
        })
        .unwrap_or_default();

    let content_sel = Selector::parse(".mw-parser-output").expect("static selector");
    let body_sel = Selector::parse("body").expect("static selector");
    let root = doc
        .select(&content_sel)
        .next()
        .or_else(|| doc.select(&body_sel).next())
        .ok_or(ParseError::NoBody)?;

    let mut b = Builder { headers: Vec::new(), levels: Vec::new(), paragraphs: Vec::new() };
    b.start(LEDE_HEADER.to_string(), 0);
    for child in root.children() {
        b.walk(child);
    }
    if b.headers.len() == 1 && b.paragraphs[0].is_empty() {
        return Err(ParseError::NoBody);
    }

    let sections: BTreeMap<String, String> =
        b.headers.iter().cloned().zip(b.paragraphs.iter().map(|p| p.join("\n"))).collect();
    let full_text = join_nonempty(b.headers.iter().map(|h| sections[h].as_str()));
    Ok(WikiPage { title, headers: b.headers, levels: b.levels, sections, full_text, fetched_at: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"<html><head><title>Thing - Wikipedia</title></head><body>
        <div id="mw-navigation"><p>Main page</p></div>
        <div class="mw-parser-output">
          <p>Thing is a thing.<sup class="reference">[1]</sup></p>
          <div class="mw-heading mw-heading2"><h2 id="History">History</h2><span class="mw-editsection">[<a>edit</a>]</span></div>
          <p>It began   long ago.</p>
          <table class="infobox"><tr><td>ignored</td></tr></table>
        </div>
        <div id="footer"><p>Text is available under a licence.</p></div>
        </body></html>"#;

    #[test]
    fn minimal_page() {
        let p = parse_wiki_html(MINIMAL).unwrap();
        assert_eq!(p.title, "Thing");
        assert_eq!(p.headers, vec!["Contents", "History"]);
        assert_eq!(p.sections["Contents"], "Thing is a thing.[1]");
        assert_eq!(p.sections["History"], "It began long ago.");
        assert_eq!(p.full_text, "Thing is a thing.[1]\nIt began long ago.");
    }

    #[test]
    fn nested_sections_and_duplicates() {
        let html = "<html><body><div class=\"mw-parser-output\"><p>lede</p>\
            <h2>Career</h2><p>a</p><h3>Early</h3><p>b</p><h4>Detail</h4><p>c</p>\
            <h2>Life</h2><p>d</p><h3>Early</h3><p>e</p></div></body></html>";
        let p = parse_wiki_html(html).unwrap();
        assert_eq!(p.headers, vec!["Contents", "Career", "Early", "Detail", "Life", "Early (2)"]);
        assert_eq!(p.levels, vec![0, 2, 3, 4, 2, 3]);
        assert_eq!(p.section_text(1), "a\nb\nc");
        assert_eq!(p.section_text(2), "b\nc");
        assert_eq!(p.section_text(0), "lede");
        assert_eq!(p.find_header("  early (2) "), Some(5));
        assert_eq!(p.find_header("LIFE"), Some(4));
    }

    #[test]
    fn list_items_are_paragraphs() {
        let html = "<body><h2>Works</h2><ul><li>One</li><li>Two</li></ul></body>";
        let p = parse_wiki_html(html).unwrap();
        assert_eq!(p.sections["Works"], "One\nTwo");
    }

    #[test]
    fn parse_errors_name_construct() {
        assert_eq!(parse_wiki_html("  "), Err(ParseError::Empty));
        assert_eq!(parse_wiki_html("<body><p>x</p><!-- open"), Err(ParseError::UnterminatedComment(14)));
        assert!(matches!(
            parse_wiki_html("<body><p>x</p><div class=\"a\""),
            Err(ParseError::UnterminatedTag { offset: 14, .. })
        ));
        assert_eq!(parse_wiki_html("<html><body></body></html>"), Err(ParseError::NoBody));
    }

    #[test]
    fn sections_keys_subset_of_headers() {
        let p = parse_wiki_html(MINIMAL).unwrap();
        assert!(p.sections.keys().all(|k| p.headers.contains(k)));
        assert_eq!(p.sections.len(), p.headers.len());
    }
}
