//! Structural comparison of two landing pages.

use scraper::{Html, Node, Selector};
use serde::{Deserialize, Serialize};

/// Agreeing metrics needed (strictly more than) for two pages to be similar.
pub const AGREEMENT_THRESHOLD: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageMetrics {
    /// Elements in the parsed tree, including ones the parser implies
    /// (`html`, `head`, `body`).
    pub elements: u64,
    /// `a` elements carrying an `href`.
    pub anchors: u64,
    pub images: u64,
    pub scripts: u64,
    /// Whitespace-collapsed text of the first `title`, if any.
    pub title: Option<String>,
    /// Characters of whitespace-collapsed text outside head, script,
    /// style, noscript and template.
    pub text_len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricValue {
    Count(u64),
    Text(Option<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub a: MetricValue,
    pub b: MetricValue,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub metrics: Vec<Metric>,
    pub similar: bool,
}

impl SimilarityReport {
    pub fn agreeing(&self) -> usize {
        self.metrics.iter().filter(|m| m.agrees).count()
    }
}

const HIDDEN: [&str; 5] = ["head", "script", "style", "noscript", "template"];

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn page_metrics(html: &[u8]) -> PageMetrics {
    let doc = Html::parse_document(&String::from_utf8_lossy(html));
    let count = |css: &str| doc.select(&Selector::parse(css).expect("static selector")).count() as u64;
    let title = doc
        .select(&Selector::parse("title").expect("static selector"))
        .next()
        .map(|t| collapse(&t.text().collect::<String>()));

    let mut visible = String::new();
    for node in doc.tree.root().descendants() {
        let Node::Text(t) = node.value() else { continue };
        let hidden = node.ancestors().any(|a| match a.value() {
            Node::Element(e) => HIDDEN.contains(&e.name()),
            _ => false,
        });
        if !hidden {
            visible.push_str(t);
            visible.push(' ');
        }
    }

    PageMetrics {
        elements: doc.tree.nodes().filter(|n| n.value().is_element()).count() as u64,
        anchors: count("a[href]"),
        images: count("img"),
        scripts: count("script"),
        title,
        text_len: collapse(&visible).chars().count() as u64,
    }
}

/// Small counts agree within 2; from 20 upwards within 10% of the larger.
pub fn counts_agree(a: u64, b: u64) -> bool {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if hi < 20 {
        hi - lo <= 2
    } else {
        10 * (hi - lo) <= hi
    }
}

pub fn compare_metrics(a: &PageMetrics, b: &PageMetrics) -> SimilarityReport {
    let count = |name: &str, x: u64, y: u64| Metric {
        name: name.to_string(),
        a: MetricValue::Count(x),
        b: MetricValue::Count(y),
        agrees: counts_agree(x, y),
    };
    let metrics = vec![
        count("elements", a.elements, b.elements),
        count("anchors", a.anchors, b.anchors),
        count("images", a.images, b.images),
        count("scripts", a.scripts, b.scripts),
        Metric {
            name: "title".to_string(),
            a: MetricValue::Text(a.title.clone()),
            b: MetricValue::Text(b.title.clone()),
            agrees: a.title == b.title,
        },
        count("text_length", a.text_len, b.text_len),
    ];
    let similar = metrics.iter().filter(|m| m.agrees).count() > AGREEMENT_THRESHOLD;
    SimilarityReport { metrics, similar }
}

/// Compares two documents by six structural metrics; similar when more
/// than three agree. Any byte string is accepted.
pub fn compare_landing_pages(html_a: &[u8], html_b: &[u8]) -> SimilarityReport {
    compare_metrics(&page_metrics(html_a), &page_metrics(html_b))
}
