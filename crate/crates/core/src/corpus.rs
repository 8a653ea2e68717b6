//! Statement corpus: schema, line-delimited loading, and balance validation.
//!
//! A corpus file holds one JSON object per line. Every statement carries a
//! region, a binary gold label and the full text of its source article.
//! Strict validation additionally requires equal counts per region, equal
//! true/false counts, and publication dates inside the collection window.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Minimum article length, in Unicode scalar values.
pub const MIN_ARTICLE_CHARS: usize = 300;

/// Earliest publication month accepted under strict validation.
pub const EARLIEST_PUBLISHED: YearMonth = YearMonth { year: 2017, month: 4 };
/// Latest publication month accepted under strict validation.
pub const LATEST_PUBLISHED: YearMonth = YearMonth { year: 2023, month: 9 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Africa,
    AsiaPacific,
    Europe,
    LatinAmerica,
    MiddleEast,
    NorthAmerica,
}

impl Region {
    pub const ALL: [Region; 6] = [
        Region::Africa,
        Region::AsiaPacific,
        Region::Europe,
        Region::LatinAmerica,
        Region::MiddleEast,
        Region::NorthAmerica,
    ];

    pub fn hemisphere(self) -> Hemisphere {
        hemisphere(self)
    }

    /// Identifier used in corpus and record files.
    pub fn key(self) -> &'static str {
        match self {
            Region::Africa => "africa",
            Region::AsiaPacific => "asia_pacific",
            Region::Europe => "europe",
            Region::LatinAmerica => "latin_america",
            Region::MiddleEast => "middle_east",
            Region::NorthAmerica => "north_america",
        }
    }

    /// Human-readable name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Region::Africa => "Africa",
            Region::AsiaPacific => "Asia-Pacific",
            Region::Europe => "Europe",
            Region::LatinAmerica => "Latin America",
            Region::MiddleEast => "Middle East",
            Region::NorthAmerica => "North America",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Region {
    type Err = String;

    /// Accepts either the file key (`asia_pacific`) or the report label (`Asia-Pacific`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Region::ALL
            .into_iter()
            .find(|r| r.key() == s || r.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown region '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hemisphere {
    GlobalNorth,
    GlobalSouth,
}

impl Hemisphere {
    pub fn label(self) -> &'static str {
        match self {
            Hemisphere::GlobalNorth => "Global North",
            Hemisphere::GlobalSouth => "Global South",
        }
    }

    pub fn regions(self) -> impl Iterator<Item = Region> {
        Region::ALL.into_iter().filter(move |r| r.hemisphere() == self)
    }
}

/// Africa, Latin America and the Middle East form the Global South; the
/// remaining three regions the Global North.
pub fn hemisphere(region: Region) -> Hemisphere {
    match region {
        Region::Africa | Region::LatinAmerica | Region::MiddleEast => Hemisphere::GlobalSouth,
        Region::AsiaPacific | Region::Europe | Region::NorthAmerica => Hemisphere::GlobalNorth,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    True,
    False,
    Unclear,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::True => "true",
            Verdict::False => "false",
            Verdict::Unclear => "unclear",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Gold labels are binary; `unclear` is only ever a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldLabel {
    True,
    False,
}

impl From<GoldLabel> for Verdict {
    fn from(g: GoldLabel) -> Self {
        match g {
            GoldLabel::True => Verdict::True,
            GoldLabel::False => Verdict::False,
        }
    }
}

impl TryFrom<Verdict> for GoldLabel {
    type Error = Verdict;

    fn try_from(v: Verdict) -> Result<Self, Self::Error> {
        match v {
            Verdict::True => Ok(GoldLabel::True),
            Verdict::False => Ok(GoldLabel::False),
            Verdict::Unclear => Err(v),
        }
    }
}

/// Calendar month, serialized as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct YearMonth {
    pub year: u16,
    pub month: u8,
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("expected YYYY-MM, got '{s}'");
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: u16 = y.parse().map_err(|_| bad())?;
        let month: u8 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(format!("month out of range in '{s}'"));
        }
        Ok(YearMonth { year, month })
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Statement {
    pub id: String,
    pub text: String,
    pub region: Region,
    pub gold: GoldLabel,
    pub source_url: String,
    pub article_text: String,
    pub published: YearMonth,
}

impl Statement {
    pub fn article_chars(&self) -> usize {
        self.article_text.chars().count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub statements: Vec<Statement>,
    pub provenance: BTreeMap<String, String>,
}

impl Corpus {
    pub fn new(statements: Vec<Statement>) -> Self {
        Corpus { statements, provenance: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    /// Writes the corpus in its line-delimited file format.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.statements {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate statement id '{0}'")]
    DuplicateId(String),
    #[error("statement '{id}': article has {chars} characters, minimum is {MIN_ARTICLE_CHARS}")]
    ArticleTooShort { id: String, chars: usize },
    #[error("strict validation failed: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Strict(Vec<Violation>),
}

/// One failed corpus invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Empty,
    DuplicateId { id: String },
    ArticleTooShort { id: String, chars: usize },
    RegionImbalance { counts: BTreeMap<Region, usize> },
    LabelImbalance { n_true: usize, n_false: usize },
    PublishedOutOfRange { id: String, published: YearMonth },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "corpus is empty"),
            Violation::DuplicateId { id } => write!(f, "duplicate id '{id}'"),
            Violation::ArticleTooShort { id, chars } => {
                write!(f, "statement '{id}' article has {chars} characters (< {MIN_ARTICLE_CHARS})")
            }
            Violation::RegionImbalance { counts } => {
                let parts: Vec<String> =
                    counts.iter().map(|(r, n)| format!("{}={n}", r.key())).collect();
                write!(f, "region imbalance: {}", parts.join(", "))
            }
            Violation::LabelImbalance { n_true, n_false } => {
                write!(f, "label imbalance: {n_true} true vs {n_false} false")
            }
            Violation::PublishedOutOfRange { id, published } => write!(
                f,
                "statement '{id}' published {published}, outside {EARLIEST_PUBLISHED}..{LATEST_PUBLISHED}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_statements: usize,
    pub region_counts: BTreeMap<Region, usize>,
    pub n_true: usize,
    pub n_false: usize,
    pub min_article_chars: Option<usize>,
    pub max_article_chars: Option<usize>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_strict_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "statements: {}", self.n_statements)?;
        for r in Region::ALL {
            writeln!(f, "  {:<14} {}", r.label(), self.region_counts.get(&r).copied().unwrap_or(0))?;
        }
        writeln!(f, "labels: {} true / {} false", self.n_true, self.n_false)?;
        if let (Some(lo), Some(hi)) = (self.min_article_chars, self.max_article_chars) {
            writeln!(f, "article length: {lo}..{hi} characters")?;
        }
        if self.violations.is_empty() {
            writeln!(f, "violations: none")
        } else {
            writeln!(f, "violations: {}", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  - {v}")?;
            }
            Ok(())
        }
    }
}

/// Checks every corpus invariant; never fails.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut region_counts: BTreeMap<Region, usize> = Region::ALL.iter().map(|&r| (r, 0)).collect();
    let (mut n_true, mut n_false) = (0, 0);
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    let mut lengths = Vec::with_capacity(corpus.len());

    if corpus.is_empty() {
        violations.push(Violation::Empty);
    }
    for s in &corpus.statements {
        *region_counts.entry(s.region).or_default() += 1;
        match s.gold {
            GoldLabel::True => n_true += 1,
            GoldLabel::False => n_false += 1,
        }
        if !seen.insert(s.id.as_str()) {
            violations.push(Violation::DuplicateId { id: s.id.clone() });
        }
        let chars = s.article_chars();
        lengths.push(chars);
        if chars < MIN_ARTICLE_CHARS {
            violations.push(Violation::ArticleTooShort { id: s.id.clone(), chars });
        }
        if s.published < EARLIEST_PUBLISHED || s.published > LATEST_PUBLISHED {
            violations.push(Violation::PublishedOutOfRange { id: s.id.clone(), published: s.published });
        }
    }

    let first = region_counts.values().next().copied().unwrap_or(0);
    if region_counts.values().any(|&n| n != first) {
        violations.push(Violation::RegionImbalance { counts: region_counts.clone() });
    }
    if n_true != n_false {
        violations.push(Violation::LabelImbalance { n_true, n_false });
    }

    ValidationReport {
        n_statements: corpus.len(),
        region_counts,
        n_true,
        n_false,
        min_article_chars: lengths.iter().min().copied(),
        max_article_chars: lengths.iter().max().copied(),
        violations,
    }
}

/// Parses line-delimited statements. Blank lines are skipped; line numbers are 1-based.
pub fn parse_corpus<R: Read>(reader: R) -> Result<Corpus, CorpusError> {
    let mut statements = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Statement = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Malformed { line: idx + 1, message: e.to_string() })?;
        if !seen.insert(s.id.clone()) {
            return Err(CorpusError::DuplicateId(s.id));
        }
        let chars = s.article_chars();
        if chars < MIN_ARTICLE_CHARS {
            return Err(CorpusError::ArticleTooShort { id: s.id, chars });
        }
        statements.push(s);
    }
    Ok(Corpus::new(statements))
}

/// Loads a corpus file. In non-strict mode balance and date violations are
/// logged as warnings; in strict mode any violation is an error.
pub fn load_corpus(path: &Path, strict: bool) -> Result<Corpus, CorpusError> {
    let bytes = std::fs::read(path)?;
    let mut corpus = parse_corpus(bytes.as_slice())?;
    let report = validate_corpus(&corpus);
    if !report.violations.is_empty() {
        if strict {
            return Err(CorpusError::Strict(report.violations));
        }
        for v in &report.violations {
            log::warn!("{}: {v}", path.display());
        }
    }
    let digest = Sha256::digest(&bytes);
    corpus.provenance.insert("path".into(), path.display().to_string());
    corpus.provenance.insert("sha256".into(), format!("{digest:x}"));
    corpus.provenance.insert("statements".into(), corpus.len().to_string());
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn statement(id: &str, region: Region, gold: GoldLabel) -> Statement {
        Statement {
            id: id.to_string(),
            text: format!("Claim {id}"),
            region,
            gold,
            source_url: format!("https://example.org/{id}"),
            article_text: "x".repeat(MIN_ARTICLE_CHARS),
            published: YearMonth { year: 2020, month: 6 },
        }
    }

    fn balanced() -> Corpus {
        let mut v = Vec::new();
        for (i, r) in Region::ALL.into_iter().enumerate() {
            v.push(statement(&format!("s{i}t"), r, GoldLabel::True));
            v.push(statement(&format!("s{i}f"), r, GoldLabel::False));
        }
        Corpus::new(v)
    }

    #[test]
    fn hemisphere_partition() {
        assert_eq!(hemisphere(Region::Africa), Hemisphere::GlobalSouth);
        assert_eq!(hemisphere(Region::NorthAmerica), Hemisphere::GlobalNorth);
        assert_eq!(Hemisphere::GlobalNorth.regions().count(), 3);
        assert_eq!(Hemisphere::GlobalSouth.regions().count(), 3);
        let south: Vec<_> = Hemisphere::GlobalSouth.regions().collect();
        assert_eq!(south, vec![Region::Africa, Region::LatinAmerica, Region::MiddleEast]);
    }

    #[test]
    fn balanced_fixture_has_no_violations() {
        let r = validate_corpus(&balanced());
        assert!(r.is_strict_valid(), "{r}");
        assert_eq!(r.n_true, 6);
        assert_eq!(r.min_article_chars, Some(300));
    }

    #[test]
    fn region_imbalance_reported() {
        let c = Corpus::new(vec![
            statement("a1", Region::Africa, GoldLabel::True),
            statement("a2", Region::Africa, GoldLabel::False),
            statement("a3", Region::Africa, GoldLabel::True),
            statement("e1", Region::Europe, GoldLabel::False),
        ]);
        let r = validate_corpus(&c);
        assert!(r.violations.iter().any(|v| matches!(v, Violation::RegionImbalance { .. })));
        assert!(!r.violations.iter().any(|v| matches!(v, Violation::LabelImbalance { .. })));
    }

    #[test]
    fn label_imbalance_reported() {
        let mut c = balanced();
        c.statements[1].gold = GoldLabel::True;
        let r = validate_corpus(&c);
        assert_eq!(r.violations, vec![Violation::LabelImbalance { n_true: 7, n_false: 5 }]);
    }

    #[test]
    fn short_article_rejected_with_id() {
        let mut c = balanced();
        c.statements[3].article_text = "y".repeat(250);
        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).unwrap();
        let err = parse_corpus(buf.as_slice()).unwrap_err();
        match err {
            CorpusError::ArticleTooShort { id, chars } => {
                assert_eq!(id, "s1f");
                assert_eq!(chars, 250);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn article_length_counts_scalar_values() {
        let mut s = statement("u", Region::Europe, GoldLabel::True);
        // 300 two-byte characters: 600 bytes but exactly at the minimum.
        s.article_text = "é".repeat(300);
        let c = Corpus::new(vec![s]);
        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).unwrap();
        assert!(parse_corpus(buf.as_slice()).is_ok());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let mut buf = Vec::new();
        balanced().write_jsonl(&mut buf).unwrap();
        buf.extend_from_slice(b"\n{\"id\": \"broken\"\n");
        match parse_corpus(buf.as_slice()).unwrap_err() {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 14),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unclear_gold_is_malformed() {
        let mut s = serde_json::to_value(statement("g", Region::Africa, GoldLabel::True)).unwrap();
        s["gold"] = "unclear".into();
        let line = s.to_string();
        assert!(matches!(parse_corpus(line.as_bytes()), Err(CorpusError::Malformed { line: 1, .. })));
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut c = balanced();
        c.statements[2].id = c.statements[0].id.clone();
        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).unwrap();
        assert!(matches!(parse_corpus(buf.as_slice()), Err(CorpusError::DuplicateId(id)) if id == "s0t"));
    }

    #[test]
    fn published_window() {
        let mut c = balanced();
        c.statements[0].published = YearMonth { year: 2017, month: 3 };
        c.statements[1].published = YearMonth { year: 2023, month: 9 };
        let r = validate_corpus(&c);
        assert_eq!(r.violations.len(), 1);
        assert!(matches!(&r.violations[0], Violation::PublishedOutOfRange { id, .. } if id == "s0t"));
    }

    #[test]
    fn year_month_parse() {
        assert_eq!("2019-07".parse::<YearMonth>().unwrap(), YearMonth { year: 2019, month: 7 });
        assert!("2019-13".parse::<YearMonth>().is_err());
        assert!("2019-7".parse::<YearMonth>().is_err());
    }

    #[test]
    fn region_from_key_or_label() {
        assert_eq!("asia_pacific".parse::<Region>().unwrap(), Region::AsiaPacific);
        assert_eq!("Middle East".parse::<Region>().unwrap(), Region::MiddleEast);
        assert!("antarctica".parse::<Region>().is_err());
    }
}
