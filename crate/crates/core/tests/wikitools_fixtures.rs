use std::path::PathBuf;
use std::sync::Arc;

use geocheck_core::chat::{ToolCall, ToolExecutor};
use geocheck_core::wikitools::{
    parse_wiki_html, CountingTransport, FixtureTransport, ManualClock, PageCache, ToolResultKind, WikiTools,
    DEFAULT_TTL_SECS, FETCH_ENTITY_WITH_HEADER, LEDE_HEADER, SECONDS_PER_DAY,
};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/wiki")
}

fn tools() -> (WikiTools, Arc<CountingTransport<FixtureTransport>>, Arc<ManualClock>) {
    let transport = Arc::new(CountingTransport::new(FixtureTransport::new(fixtures())));
    let clock = Arc::new(ManualClock::new(1_700_000_000));
    let t = WikiTools::new(transport.clone(), PageCache::in_memory(DEFAULT_TTL_SECS)).with_clock(clock.clone());
    (t, transport, clock)
}

fn expected(name: &str) -> String {
    std::fs::read_to_string(fixtures().join("expected").join(name)).unwrap()
}

#[test]
fn too_long_listings_match_recorded_observations() {
    let (t, _, _) = tools();
    for (entity, file) in [
        ("Boris Johnson", "boris_johnson.too_long.txt"),
        ("Mike Pompeo", "mike_pompeo.too_long.txt"),
        ("Biafra", "biafra.too_long.txt"),
    ] {
        let r = t.fetch_wikipedia_entity(entity);
        assert_eq!(r.kind, ToolResultKind::TooLong, "{entity}");
        assert_eq!(r.text, expected(file), "{entity}");
    }
}

#[test]
fn header_listing_starts_with_lede() {
    let html = std::fs::read_to_string(fixtures().join("pages/boris_johnson.html")).unwrap();
    let page = parse_wiki_html(&html).unwrap();
    assert_eq!(page.title, "Boris Johnson");
    assert_eq!(page.headers[0], LEDE_HEADER);
    assert_eq!(&page.headers[1..3], ["Early life and education", "Childhood"]);
    assert_eq!(page.headers.len(), page.levels.len());
    // navigation, infobox and edit links never leak into text
    for junk in ["[edit]", "Jump to navigation", "Privacy policy", "Infobox"] {
        assert!(!page.full_text.contains(junk), "{junk}");
    }
}

#[test]
fn header_section_includes_subsections() {
    let (t, _, _) = tools();
    let r = t.fetch_wikipedia_entity_with_header("Boris Johnson", "Foreign policy");
    assert_eq!(r.kind, ToolResultKind::Content);
    assert!(r.text.starts_with("Johnson supported the European Union–Mercosur Free Trade Agreement,[571]"));
    assert!(r.text.contains("\"Special Relationship\""));
    assert!(r.text.contains("Hong Kong national security law"));
    assert!(r.text.contains("no military path to v"));
}

#[test]
fn missing_header_lists_valid_headers() {
    let (t, _, _) = tools();
    let r = t.fetch_wikipedia_entity_with_header("Vladimir Putin", "Controversies");
    assert_eq!(r.kind, ToolResultKind::HeaderError);
    assert!(r.text.starts_with("Could not find Controversies in the Wikipedia page. Valid headers are: ['Contents', "));
    assert!(r.text.contains("'Public image'"));
}

#[test]
fn header_match_ignores_case_and_whitespace() {
    let (t, _, _) = tools();
    let r = t.fetch_wikipedia_entity_with_header("Vladimir Putin", "  public   IMAGE ");
    assert_eq!(r.kind, ToolResultKind::Content);
    assert!(r.text.starts_with("The director of the Levada Center stated in 2015 that"));
}

#[test]
fn ambiguous_entity_lists_ten_candidates() {
    let (t, _, _) = tools();
    let r = t.fetch_wikipedia_entity("Mercury");
    assert_eq!(r.kind, ToolResultKind::Disambiguation);
    assert!(r.text.starts_with("Multiple pages found for Mercury. Candidates: ["));
    assert_eq!(r.text.matches("', '").count() + 1, 10);
}

#[test]
fn unknown_entity_is_not_found() {
    let (t, _, _) = tools();
    let r = t.fetch_wikipedia_entity("zxqv");
    assert_eq!(r.kind, ToolResultKind::NotFound);
    assert_eq!(r.text, "No Wikipedia page found for zxqv. Search results: []");
}

#[test]
fn single_search_result_is_followed() {
    let (t, _, _) = tools();
    let r = t.fetch_wikipedia_entity("Aba");
    assert_ne!(r.kind, ToolResultKind::NotFound);
    assert_ne!(r.kind, ToolResultKind::Disambiguation);
}

#[test]
fn cache_serves_repeat_fetches_without_network() {
    let (t, net, clock) = tools();
    let first = t.fetch_wikipedia_entity("Biafra");
    let after_first = net.calls();
    assert!(after_first > 0);
    clock.advance(DEFAULT_TTL_SECS);
    assert_eq!(t.fetch_wikipedia_entity("Biafra"), first);
    assert_eq!(t.fetch_wikipedia_entity_with_header("biafra", "History").kind, ToolResultKind::Content);
    assert_eq!(net.calls(), after_first);
    clock.advance(SECONDS_PER_DAY);
    assert_eq!(t.fetch_wikipedia_entity("Biafra"), first);
    assert!(net.calls() > after_first, "91-day-old entry must be refetched");
}

#[test]
fn on_disk_cache_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(1_700_000_000));
    let net = Arc::new(CountingTransport::new(FixtureTransport::new(fixtures())));
    let make = || {
        WikiTools::new(net.clone(), PageCache::on_disk(dir.path(), DEFAULT_TTL_SECS).unwrap()).with_clock(clock.clone())
    };
    let first = make().fetch_wikipedia_entity("Mike Pompeo");
    let calls = net.calls();
    assert_eq!(make().fetch_wikipedia_entity("Mike Pompeo"), first);
    assert_eq!(net.calls(), calls);
}

#[test]
fn executor_reports_cache_hits() {
    let (t, _, _) = tools();
    let call = ToolCall::new("1", FETCH_ENTITY_WITH_HEADER, [("entity", "Biafra"), ("header", "Economy")]);
    assert_eq!(t.execute(&call).cache_hit, Some(false));
    assert_eq!(t.execute(&call).cache_hit, Some(true));
    let missing = ToolCall::new("2", FETCH_ENTITY_WITH_HEADER, [("entity", "zxqv"), ("header", "Economy")]);
    assert_eq!(t.execute(&missing).cache_hit, None);
}
