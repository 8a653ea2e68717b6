use crate::corpus::Verdict;

const QUOTES: &[char] = &['"', '\'', '`', '\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}', '\u{00AB}', '\u{00BB}'];

/// Maps a raw model reply to a verdict. After lowercasing and stripping
/// surrounding whitespace, quotes, backticks and trailing periods, the reply
/// is split into words; exactly one distinct label among `true`, `false`
/// and `unclear` yields that verdict, anything else is `Unclear`.
pub fn parse_verdict(raw: &str) -> Verdict {
    let lowered = raw.to_lowercase();
    let mut s = lowered.as_str();
    loop {
        let next = s.trim().trim_matches(QUOTES).trim_end_matches('.');
        if next.len() == s.len() {
            break;
        }
        s = next;
    }
    let mut found: Option<Verdict> = None;
    for word in s.split(|c: char| !c.is_alphanumeric()) {
        let v = match word {
            "true" => Verdict::True,
            "false" => Verdict::False,
            "unclear" => Verdict::Unclear,
            _ => continue,
        };
        match found {
            None => found = Some(v),
            Some(prev) if prev == v => {}
            Some(_) => return Verdict::Unclear,
        }
    }
    found.unwrap_or(Verdict::Unclear)
}
