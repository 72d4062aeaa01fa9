//! Word-level text splitting shared by tokenization, seed extraction and
//! lexicon counting.

/// Emoticons kept as single tokens.
pub const EMOTICONS: [&str; 6] = [":-)", ":-(", ":)", ":(", ";)", "<3"];

/// Lowercased word tokens. Letters, digits, `_` and `'` form words;
/// emoticons from [`EMOTICONS`] stay whole; any other non-whitespace
/// character is a token of its own.
pub fn words(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut rest = lower.as_str();
    while let Some(ch) = rest.chars().next() {
        if ch.is_alphanumeric() || ch == '_' || ch == '\'' {
            cur.push(ch);
            rest = &rest[ch.len_utf8()..];
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if let Some(e) = EMOTICONS.iter().find(|e| rest.starts_with(*e)) {
            out.push(e.to_string());
            rest = &rest[e.len()..];
            continue;
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
        rest = &rest[ch.len_utf8()..];
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Concept surface normalization: trim, lowercase, inner whitespace to `_`.
pub fn normalize_concept(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation() {
        assert_eq!(words("Hello, World! It's 2x."), ["hello", ",", "world", "!", "it's", "2x", "."]);
        assert!(words("   ").is_empty());
        assert_eq!(words("fun :) but sad :-("), ["fun", ":)", "but", "sad", ":-("]);
    }

    #[test]
    fn normalizes() {
        assert_eq!(normalize_concept("  Nuclear   Power "), "nuclear_power");
        assert_eq!(normalize_concept("teacher"), "teacher");
    }
}
