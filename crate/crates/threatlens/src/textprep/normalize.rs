//! Text normalization.

use super::TextPrepError;

const URL_MARKERS: [&str; 3] = ["http://", "https://", "t.co/"];

/// Normalize raw tweet text into tokens.
///
/// Lower-cases, deletes hyperlinks (maximal substrings starting with
/// `http://`, `https://`, or `t.co/` up to the next whitespace), replaces
/// every character outside `[a-z0-9 .\-_:]` with a space, and splits on
/// whitespace. `#` and `@` are therefore stripped while the word that
/// follows them is kept. Any leftover token still starting with `http` is
/// treated as a hyperlink remnant and dropped.
pub fn normalize(text: &str) -> Result<Vec<String>, TextPrepError> {
    let lowered = text.to_lowercase();
    let stripped = strip_urls(&lowered);
    let mut cleaned = String::with_capacity(stripped.len());
    for ch in stripped.chars() {
        match ch {
            'a'..='z' | '0'..='9' | '.' | '-' | '_' | ':' => cleaned.push(ch),
            _ => cleaned.push(' '),
        }
    }
    let tokens: Vec<String> = cleaned
        .split_whitespace()
        .filter(|t| !t.starts_with("http"))
        .map(str::to_owned)
        .collect();
    if tokens.is_empty() {
        return Err(TextPrepError::EmptyAfterNormalization);
    }
    Ok(tokens)
}

/// Join tokens back into a single string (inverse direction of the final
/// whitespace split; used to state idempotence).
pub fn join_tokens(tokens: &[String]) -> String {
    tokens.join(" ")
}

fn strip_urls(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        if URL_MARKERS.iter().any(|m| rest.starts_with(m)) {
            // Delete up to the next whitespace.
            match rest.find(char::is_whitespace) {
                Some(offset) => i += offset,
                None => break,
            }
        } else {
            let ch = rest.chars().next().expect("non-empty remainder");
            out.push(ch);
            i += ch.len_utf8();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_urls_hashtags_and_specials() {
        let tokens =
            normalize("Vuln: #Microsoft Windows CVE-2017-0016 https://t.co/ZR3DVVgx3j").unwrap();
        assert_eq!(tokens, ["vuln:", "microsoft", "windows", "cve-2017-0016"]);
    }

    #[test]
    fn identity_on_already_normal_input() {
        assert_eq!(normalize("abc").unwrap(), ["abc"]);
    }

    #[test]
    fn all_specials_is_an_error() {
        assert!(matches!(
            normalize("!!! ???"),
            Err(TextPrepError::EmptyAfterNormalization)
        ));
    }

    #[test]
    fn bare_tco_link_is_removed() {
        assert_eq!(normalize("patch now t.co/abc123 kernel").unwrap(), ["patch", "now", "kernel"]);
    }

    #[test]
    fn url_at_end_without_whitespace() {
        assert_eq!(normalize("see https://example.com/x").unwrap(), ["see"]);
    }

    #[test]
    fn http_remnants_are_dropped() {
        // ':' survives normalization, so without the remnant guard this
        // would leak "http:abc".
        assert_eq!(normalize("x http:abc y").unwrap(), ["x", "y"]);
    }

    #[test]
    fn keeps_id_punctuation() {
        assert_eq!(
            normalize("Apache Tomcat-8.5_rc1 fix").unwrap(),
            ["apache", "tomcat-8.5_rc1", "fix"]
        );
    }

    proptest! {
        #[test]
        fn idempotent(text in ".{0,200}") {
            if let Ok(tokens) = normalize(&text) {
                let again = normalize(&join_tokens(&tokens)).unwrap();
                prop_assert_eq!(tokens, again);
            }
        }

        #[test]
        fn tokens_use_allowed_alphabet(text in ".{0,200}") {
            if let Ok(tokens) = normalize(&text) {
                for tok in &tokens {
                    prop_assert!(!tok.is_empty());
                    prop_assert!(!tok.starts_with("http"));
                    prop_assert!(tok
                        .chars()
                        .all(|c| matches!(c, 'a'..='z' | '0'..='9' | '.' | '-' | '_' | ':')));
                }
            }
        }
    }
}
