/// Placeholder token substituted for URLs.
pub const URL_TOKEN: &str = "<url>";

/// Lowercased tokens, in text order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream(pub Vec<String>);

impl TokenStream {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_url_start(chunk: &str) -> bool {
    let lower = chunk.get(..8).unwrap_or(chunk).to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Splits `text` into lowercase tokens.
///
/// Words are runs of letters and digits. A `.` or `-` between two word
/// characters stays inside the token (`gate.io`, `xt.com`), and a leading
/// `$` or `#` stays attached (`$gmt`). URLs become [`URL_TOKEN`]. Everything
/// else separates tokens.
pub fn tokenize(text: &str) -> TokenStream {
    let mut out = Vec::new();
    let mut chars = Vec::new();
    for chunk in text.split_whitespace() {
        chars.clear();
        chars.extend(chunk.char_indices());
        tokenize_chunk(chunk, &chars, &mut out);
    }
    TokenStream(out)
}

fn tokenize_chunk(chunk: &str, chars: &[(usize, char)], out: &mut Vec<String>) {
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if (c == 'h' || c == 'H' || c == 'w' || c == 'W') && is_url_start(&chunk[pos..]) {
            // A URL runs to the end of the whitespace-delimited chunk.
            out.push(URL_TOKEN.to_string());
            return;
        }
        let prefixed = (c == '$' || c == '#') && chars.get(i + 1).is_some_and(|&(_, n)| is_word_char(n));
        if !prefixed && !is_word_char(c) {
            i += 1;
            continue;
        }
        let start = pos;
        i += 1;
        loop {
            match chars.get(i) {
                Some(&(_, c)) if is_word_char(c) => i += 1,
                Some(&(_, c)) if (c == '.' || c == '-') && chars.get(i + 1).is_some_and(|&(_, n)| is_word_char(n)) => {
                    i += 2
                }
                _ => break,
            }
        }
        let end = chars.get(i).map_or(chunk.len(), |&(p, _)| p);
        let t = &chunk[start..end];
        out.push(if t.is_ascii() { t.to_ascii_lowercase() } else { t.to_lowercase() });
    }
}
