/// Characters split off as standalone tokens.
pub const PUNCTUATION: &[char] = &['.', ',', ';', ':', '!', '?', '\'', '"', '(', ')', '-'];

/// Lowercases, splits on whitespace and breaks punctuation into its own tokens.
///
/// ```
/// use sift_core::data::tokenize;
/// assert_eq!(tokenize("A good film."), ["a", "good", "film", "."]);
/// assert_eq!(tokenize("it's"), ["it", "'", "s"]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if PUNCTUATION.contains(&ch) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.extend(ch.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}
