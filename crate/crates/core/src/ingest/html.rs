//! Deterministic HTML to plain-text conversion.
//!
//! Rules, applied in order:
//! 1. Comments are removed. `script`, `style`, `nav`, `header`, `footer`,
//!    `aside`, `noscript`, `template`, `svg` and `form` elements are removed
//!    together with their content.
//! 2. Block-level tags (paragraphs, headings, list items, table rows, ...)
//!    become line breaks; all other tags are dropped, keeping their text.
//! 3. A fixed set of character entities is decoded.
//! 4. A `<` that would start a tag, or an `&` that would start a decodable
//!    entity, is followed by a space so that decoded text never re-forms markup.
//! 5. Whitespace runs inside a line collapse to one space, lines are trimmed and
//!    blank lines dropped.
//!
//! Step 4 makes the function idempotent: `strip_html(strip_html(x)) == strip_html(x)`.

const DROPPED_ELEMENTS: [&str; 10] = [
    "script", "style", "nav", "header", "footer", "aside", "noscript", "template", "svg", "form",
];

const BLOCK_TAGS: [&str; 27] = [
    "p",
    "div",
    "br",
    "li",
    "ul",
    "ol",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "tr",
    "td",
    "th",
    "table",
    "section",
    "article",
    "blockquote",
    "pre",
    "hr",
    "dd",
    "dt",
    "dl",
    "title",
    "figcaption",
    "main",
];

const NAMED_ENTITIES: [(&str, &str); 9] = [
    ("amp", "&"),
    ("lt", "<"),
    ("gt", ">"),
    ("quot", "\""),
    ("apos", "'"),
    ("nbsp", " "),
    ("ndash", "\u{2013}"),
    ("mdash", "\u{2014}"),
    ("hellip", "\u{2026}"),
];

pub fn strip_html(input: &str) -> String {
    let text = remove_markup(input);
    let text = decode_entities(&text);
    let text = guard_markup(&text);
    collapse_whitespace(&text)
}

fn starts_tag(next: Option<char>) -> bool {
    matches!(next, Some(c) if c.is_ascii_alphabetic() || c == '/' || c == '!' || c == '?')
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.len() > h.len() {
        return None;
    }
    (0..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

fn remove_markup(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    let mut rest = input;
    while let Some(pos) = rest.find('<') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if tail.starts_with("<!--") {
            rest = match tail.find("-->") {
                Some(end) => &tail[end + 3..],
                None => "",
            };
            continue;
        }
        let Some(close) = tail.find('>').filter(|_| starts_tag(tail[1..].chars().next())) else {
            out.push('<');
            rest = &tail[1..];
            continue;
        };
        let inner = &tail[1..close];
        let closing = inner.starts_with('/');
        let name: String = inner
            .trim_start_matches('/')
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let after = &tail[close + 1..];

        if !closing && DROPPED_ELEMENTS.contains(&name.as_str()) && !inner.ends_with('/') {
            let end_tag = format!("</{name}");
            rest = match find_ci(after, &end_tag) {
                Some(at) => match after[at..].find('>') {
                    Some(gt) => &after[at + gt + 1..],
                    None => "",
                },
                None => "",
            };
            out.push('\n');
            continue;
        }
        if BLOCK_TAGS.contains(&name.as_str()) {
            out.push('\n');
        }
        rest = after;
    }
    out.push_str(rest);
    out
}

/// Recognises a decodable entity at the start of `s` (which begins with `&`).
fn match_entity(s: &str) -> Option<(String, usize)> {
    let semi = s[1..].find(';')? + 1;
    if semi > 12 {
        return None;
    }
    let body = &s[1..semi];
    let decoded = if let Some(num) = body.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None if !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit()) => num.parse().ok()?,
            None => return None,
        };
        match char::from_u32(code)? {
            '\u{a0}' => " ".to_owned(),
            c if c.is_control() && c != '\n' && c != '\t' => return None,
            c => c.to_string(),
        }
    } else {
        NAMED_ENTITIES
            .iter()
            .find(|(name, _)| *name == body)
            .map(|(_, v)| (*v).to_owned())?
    };
    Some((decoded, semi + 1))
}

fn decode_entities(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    let mut rest = input;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        match match_entity(tail) {
            Some((text, len)) => {
                out.push_str(&text);
                rest = &tail[len..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn guard_markup(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    for (i, c) in input.char_indices() {
        out.push(c);
        let tail = &input[i..];
        let needs_space = match c {
            '<' => starts_tag(tail[1..].chars().next()),
            '&' => match_entity(tail).is_some(),
            _ => false,
        };
        if needs_space {
            out.push(' ');
        }
    }
    out
}

fn collapse_whitespace(input: &str) -> String {
    input
        .split('\n')
        .map(|line| line.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|line| !line.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}
