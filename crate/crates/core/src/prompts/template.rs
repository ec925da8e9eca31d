use std::collections::BTreeSet;

use super::PromptError;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Var(String),
}

/// Text with `{name}` placeholders, where `name` matches `[a-z_][a-z0-9_]*`.
/// Braces around anything else are literal, so JSON examples need no
/// escaping. Substitution is single-pass: inserted values are never expanded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    pieces: Vec<Piece>,
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z' | '_')) && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

impl Template {
    pub fn parse(name: &str, source: &str) -> Template {
        let mut pieces = Vec::new();
        let mut text = String::new();
        let mut rest = source;
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_ident(&after[..close]) => {
                    text.push_str(&rest[..open]);
                    if !text.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    pieces.push(Piece::Var(after[..close].to_owned()));
                    rest = &after[close + 1..];
                }
                _ => {
                    text.push_str(&rest[..=open]);
                    rest = after;
                }
            }
        }
        text.push_str(rest);
        if !text.is_empty() {
            pieces.push(Piece::Text(text));
        }
        Template {
            name: name.to_owned(),
            pieces,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Var(v) => Some(v.as_str()),
                Piece::Text(_) => None,
            })
            .collect()
    }

    /// Checks that the placeholders are exactly `expected`.
    pub fn expect_placeholders(&self, expected: &[&str]) -> Result<(), PromptError> {
        let want: BTreeSet<&str> = expected.iter().copied().collect();
        let have = self.placeholders();
        if let Some(extra) = have.difference(&want).next() {
            return Err(PromptError::UnknownPlaceholder {
                template: self.name.clone(),
                name: (*extra).to_owned(),
            });
        }
        if let Some(missing) = want.difference(&have).next() {
            return Err(PromptError::MissingPlaceholder {
                template: self.name.clone(),
                name: (*missing).to_owned(),
            });
        }
        Ok(())
    }

    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Var(v) => {
                    let value = vars.iter().find(|(k, _)| k == v).map(|(_, val)| *val).ok_or_else(|| {
                        PromptError::MissingVariable {
                            template: self.name.clone(),
                            name: v.clone(),
                        }
                    })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_identifiers_only() {
        let t = Template::parse("t", r#"Hi {name}, emit {"key": 1} and {Not} {a b} {}{x_1}"#);
        assert_eq!(t.placeholders().into_iter().collect::<Vec<_>>(), ["name", "x_1"]);
        let out = t.render(&[("name", "{x_1}"), ("x_1", "ok")]).unwrap();
        assert_eq!(out, r#"Hi {x_1}, emit {"key": 1} and {Not} {a b} {}ok"#);
    }

    #[test]
    fn missing_variable_and_placeholder_checks() {
        let t = Template::parse("t", "{a}{b}");
        assert!(matches!(
            t.render(&[("a", "1")]),
            Err(PromptError::MissingVariable { .. })
        ));
        assert!(t.expect_placeholders(&["a", "b"]).is_ok());
        assert!(matches!(
            t.expect_placeholders(&["a"]),
            Err(PromptError::UnknownPlaceholder { .. })
        ));
        assert!(matches!(
            t.expect_placeholders(&["a", "b", "c"]),
            Err(PromptError::MissingPlaceholder { .. })
        ));
    }

    #[test]
    fn unterminated_brace_is_literal() {
        let t = Template::parse("t", "a { b {c");
        assert!(t.placeholders().is_empty());
        assert_eq!(t.render(&[]).unwrap(), "a { b {c");
    }
}
