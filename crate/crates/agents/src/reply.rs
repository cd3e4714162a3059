//! Reading a class out of free-text model replies.

use ctg_core::classify::FeatureClass;

use crate::error::{AgentError, Result};

const LABELS: [&str; 3] = ["classification", "class", "verdict"];

fn strip_decoration(s: &str) -> &str {
    s.trim()
        .trim_matches(|c: char| c == '*' || c == '#' || c == '_' || c == '`')
        .trim()
}

fn strip_label<'a>(line: &'a str, labels: &[&str]) -> &'a str {
    let line = strip_decoration(line);
    let lower = line.to_ascii_lowercase();
    for label in labels {
        if let Some(rest) = lower.strip_prefix(label) {
            let rest = rest.trim_start();
            if let Some(after) = rest.strip_prefix(':') {
                let cut = line.len() - after.len();
                return strip_decoration(&line[cut..]);
            }
        }
    }
    line
}

fn leading_token(line: &str) -> Option<(FeatureClass, usize)> {
    let lower = line.to_ascii_lowercase();
    FeatureClass::ALL.iter().find_map(|c| {
        let name = c.as_str();
        let after = lower.strip_prefix(name)?;
        let boundary = after.chars().next().is_none_or(|ch| !ch.is_alphanumeric());
        boundary.then_some((*c, name.len()))
    })
}

fn distinct_tokens(line: &str) -> usize {
    let lower = line.to_ascii_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).collect();
    FeatureClass::ALL
        .iter()
        .filter(|c| words.contains(&c.as_str()))
        .count()
}

/// Finds the first line that starts with a class name (after an optional
/// `Classification:` label) and returns that class with the rest of the
/// reply as the explanation. A reply with no such line, or whose class line
/// names more than one class, is an error.
pub fn parse_reply(text: &str) -> Result<(FeatureClass, String)> {
    let err = || AgentError::ReplyParse {
        raw: text.to_string(),
    };
    let lines: Vec<&str> = text.lines().collect();
    let (idx, class, rest) = lines
        .iter()
        .enumerate()
        .find_map(|(i, line)| {
            let body = strip_label(line, &LABELS);
            leading_token(body).map(|(c, len)| (i, c, &body[len..]))
        })
        .ok_or_else(err)?;
    if distinct_tokens(strip_label(lines[idx], &LABELS)) > 1 {
        return Err(err());
    }

    let head = rest
        .trim_start_matches(|c: char| {
            c.is_whitespace() || matches!(c, '-' | '–' | '—' | ':' | ',' | '.' | ';' | '*')
        })
        .trim_end();
    let mut parts: Vec<&str> = Vec::new();
    if !head.is_empty() {
        parts.push(head);
    }
    for line in &lines[idx + 1..] {
        let body = strip_label(line, &["explanation", "reason", "interpretation"]);
        if !body.is_empty() {
            parts.push(body);
        }
    }
    Ok((class, parts.join("\n")))
}
