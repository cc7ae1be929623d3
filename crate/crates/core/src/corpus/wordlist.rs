use std::path::Path;

use crate::captcha::TextPayload;

use super::CorpusError;

/// Payloads read from a newline-delimited UTF-8 list, plus what was dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct WordList {
    pub payloads: Vec<TextPayload>,
    pub blank_lines: usize,
    pub duplicates: usize,
}

/// Trims each line, drops blanks and repeated entries (first wins) and
/// assigns ids `w0000`, `w0001`, ... in kept order.
pub fn parse_wordlist(contents: &str) -> Result<WordList, CorpusError> {
    let mut seen = std::collections::HashSet::new();
    let mut payloads = Vec::new();
    let (mut blank_lines, mut duplicates) = (0, 0);
    for line in contents.lines() {
        let text = line.trim();
        if text.is_empty() {
            blank_lines += 1;
            continue;
        }
        if !seen.insert(text.to_string()) {
            duplicates += 1;
            continue;
        }
        payloads.push(TextPayload::new(format!("w{:04}", payloads.len()), text));
    }
    if payloads.is_empty() {
        return Err(CorpusError::EmptyList);
    }
    Ok(WordList {
        payloads,
        blank_lines,
        duplicates,
    })
}

pub fn load_wordlist(path: &Path) -> Result<WordList, CorpusError> {
    let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| CorpusError::Parse {
        path: path.display().to_string(),
        line: 0,
        reason: format!("not UTF-8: {e}"),
    })?;
    parse_wordlist(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_blanks_and_duplicates() {
        let w = parse_wordlist("hate\n\n  \nhate\nyou \n").unwrap();
        let texts: Vec<_> = w.payloads.iter().map(|p| p.text.as_str()).collect();
        assert_eq!(texts, ["hate", "you"]);
        assert_eq!((w.blank_lines, w.duplicates), (2, 1));
        assert_eq!(w.payloads[1].id, "w0001");
    }

    #[test]
    fn empty_list_is_an_error() {
        assert!(matches!(parse_wordlist("\n \n"), Err(CorpusError::EmptyList)));
    }

    #[test]
    fn invalid_utf8_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.txt");
        std::fs::write(&p, [0xff, 0xfe, b'\n']).unwrap();
        assert!(matches!(load_wordlist(&p), Err(CorpusError::Parse { .. })));
    }
}
