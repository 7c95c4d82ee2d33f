const DETACHED: [char; 4] = ['?', '!', '.', ','];

/// Lowercases, splits on whitespace and detaches trailing `? ! . ,` as
/// separate tokens. A bracketed annotation such as `[Laughter]` or
/// `[Throat clearing]` becomes one token, `<laughter>` / `<throat_clearing>`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        match rest.find('[') {
            Some(open) => {
                split_plain(&rest[..open], &mut tokens);
                let after = &rest[open + 1..];
                match after.find(']') {
                    Some(close) => {
                        let inner = after[..close]
                            .split_whitespace()
                            .map(|w| {
                                w.chars()
                                    .filter(|c| c.is_alphanumeric() || matches!(c, '\'' | '-' | '_'))
                                    .collect::<String>()
                                    .to_lowercase()
                            })
                            .filter(|w| !w.is_empty())
                            .collect::<Vec<_>>()
                            .join("_");
                        if !inner.is_empty() {
                            tokens.push(format!("<{inner}>"));
                        }
                        rest = &after[close + 1..];
                    }
                    None => {
                        split_plain(&rest[open..], &mut tokens);
                        rest = "";
                    }
                }
            }
            None => {
                split_plain(rest, &mut tokens);
                rest = "";
            }
        }
    }
    tokens
}

fn split_plain(text: &str, out: &mut Vec<String>) {
    for word in text.split_whitespace() {
        let word = word.to_lowercase();
        let stem = word.trim_end_matches(DETACHED);
        if !stem.is_empty() {
            out.push(stem.to_owned());
        }
        out.extend(word[stem.len()..].chars().map(String::from));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn table_examples() {
        assert_eq!(
            toks("Me, I'm in the legal department."),
            ["me", ",", "i'm", "in", "the", "legal", "department", "."]
        );
        assert_eq!(toks("Right?"), ["right", "?"]);
        assert!(toks("").is_empty());
        assert_eq!(toks("So..."), ["so", ".", ".", "."]);
    }

    #[test]
    fn bracketed_annotations_become_single_tokens() {
        assert_eq!(
            toks("[Laughter] [Throat clearing]"),
            ["<laughter>", "<throat_clearing>"]
        );
        assert_eq!(toks("yeah [laughter]."), ["yeah", "<laughter>", "."]);
    }

    proptest! {
        #[test]
        fn idempotent_on_joined_output(s in "[A-Za-z',.?! \\[\\]]{0,40}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}
