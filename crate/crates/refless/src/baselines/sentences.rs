//! Rule-based sentence segmentation.

/// Abbreviations that end with a period but do not end a sentence.
const ABBREVIATIONS: [&str; 16] = [
    "dr", "mr", "mrs", "ms", "prof", "st", "no", "vs", "etc", "e.g", "i.e", "inc", "jr", "sr",
    "gen", "col",
];

fn is_abbreviation(word: &str) -> bool {
    let lower = word.to_lowercase();
    let core = lower.trim_end_matches('.');
    if ABBREVIATIONS.contains(&core) {
        return true;
    }
    // Uppercase initials ("J. Smith") and dotted initialisms ("U.S.").
    let original = word.trim_end_matches('.');
    let letters: Vec<char> = original.chars().filter(|c| *c != '.').collect();
    (letters.len() == 1 && letters[0].is_uppercase())
        || (original.contains('.') && !letters.is_empty() && letters.iter().all(|c| c.is_uppercase()))
}

/// Split text into sentences on terminal punctuation (`.`, `!`, `?`)
/// followed by whitespace and an uppercase letter. A small abbreviation
/// stop-list suppresses false splits. Text without terminal punctuation
/// comes back as a single sentence. Deterministic.
pub fn split_sentences(text: &str) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut sentences = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for (i, word) in words.iter().enumerate() {
        current.push(word);
        let ends_terminal = word.ends_with('.') || word.ends_with('!') || word.ends_with('?');
        if !ends_terminal {
            continue;
        }
        if word.ends_with('.') && is_abbreviation(word) {
            continue;
        }
        let next_upper = words
            .get(i + 1)
            .and_then(|w| w.chars().next())
            .is_some_and(|c| c.is_uppercase());
        if next_upper {
            sentences.push(current.join(" "));
            current.clear();
        }
    }
    if !current.is_empty() {
        sentences.push(current.join(" "));
    }
    if sentences.is_empty() {
        sentences.push(String::new());
    }
    sentences
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_terminal_punctuation() {
        assert_eq!(split_sentences("A b. C d."), vec!["A b.", "C d."]);
    }

    #[test]
    fn abbreviation_suppresses_split() {
        assert_eq!(
            split_sentences("Dr. Smith left. He ran."),
            vec!["Dr. Smith left.", "He ran."]
        );
    }

    #[test]
    fn no_punctuation_is_one_sentence() {
        assert_eq!(
            split_sentences("no punctuation here"),
            vec!["no punctuation here"]
        );
    }

    #[test]
    fn question_and_exclamation_split() {
        assert_eq!(
            split_sentences("Really? Yes! Fine."),
            vec!["Really?", "Yes!", "Fine."]
        );
    }

    #[test]
    fn lowercase_after_period_does_not_split() {
        assert_eq!(
            split_sentences("version 2. of the spec"),
            vec!["version 2. of the spec"]
        );
    }
}
