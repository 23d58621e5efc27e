//! Hangman with letter and whole-word guesses.
//!
//! Guesses use the `[L]` grammar for a single letter and `[WORD]` for the
//! whole word. Repeating a letter is rejected as invalid; a wrong letter or
//! wrong word costs one try. Unfinished games score the revealed fraction.

use std::collections::BTreeSet;

use rand::Rng;

use super::{EnvError, EnvSpec, Game, Outcome};
use crate::rng::SeededRng;

const WORDS: &[&str] = &[
    "anchor", "balloon", "cabinet", "dolphin", "engine", "falcon", "garden", "harbor",
    "island", "jacket", "kettle", "lantern", "marble", "needle", "orchard", "pepper",
    "quartz", "rabbit", "saddle", "tunnel", "umbrella", "velvet", "walnut", "yogurt",
    "zipper", "blanket", "candle", "desert", "feather", "glacier", "helmet", "insect",
    "jungle", "kitchen", "ladder", "mirror", "napkin", "oyster", "pencil", "rocket",
    "silver", "thunder", "violin", "window", "breeze", "castle", "forest", "planet",
    "market", "bridge",
];

/// English letter order by frequency, used by the heuristic guesser.
const FREQUENCY_ORDER: &str = "etaoinshrdlcumwfgypbvkjxqz";

#[derive(Debug, Clone)]
pub struct Hangman {
    word: String,
    guessed: BTreeSet<char>,
    tries_left: usize,
    max_tries: usize,
}

impl Hangman {
    pub fn generate(spec: &EnvSpec, rng: &mut SeededRng) -> Result<Self, EnvError> {
        let tries: usize = spec.knob("tries", 6)?;
        if tries == 0 {
            return Err(EnvError::Config("hangman tries must be positive".into()));
        }
        let word = match spec.knobs.get("word") {
            Some(w) => w.to_ascii_lowercase(),
            None => WORDS[rng.gen_range(0..WORDS.len())].to_string(),
        };
        if word.is_empty() || !word.chars().all(|c| c.is_ascii_lowercase()) {
            return Err(EnvError::Config("hangman word must be ascii letters".into()));
        }
        Ok(Self::with_word(&word, &[], tries))
    }

    pub fn with_word(word: &str, guessed: &[char], tries: usize) -> Self {
        let word = word.to_ascii_lowercase();
        let guessed: BTreeSet<char> = guessed.iter().map(|c| c.to_ascii_lowercase()).collect();
        let misses = guessed.iter().filter(|c| !word.contains(**c)).count();
        Self {
            word,
            guessed,
            tries_left: tries.saturating_sub(misses),
            max_tries: tries,
        }
    }

    pub fn word(&self) -> &str {
        &self.word
    }

    pub fn tries_left(&self) -> usize {
        self.tries_left
    }

    pub fn pattern(&self) -> String {
        self.word
            .chars()
            .map(|c| if self.guessed.contains(&c) { c.to_ascii_uppercase() } else { '_' })
            .collect()
    }

    fn revealed(&self) -> usize {
        self.word.chars().filter(|c| self.guessed.contains(c)).count()
    }

    fn solved(&self) -> bool {
        self.revealed() == self.word.len()
    }

    /// Last bracketed guess in the text.
    fn parse(text: &str) -> Option<String> {
        let start = text.rfind('[')?;
        let end = start + text[start..].find(']')?;
        let inner = text[start + 1..end].trim();
        (!inner.is_empty() && inner.chars().all(|c| c.is_ascii_alphabetic()))
            .then(|| inner.to_ascii_lowercase())
    }
}

impl Game for Hangman {
    fn instructions(&self) -> String {
        "You are playing Hangman. Guess a single letter with [L] (for example [E]) or the \
         whole word with [WORD]. Each wrong guess costs one try. Repeating a letter is invalid."
            .to_string()
    }

    fn goal(&self) -> String {
        format!(
            "Goal: guess the {}-letter word before running out of {} tries.",
            self.word.len(),
            self.max_tries
        )
    }

    fn render(&self) -> String {
        let labels: Vec<String> = (0..self.word.len()).map(|i| format!("C{i:02}")).collect();
        let cells: Vec<String> = self.pattern().chars().map(|c| format!("{c:>3}")).collect();
        let guessed: Vec<String> =
            self.guessed.iter().map(|c| c.to_ascii_uppercase().to_string()).collect();
        format!(
            "{}\n{}\nGuessed: {}. Tries left: {}.\nValid actions: [L] for a letter, [WORD] for the word.",
            labels.join(" "),
            cells.join(" "),
            if guessed.is_empty() { "none".to_string() } else { guessed.join(", ") },
            self.tries_left
        )
    }

    fn apply(&mut self, action: &str) -> Outcome {
        let Some(guess) = Self::parse(action) else {
            return Outcome::Invalid("guess with [L] or [WORD].".into());
        };
        if guess.chars().count() == 1 {
            let c = guess.chars().next().unwrap_or('?');
            if !self.guessed.insert(c) {
                return Outcome::Invalid(format!("you already guessed {}.", c.to_ascii_uppercase()));
            }
            let upper = c.to_ascii_uppercase();
            if self.word.contains(c) {
                if self.solved() {
                    return Outcome::Goal(format!("{upper} completes the word!"));
                }
                return Outcome::Continue(format!("{upper} is in the word."));
            }
            self.tries_left -= 1;
            if self.tries_left == 0 {
                return Outcome::Failure(format!("{upper} is not in the word. No tries left."));
            }
            return Outcome::Continue(format!("{upper} is not in the word."));
        }
        if guess == self.word {
            self.guessed.extend(self.word.chars());
            return Outcome::Goal("You guessed the word!".into());
        }
        self.tries_left -= 1;
        if self.tries_left == 0 {
            return Outcome::Failure("Wrong word. No tries left.".into());
        }
        Outcome::Continue(format!("{} is not the word.", guess.to_ascii_uppercase()))
    }

    fn partial_reward(&self) -> f64 {
        self.revealed() as f64 / self.word.len() as f64
    }

    fn heuristic_action(&self) -> Option<String> {
        FREQUENCY_ORDER
            .chars()
            .find(|c| !self.guessed.contains(c))
            .map(|c| format!("[{}]", c.to_ascii_uppercase()))
    }

    fn action_space(&self) -> Vec<String> {
        ('A'..='Z').map(|c| format!("[{c}]")).collect()
    }

    fn clone_box(&self) -> Box<dyn Game> {
        Box::new(self.clone())
    }
}
