//! Probe input construction for the four settings (base, repeat,
//! repeat_prev, prompt).
//!
//! Spans are byte ranges into the produced text. For the ASCII text that
//! makes up WiC they coincide with character ranges.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{word_count, word_spans, WicInstance};
use crate::error::{Error, Result};

pub const SENTENCE_PLACEHOLDER: &str = "{sentence}";
pub const WORD_PLACEHOLDER: &str = "{word}";

/// Default prompt, with ASCII double quotes in place of typographic ones.
pub const DEFAULT_PROMPT_TEMPLATE: &str =
    "In this sentence \"{sentence}\", \"{word}\" means in one word :";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingKind {
    Base,
    Repeat,
    RepeatPrev,
    Prompt,
}

impl SettingKind {
    pub const ALL: [SettingKind; 4] = [
        SettingKind::Base,
        SettingKind::Repeat,
        SettingKind::RepeatPrev,
        SettingKind::Prompt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SettingKind::Base => "base",
            SettingKind::Repeat => "repeat",
            SettingKind::RepeatPrev => "repeat_prev",
            SettingKind::Prompt => "prompt",
        }
    }
}

impl fmt::Display for SettingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SettingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SettingKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown setting {s:?} (base|repeat|repeat_prev|prompt)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// A validated prompt template: `{sentence}` and `{word}` each occur once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        for placeholder in [SENTENCE_PLACEHOLDER, WORD_PLACEHOLDER] {
            let n = text.matches(placeholder).count();
            if n != 1 {
                return Err(Error::validation(format!(
                    "prompt template must contain {placeholder} exactly once (found {n})"
                )));
            }
        }
        Ok(PromptTemplate { text })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Substitutes both placeholders in a single pass so that placeholder
    /// text inside the sentence is left alone.
    pub fn render(&self, sentence: &str, word: &str) -> String {
        let s = self.text.find(SENTENCE_PLACEHOLDER).expect("validated");
        let w = self.text.find(WORD_PLACEHOLDER).expect("validated");
        let ((first, first_len, first_val), (second, second_len, second_val)) = if s < w {
            (
                (s, SENTENCE_PLACEHOLDER.len(), sentence),
                (w, WORD_PLACEHOLDER.len(), word),
            )
        } else {
            (
                (w, WORD_PLACEHOLDER.len(), word),
                (s, SENTENCE_PLACEHOLDER.len(), sentence),
            )
        };
        let mut out = String::with_capacity(self.text.len() + sentence.len() + word.len());
        out.push_str(&self.text[..first]);
        out.push_str(first_val);
        out.push_str(&self.text[first + first_len..second]);
        out.push_str(second_val);
        out.push_str(&self.text[second + second_len..]);
        out
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            text: DEFAULT_PROMPT_TEMPLATE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeSetting {
    pub kind: SettingKind,
    /// Only consulted for [`SettingKind::Prompt`].
    pub prompt_template: PromptTemplate,
}

impl ProbeSetting {
    pub fn new(kind: SettingKind) -> Self {
        ProbeSetting {
            kind,
            prompt_template: PromptTemplate::default(),
        }
    }

    pub fn prompt(template: PromptTemplate) -> Self {
        ProbeSetting {
            kind: SettingKind::Prompt,
            prompt_template: template,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSpan {
    Chars(Range<usize>),
    /// Pool the final token of the sequence.
    LastToken,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeInput {
    pub text: String,
    pub target_span: TargetSpan,
}

impl ProbeInput {
    /// The surface text under the span, or `None` for [`TargetSpan::LastToken`].
    pub fn span_text(&self) -> Option<&str> {
        match &self.target_span {
            TargetSpan::Chars(r) => Some(&self.text[r.clone()]),
            TargetSpan::LastToken => None,
        }
    }
}

fn word_at(text: &str, idx: usize) -> Result<Range<usize>> {
    let spans = word_spans(text);
    let n = spans.len();
    spans
        .into_iter()
        .nth(idx)
        .ok_or_else(|| Error::validation(format!("word index {idx} out of range ({n} words)")))
}

fn repeated(sentence: &str) -> String {
    let mut text = String::with_capacity(2 * sentence.len() + 1);
    text.push_str(sentence);
    text.push(' ');
    text.push_str(sentence);
    text
}

/// Builds the probe text for one side of an instance. The target occurrence
/// is always chosen by word index, never by searching for the lemma.
pub fn build_probe(
    instance: &WicInstance,
    side: Side,
    setting: &ProbeSetting,
) -> Result<ProbeInput> {
    let (sentence, idx) = match side {
        Side::A => (instance.sentence_a(), instance.idx_a()),
        Side::B => (instance.sentence_b(), instance.idx_b()),
    };
    build_probe_for(sentence, idx, setting)
}

pub fn build_probe_for(sentence: &str, idx: usize, setting: &ProbeSetting) -> Result<ProbeInput> {
    let target = word_at(sentence, idx)?;
    match setting.kind {
        SettingKind::Base => Ok(ProbeInput {
            text: sentence.to_string(),
            target_span: TargetSpan::Chars(target),
        }),
        SettingKind::Repeat | SettingKind::RepeatPrev => {
            let text = repeated(sentence);
            let second = idx + word_count(sentence);
            let word = if setting.kind == SettingKind::Repeat {
                second
            } else {
                // second >= word_count(sentence) >= 1, so a predecessor exists.
                second - 1
            };
            let span = word_at(&text, word)?;
            Ok(ProbeInput {
                text,
                target_span: TargetSpan::Chars(span),
            })
        }
        SettingKind::Prompt => Ok(ProbeInput {
            text: setting.prompt_template.render(sentence, &sentence[target]),
            target_span: TargetSpan::LastToken,
        }),
    }
}
