//! Prompt construction and transcript parsing for the multitask token format:
//!
//! ```text
//! [<|startofprev|> prev-text...] <|startoftranscript|> <|lang|> <|transcribe|or|translate|>
//!     [<|notimestamps|>] (<|t0|> text... <|t1|>)* [<|t|> text...] <|endoftranscript|>
//! ```

use serde::{Deserialize, Serialize};

use super::{specials::language_index, Vocabulary, VocabError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Transcribe,
    Translate,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskSpec {
    /// `None` requests language detection; the prompt then ends at
    /// start-of-transcript.
    pub language: Option<String>,
    pub task: Task,
    pub timestamps: bool,
    pub prev_text: Option<String>,
}

impl TaskSpec {
    pub fn new(language: Option<&str>, task: Task, timestamps: bool) -> Self {
        Self {
            language: language.map(str::to_string),
            task,
            timestamps,
            prev_text: None,
        }
    }

    pub fn validate(&self) -> Result<(), VocabError> {
        match &self.language {
            Some(code) if language_index(code).is_none() => {
                Err(VocabError::UnsupportedLanguage(code.clone()))
            }
            _ => Ok(()),
        }
    }
}

/// A caption read back from decoded tokens. `end` is `None` for a final
/// segment that only has its start timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSegment {
    pub start: f64,
    pub end: Option<f64>,
    pub tokens: Vec<u32>,
    pub text: String,
}

impl Vocabulary {
    /// Builds the decoder prompt. Previous text, when present, is encoded and
    /// left-truncated so that the marker plus text fit in `prev_budget` ids.
    pub fn build_prompt(&self, spec: &TaskSpec, prev_budget: usize) -> Result<Vec<u32>, VocabError> {
        let prev = spec
            .prev_text
            .as_deref()
            .map(|t| self.encode(t))
            .unwrap_or_default();
        self.build_prompt_with_prev(spec, &prev, prev_budget)
    }

    /// Same as [`build_prompt`](Self::build_prompt) with previous context
    /// given as token ids. Special ids in `prev_tokens` are dropped.
    pub fn build_prompt_with_prev(
        &self,
        spec: &TaskSpec,
        prev_tokens: &[u32],
        prev_budget: usize,
    ) -> Result<Vec<u32>, VocabError> {
        spec.validate()?;
        let sp = self.specials();
        let mut prompt = Vec::new();
        let text: Vec<u32> = prev_tokens
            .iter()
            .copied()
            .filter(|&id| (id as usize) < self.n_regular())
            .collect();
        if !text.is_empty() && prev_budget > 1 {
            let keep = text.len().min(prev_budget - 1);
            prompt.push(sp.prev);
            prompt.extend_from_slice(&text[text.len() - keep..]);
        }
        prompt.push(sp.sot);
        let Some(code) = spec.language.as_deref() else {
            return Ok(prompt);
        };
        prompt.push(sp.language(code).expect("validated above"));
        prompt.push(match spec.task {
            Task::Transcribe => sp.transcribe,
            Task::Translate => sp.translate,
        });
        if !spec.timestamps {
            prompt.push(sp.no_timestamps);
        }
        Ok(prompt)
    }

    /// Reads segments out of a decoded sequence.
    ///
    /// Anything up to and including the last start-of-transcript and its task
    /// tokens is treated as prompt and skipped; parsing stops at
    /// end-of-transcript. Without `<|notimestamps|>` (or, for bare bodies,
    /// without any timestamp) the whole body is one segment spanning the
    /// 30 s chunk.
    pub fn parse_transcript(&self, ids: &[u32]) -> Result<Vec<ParsedSegment>, VocabError> {
        let sp = self.specials();
        let mut pos = 0;
        let mut prompt_seen = false;
        let mut no_timestamps = false;
        if let Some(sot) = ids.iter().rposition(|&id| id == sp.sot) {
            prompt_seen = true;
            pos = sot + 1;
            while pos < ids.len() {
                let id = ids[pos];
                if id == sp.no_timestamps {
                    no_timestamps = true;
                } else if !(sp.is_language(id) || id == sp.transcribe || id == sp.translate) {
                    break;
                }
                pos += 1;
            }
        }
        let body_end = ids[pos..]
            .iter()
            .position(|&id| id == sp.eot)
            .map_or(ids.len(), |e| pos + e);
        let body = &ids[pos..body_end];

        for (i, &id) in body.iter().enumerate() {
            if id as usize >= self.len() {
                return Err(VocabError::UnknownId(id));
            }
            if sp.is_control(id) {
                return Err(VocabError::Protocol {
                    pos: pos + i,
                    msg: format!("control token {} inside content", sp.name(id).unwrap()),
                });
            }
        }

        let has_timestamps = body.iter().any(|&id| sp.is_timestamp(id));
        if no_timestamps || (!prompt_seen && !has_timestamps) {
            if let Some(i) = body.iter().position(|&id| sp.is_timestamp(id)) {
                return Err(VocabError::Protocol {
                    pos: pos + i,
                    msg: "timestamp in no-timestamps mode".into(),
                });
            }
            if body.is_empty() {
                return Ok(Vec::new());
            }
            return Ok(vec![ParsedSegment {
                start: 0.0,
                end: Some(30.0),
                tokens: body.to_vec(),
                text: self.decode_text(body),
            }]);
        }

        let mut segments = Vec::new();
        let mut open: Option<(f64, Vec<u32>)> = None;
        let mut last_end = 0.0f64;
        for (i, &id) in body.iter().enumerate() {
            let at = pos + i;
            let violation = |msg: String| VocabError::Protocol { pos: at, msg };
            match (&mut open, sp.token_to_timestamp(id).ok()) {
                (None, Some(t)) => {
                    if t < last_end {
                        return Err(violation(format!(
                            "segment starts at {t:.2} s before previous end {last_end:.2} s"
                        )));
                    }
                    open = Some((t, Vec::new()));
                }
                (None, None) => {
                    return Err(violation("text outside any timestamp pair".into()));
                }
                (Some((_, tokens)), None) => tokens.push(id),
                (Some((start, tokens)), Some(t)) => {
                    if tokens.is_empty() {
                        return Err(violation("timestamp pair encloses no text".into()));
                    }
                    if t < *start {
                        return Err(violation(format!(
                            "end time {t:.2} s precedes start time {start:.2} s"
                        )));
                    }
                    let (start, tokens) = open.take().unwrap();
                    segments.push(ParsedSegment {
                        start,
                        end: Some(t),
                        text: self.decode_text(&tokens),
                        tokens,
                    });
                    last_end = t;
                }
            }
        }
        if let Some((start, tokens)) = open {
            segments.push(ParsedSegment {
                start,
                end: None,
                text: self.decode_text(&tokens),
                tokens,
            });
        }
        Ok(segments)
    }
}
