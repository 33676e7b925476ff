//! Instruction templates for prompt-based encoders.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PromptTemplate {
    /// Multi-emotion instruction in the `Instruct:`/`Query:` style.
    Me5,
    /// Multi-emotion instruction in the `<instruct>`/`<query>` style.
    BgeV1,
    /// One `<instruct>`/`<query>` prompt per (text, emotion).
    BgeV2,
}

impl PromptTemplate {
    pub const ALL: [PromptTemplate; 3] = [
        PromptTemplate::Me5,
        PromptTemplate::BgeV1,
        PromptTemplate::BgeV2,
    ];

    pub fn requires_emotion(self) -> bool {
        self == PromptTemplate::BgeV2
    }

    pub fn id(self) -> &'static str {
        match self {
            PromptTemplate::Me5 => "ME5",
            PromptTemplate::BgeV1 => "BGEV1",
            PromptTemplate::BgeV2 => "BGEV2",
        }
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for PromptTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ME5" => Ok(PromptTemplate::Me5),
            "BGEV1" => Ok(PromptTemplate::BgeV1),
            "BGEV2" => Ok(PromptTemplate::BgeV2),
            _ => Err(Error::InvalidArgument(format!(
                "unknown prompt template `{s}`"
            ))),
        }
    }
}

/// "a", "a and b", "a, b, and c".
pub fn enumerate_emotions<S: AsRef<str>>(emotions: &[S]) -> String {
    match emotions {
        [] => String::new(),
        [one] => one.as_ref().to_owned(),
        [a, b] => format!("{} and {}", a.as_ref(), b.as_ref()),
        [init @ .., last] => {
            let head: Vec<&str> = init.iter().map(AsRef::as_ref).collect();
            format!("{}, and {}", head.join(", "), last.as_ref())
        }
    }
}

pub fn render_prompt<S: AsRef<str>>(
    template: PromptTemplate,
    text: &str,
    emotion: Option<&str>,
    emotion_list: &[S],
) -> Result<String> {
    if emotion_list.is_empty() {
        return Err(Error::InvalidArgument("emotion list is empty".into()));
    }
    match (template.requires_emotion(), emotion) {
        (true, None) => {
            return Err(Error::InvalidArgument(format!(
                "{template} needs an emotion"
            )))
        }
        (false, Some(e)) => {
            return Err(Error::InvalidArgument(format!(
                "{template} renders all emotions at once; got emotion `{e}`"
            )))
        }
        _ => {}
    }
    if let Some(e) = emotion {
        if !emotion_list.iter().any(|x| x.as_ref() == e) {
            return Err(Error::InvalidArgument(format!(
                "emotion `{e}` not in emotion list"
            )));
        }
    }

    let listed = enumerate_emotions(emotion_list);
    Ok(match template {
        PromptTemplate::Me5 => format!(
            "Instruct: Classify the emotions expressed in the given text snippet by identifying \
             whether each of the following emotions is present: {listed}.\n\nQuery: {text}"
        ),
        PromptTemplate::BgeV1 => format!(
            "<instruct> Represent this text for identifying the presence of emotions: \
             {listed}\n<query> {text}"
        ),
        PromptTemplate::BgeV2 => format!(
            "<instruct> Represent this text for identifying the presence of the emotion {}\n<query> {text}",
            emotion.unwrap_or_default()
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIVE: [&str; 5] = ["joy", "sadness", "anger", "surprise", "disgust"];

    #[test]
    fn me5_golden() {
        assert_eq!(
            render_prompt(PromptTemplate::Me5, "I won!", None, &FIVE).unwrap(),
            "Instruct: Classify the emotions expressed in the given text snippet by identifying \
             whether each of the following emotions is present: joy, sadness, anger, surprise, \
             and disgust.\n\nQuery: I won!"
        );
    }

    #[test]
    fn bgev2_golden() {
        assert_eq!(
            render_prompt(PromptTemplate::BgeV2, "I won!", Some("joy"), &FIVE).unwrap(),
            "<instruct> Represent this text for identifying the presence of the emotion joy\n<query> I won!"
        );
    }

    #[test]
    fn empty_input_allowed() {
        let p = render_prompt(PromptTemplate::BgeV1, "", None, &FIVE).unwrap();
        assert!(p.ends_with("<query> "));
    }

    #[test]
    fn enumeration_forms() {
        assert_eq!(enumerate_emotions(&["joy"]), "joy");
        assert_eq!(enumerate_emotions(&["joy", "fear"]), "joy and fear");
        assert_eq!(enumerate_emotions(&["a", "b", "c"]), "a, b, and c");
    }

    #[test]
    fn argument_errors() {
        assert!(render_prompt(PromptTemplate::BgeV2, "x", None, &FIVE).is_err());
        assert!(render_prompt(PromptTemplate::BgeV2, "x", Some("fear"), &FIVE).is_err());
        assert!(render_prompt(PromptTemplate::Me5, "x", Some("joy"), &FIVE).is_err());
        let none: [&str; 0] = [];
        assert!(render_prompt(PromptTemplate::Me5, "x", None, &none).is_err());
    }
}
