//! Prompt assembly from selected keywords.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keywords::KeywordMatch;

pub const DEFAULT_KEYWORD_HEADER: &str = "Objects";
pub const DEFAULT_BASE_PROMPT: &str = "This is a sound of";

/// `{header}: {k1}{sep}{k2}...{glue}{base_prompt}`; the base prompt alone
/// when no keywords are selected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplate {
    pub keyword_header: String,
    pub base_prompt: String,
    pub keyword_separator: String,
    /// Text between the keyword block and the base prompt.
    pub glue: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            keyword_header: DEFAULT_KEYWORD_HEADER.to_string(),
            base_prompt: DEFAULT_BASE_PROMPT.to_string(),
            keyword_separator: ", ".to_string(),
            glue: ". ".to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.base_prompt.is_empty() {
            return Err(Error::InvalidConfig("base prompt must be non-empty".into()));
        }
        Ok(())
    }
}

pub fn build_prompt(template: &PromptTemplate, matches: &[KeywordMatch]) -> String {
    if matches.is_empty() {
        return template.base_prompt.clone();
    }
    let keywords: Vec<&str> = matches.iter().map(|m| m.keyword.as_str()).collect();
    format!(
        "{}: {}{}{}",
        template.keyword_header,
        keywords.join(&template.keyword_separator),
        template.glue,
        template.base_prompt
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matches(kws: &[&str]) -> Vec<KeywordMatch> {
        kws.iter()
            .enumerate()
            .map(|(i, k)| KeywordMatch {
                keyword: k.to_string(),
                similarity: 1.0 - i as f64 * 0.1,
                rank: i + 1,
            })
            .collect()
    }

    #[test]
    fn examples() {
        let t = PromptTemplate::default();
        assert_eq!(
            build_prompt(&t, &matches(&["rain", "thunder"])),
            "Objects: rain, thunder. This is a sound of"
        );
        assert_eq!(build_prompt(&t, &[]), "This is a sound of");
        assert_eq!(build_prompt(&t, &matches(&["dog"])), "Objects: dog. This is a sound of");
    }

    #[test]
    fn empty_base_prompt_is_invalid() {
        let t = PromptTemplate {
            base_prompt: String::new(),
            ..PromptTemplate::default()
        };
        assert!(t.validate().is_err());
        assert!(PromptTemplate::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn prompt_structure(kws in prop::collection::hash_set("[a-z]{3,8}( [a-z]{3,8})?", 0..5)) {
            let kws: Vec<String> = kws.into_iter().collect();
            let refs: Vec<&str> = kws.iter().map(String::as_str).collect();
            let t = PromptTemplate::default();
            let p = build_prompt(&t, &matches(&refs));
            prop_assert!(p.ends_with(&t.base_prompt));
            if !kws.is_empty() {
                let block = p
                    .strip_prefix("Objects: ")
                    .and_then(|r| r.strip_suffix(". This is a sound of"))
                    .unwrap();
                let parsed: Vec<&str> = block.split(", ").collect();
                prop_assert_eq!(parsed, refs);
            } else {
                prop_assert_eq!(p, t.base_prompt);
            }
        }
    }
}
