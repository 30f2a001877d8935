//! Prompt templates.
//!
//! Templates are plain UTF-8 text assets with named `{placeholder}` slots.
//! The built-in set lives in `templates/v1/`; a directory with files of the
//! same names can override any of them. Substitution is single-pass, so
//! claim text containing braces or quotes is inserted verbatim.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template {template} uses unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template {template} rendered without a value for {{{name}}}")]
    MissingValue { template: String, name: String },
    #[error("cannot read template {0}: {1}")]
    Io(String, String),
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Text(String),
    Slot(String),
}

/// A parsed template.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    name: String,
    segments: Vec<Segment>,
}

fn is_slot_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl Template {
    /// Parses `source`; only `{name}` with lowercase identifier names are
    /// slots, every other brace is literal text.
    pub fn parse(name: &str, source: &str) -> Self {
        let mut segments = Vec::new();
        let mut text = String::new();
        let mut rest = source;
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_slot_name(&after[..close]) => {
                    text.push_str(&rest[..open]);
                    if !text.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut text)));
                    }
                    segments.push(Segment::Slot(after[..close].to_string()));
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
            segments.push(Segment::Text(text));
        }
        Template {
            name: name.to_string(),
            segments,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn slots(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(n) => Some(n.as_str()),
                Segment::Text(_) => None,
            })
            .collect()
    }

    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let lookup: BTreeMap<&str, &str> = values.iter().copied().collect();
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(n) => match lookup.get(n.as_str()) {
                    Some(v) => out.push_str(v),
                    None => {
                        return Err(TemplateError::MissingValue {
                            template: self.name.clone(),
                            name: n.clone(),
                        })
                    }
                },
            }
        }
        Ok(out)
    }
}

macro_rules! template_set {
    ($( $field:ident => $file:literal : [$($slot:literal),*] ),* $(,)?) => {
        /// The full set of prompt templates used by the guide.
        #[derive(Debug, Clone, PartialEq)]
        pub struct PromptTemplates {
            $( pub $field: Template, )*
        }

        impl PromptTemplates {
            /// Names and allowed slots of every template file.
            pub const FILES: &'static [(&'static str, &'static [&'static str])] = &[
                $( ($file, &[$($slot),*]), )*
            ];

            /// The built-in templates.
            pub fn builtin() -> Self {
                PromptTemplates {
                    $( $field: Template::parse(
                        $file,
                        include_str!(concat!("../templates/v1/", $file)).trim_end(),
                    ), )*
                }
            }

            /// Built-in templates, overridden by same-named files in `dir`.
            pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
                let mut set = Self::builtin();
                $(
                    let path = dir.join($file);
                    if path.exists() {
                        let text = std::fs::read_to_string(&path)
                            .map_err(|e| TemplateError::Io(path.display().to_string(), e.to_string()))?;
                        set.$field = Template::parse($file, text.trim_end());
                    }
                )*
                set.check()?;
                Ok(set)
            }

            /// Rejects templates using slots their call site never fills.
            pub fn check(&self) -> Result<(), TemplateError> {
                $(
                    let allowed: &[&str] = &[$($slot),*];
                    for slot in self.$field.slots() {
                        if !allowed.contains(&slot) {
                            return Err(TemplateError::UnknownPlaceholder {
                                template: $file.to_string(),
                                name: slot.to_string(),
                            });
                        }
                    }
                )*
                Ok(())
            }
        }
    };
}

template_set! {
    brainstorm => "brainstorm.txt": ["problem"],
    issue => "issue.txt": ["problem", "trace"],
    extract_reasons => "extract_reasons.txt": ["issue", "trace"],
    extract_repair => "extract_repair.txt": [],
    organize => "organize.txt": ["issue", "reasons"],
    revise => "revise.txt": ["issue", "reasons", "list", "problems"],
    support_probe => "support_probe.txt": ["issue", "claim_a", "claim_b"],
    attack_probe => "attack_probe.txt": ["issue", "claim_a", "claim_b"],
    assess_unconditional => "assess_unconditional.txt": ["problem", "claim"],
    assess_conditional => "assess_conditional.txt": ["problem", "claim", "pros", "cons"],
    assess_reask => "assess_reask.txt": [],
    draft_answer => "draft_answer.txt": ["problem", "protocol"],
    paraphrase => "paraphrase.txt": ["problem", "n"],
    solve => "solve.txt": ["problem"],
    equivalence => "equivalence.txt": ["problem_a", "answer_a", "problem_b", "answer_b"],
    suspension_answer => "suspension_answer.txt": ["problem", "protocol"],
    followup => "followup.txt": ["protocol"],
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builtin_set_is_consistent() {
        let t = PromptTemplates::builtin();
        t.check().unwrap();
        assert_eq!(
            t.support_probe.slots(),
            ["claim_a", "claim_b", "issue"].into_iter().collect()
        );
    }

    #[test]
    fn literal_braces_survive() {
        let t = Template::parse("t", "a {x} {not a slot} {} {Y} }{");
        assert_eq!(t.render(&[("x", "1")]).unwrap(), "a 1 {not a slot} {} {Y} }{");
    }

    #[test]
    fn missing_value() {
        let t = Template::parse("t", "{a}{b}");
        assert_eq!(
            t.render(&[("a", "1")]),
            Err(TemplateError::MissingValue {
                template: "t".into(),
                name: "b".into()
            })
        );
    }

    #[test]
    fn override_dir_rejects_unknown_slots() {
        let dir = std::env::temp_dir().join(format!("gr-templates-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("solve.txt"), "{problem} {oops}").unwrap();
        let err = PromptTemplates::load_dir(&dir).unwrap_err();
        assert!(matches!(err, TemplateError::UnknownPlaceholder { .. }));
        std::fs::write(dir.join("solve.txt"), "Solve: {problem}").unwrap();
        let set = PromptTemplates::load_dir(&dir).unwrap();
        assert_eq!(set.solve.render(&[("problem", "x")]).unwrap(), "Solve: x");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    proptest! {
        #[test]
        fn values_are_inserted_verbatim(a in ".*", b in "[{}'\"a-z_ ]*") {
            let t = PromptTemplates::builtin();
            let out = t.support_probe.render(&[("issue", "{claim_a}"), ("claim_a", &a), ("claim_b", &b)]).unwrap();
            prop_assert!(out.contains(&a));
            prop_assert!(out.contains(&b));
            prop_assert!(out.starts_with("Central issue: {claim_a}"), "unexpected prefix");
        }

        #[test]
        fn every_template_renders_fully(text in "[^\u{0}]*") {
            let t = PromptTemplates::builtin();
            for (file, slots) in PromptTemplates::FILES {
                let tpl = [
                    &t.brainstorm, &t.issue, &t.extract_reasons, &t.extract_repair, &t.organize,
                    &t.revise, &t.support_probe, &t.attack_probe, &t.assess_unconditional,
                    &t.assess_conditional, &t.assess_reask, &t.draft_answer, &t.paraphrase,
                    &t.solve, &t.equivalence, &t.suspension_answer, &t.followup,
                ]
                .into_iter()
                .find(|x| x.name() == *file)
                .unwrap();
                let values: Vec<(&str, &str)> = slots.iter().map(|s| (*s, text.as_str())).collect();
                let out = tpl.render(&values).unwrap();
                for s in *slots {
                    let placeholder = format!("{{{s}}}");
                    // Only the inserted text itself may contain a placeholder.
                    prop_assert!(!out.contains(&placeholder) || text.contains(&placeholder));
                }
            }
        }
    }
}
