//! Deterministic prompt construction for the large-model backend.
//!
//! Templates live in versioned resource files, one per dataset scale, with
//! `{text}` and `{data}` placeholders. The base prompt asks for a direct
//! sentiment score; the enhanced prompt appends a re-prediction clause that
//! embeds both models' prior predictions and uncertainties for
//! cross-verification. Rendering is a pure function of its inputs and
//! byte-deterministic.

use std::collections::BTreeMap;
use std::path::Path;

use crate::domain::SampleRecord;
use crate::error::{Error, Result};

const TEMPLATE_VERSION: u32 = 1;

const BUILTIN_TEMPLATES: &[(&str, &str)] = &[
    ("mosi", include_str!("../resources/prompts/mosi.txt")),
    ("mosei", include_str!("../resources/prompts/mosei.txt")),
    ("sims", include_str!("../resources/prompts/sims.txt")),
];

/// A parsed prompt template: scale clause, question body, re-prediction
/// clause. Sections are joined with single spaces at render time.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    scale_clause: String,
    body: String,
    reprediction: String,
}

impl PromptTemplate {
    /// Parse the resource-file format: a `version=N` header and three text
    /// sections separated by `---` lines.
    pub fn parse(source: &str) -> Result<Self> {
        let sections: Vec<&str> = source.split("\n---\n").collect();
        if sections.len() != 4 {
            return Err(Error::Schema(format!(
                "prompt template must have a header and 3 sections, found {}",
                sections.len()
            )));
        }
        let header = sections[0].trim();
        let version = header
            .strip_prefix("version=")
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| Error::Schema(format!("bad template header {header:?}")))?;
        if version != TEMPLATE_VERSION {
            return Err(Error::Schema(format!(
                "template version {version} unsupported (expected {TEMPLATE_VERSION})"
            )));
        }
        let scale_clause = sections[1].trim().to_string();
        let body = sections[2].trim().to_string();
        let reprediction = sections[3].trim().to_string();
        if !body.contains("{text}") {
            return Err(Error::Schema("template body is missing {text}".into()));
        }
        if !reprediction.contains("{data}") {
            return Err(Error::Schema(
                "template re-prediction clause is missing {data}".into(),
            ));
        }
        Ok(Self {
            scale_clause,
            body,
            reprediction,
        })
    }

    fn render_base(&self, text: &str) -> String {
        format!(
            "{} {}",
            self.scale_clause,
            self.body.replace("{text}", text)
        )
    }

    fn render_enhanced(&self, text: &str, data: &str) -> String {
        format!(
            "{} {}",
            self.render_base(text),
            self.reprediction.replace("{data}", data)
        )
    }
}

/// Templates keyed by dataset-scale name.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<String, PromptTemplate>,
}

impl PromptLibrary {
    /// The shipped defaults (mosi, mosei, sims).
    pub fn builtin() -> Self {
        let mut templates = BTreeMap::new();
        for (name, source) in BUILTIN_TEMPLATES {
            let template = PromptTemplate::parse(source)
                .unwrap_or_else(|e| panic!("builtin template '{name}' invalid: {e}"));
            templates.insert((*name).to_string(), template);
        }
        Self { templates }
    }

    /// Load every `<scale>.txt` in `dir`, overriding or extending the
    /// builtins. New dataset variants need no code change.
    pub fn with_dir(mut self, dir: &Path) -> Result<Self> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
            .collect();
        entries.sort();
        for path in entries {
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let source = std::fs::read_to_string(&path)?;
            self.templates
                .insert(stem.to_string(), PromptTemplate::parse(&source)?);
        }
        Ok(self)
    }

    pub fn get(&self, scale_name: &str) -> Result<&PromptTemplate> {
        self.templates
            .get(scale_name)
            .ok_or_else(|| Error::UnsupportedScale(scale_name.to_string()))
    }

    /// The direct-prediction prompt: scale clause, utterance, question. No
    /// collaborative data.
    pub fn build_base_prompt(&self, sample: &SampleRecord) -> Result<String> {
        if sample.text.is_empty() {
            return Err(Error::EmptyText);
        }
        let template = self.get(&sample.scale.name)?;
        Ok(template.render_base(&sample.text))
    }

    /// The cross-verification prompt: the base prompt plus the re-prediction
    /// clause with both models' predictions and uncertainties rendered at
    /// four decimals.
    pub fn build_enhanced_prompt(
        &self,
        sample: &SampleRecord,
        y_s: f64,
        u_s: f64,
        y_l: f64,
        u_l: f64,
    ) -> Result<String> {
        for (name, v) in [
            ("small prediction", y_s),
            ("small uncertainty", u_s),
            ("mllm prediction", y_l),
            ("mllm uncertainty", u_l),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} is not finite: {v}")));
            }
        }
        if sample.text.is_empty() {
            return Err(Error::EmptyText);
        }
        let template = self.get(&sample.scale.name)?;
        let data = format!(
            "small_prediction={y_s:.4}, small_uncertainty={u_s:.4}, \
             mllm_prediction={y_l:.4}, mllm_uncertainty={u_l:.4}"
        );
        Ok(template.render_enhanced(&sample.text, &data))
    }
}

impl Default for PromptLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DatasetScale;

    fn sample(text: &str, scale: DatasetScale) -> SampleRecord {
        SampleRecord::new("s1", text, None, scale).unwrap()
    }

    #[test]
    fn base_prompt_mosi() {
        let lib = PromptLibrary::builtin();
        let p = lib
            .build_base_prompt(&sample("great movie", DatasetScale::mosi()))
            .unwrap();
        assert!(p.starts_with(
            "Sentiment scores range from -3 to +3, where -3 is highly negative, \
             +3 is highly positive, and 0 is neutral. The speaker said 'great movie'."
        ));
        assert!(p.ends_with("Directly answer the sentiment score."));
        assert!(!p.contains("{text}"));
        assert!(!p.contains("{data}"));
    }

    #[test]
    fn base_prompt_golden_bytes() {
        let lib = PromptLibrary::builtin();
        let p = lib
            .build_base_prompt(&sample("great movie", DatasetScale::mosi()))
            .unwrap();
        assert_eq!(
            p,
            "Sentiment scores range from -3 to +3, where -3 is highly negative, +3 is \
             highly positive, and 0 is neutral. The speaker said 'great movie'. What is \
             the sentiment score of the person in the video based on visual, audio and \
             text? Directly answer the sentiment score."
        );
    }

    #[test]
    fn enhanced_prompt_golden_bytes() {
        let lib = PromptLibrary::builtin();
        let p = lib
            .build_enhanced_prompt(
                &sample("great movie", DatasetScale::mosi()),
                0.0,
                1.10,
                -0.2,
                0.51,
            )
            .unwrap();
        assert_eq!(
            p,
            "Sentiment scores range from -3 to +3, where -3 is highly negative, +3 is \
             highly positive, and 0 is neutral. The speaker said 'great movie'. What is \
             the sentiment score of the person in the video based on visual, audio and \
             text? Directly answer the sentiment score. Now, the model is required to \
             re-predict the label of the incoming data, and at the same time, provide \
             the results of uncertainty and predicted labels obtained by the BERT-based \
             multimodal sentiment prediction model and MLLM: small_prediction=0.0000, \
             small_uncertainty=1.1000, mllm_prediction=-0.2000, mllm_uncertainty=0.5100."
        );
    }

    #[test]
    fn base_prompt_sims_scale_clause() {
        let lib = PromptLibrary::builtin();
        let p = lib
            .build_base_prompt(&sample("不错", DatasetScale::sims()))
            .unwrap();
        assert!(p.starts_with("Sentiment scores range from -1 to +1"));
    }

    #[test]
    fn empty_text_is_its_own_error() {
        let lib = PromptLibrary::builtin();
        assert!(matches!(
            lib.build_base_prompt(&sample("", DatasetScale::mosi())),
            Err(Error::EmptyText)
        ));
    }

    #[test]
    fn unknown_scale_rejected() {
        let lib = PromptLibrary::builtin();
        let scale = DatasetScale::new("laughs", -5.0, 5.0).unwrap();
        assert!(matches!(
            lib.build_base_prompt(&sample("hi", scale)),
            Err(Error::UnsupportedScale(_))
        ));
    }

    #[test]
    fn enhanced_prompt_data_block() {
        let lib = PromptLibrary::builtin();
        let s = sample("it was fine", DatasetScale::sims());
        let p = lib
            .build_enhanced_prompt(&s, 0.0, 1.10, -0.2, 0.51)
            .unwrap();
        assert!(p.contains(
            "small_prediction=0.0000, small_uncertainty=1.1000, \
             mllm_prediction=-0.2000, mllm_uncertainty=0.5100"
        ));
        // The base prompt is always a prefix of the enhanced one.
        let base = lib.build_base_prompt(&s).unwrap();
        assert!(p.starts_with(&base));
    }

    #[test]
    fn enhanced_prompt_is_deterministic() {
        let lib = PromptLibrary::builtin();
        let s = sample("it was fine", DatasetScale::mosi());
        let a = lib.build_enhanced_prompt(&s, 0.1, 0.2, 0.3, 0.4).unwrap();
        let b = lib.build_enhanced_prompt(&s, 0.1, 0.2, 0.3, 0.4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn enhanced_prompt_rejects_nan() {
        let lib = PromptLibrary::builtin();
        let s = sample("hi", DatasetScale::mosi());
        assert!(matches!(
            lib.build_enhanced_prompt(&s, 0.0, f64::NAN, 0.0, 0.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn template_dir_override() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("mosi.txt"),
            "version=1\n---\nScores go from -3 to 3.\n---\nSay: '{text}'.\n---\nData: {data}.\n",
        )
        .unwrap();
        let lib = PromptLibrary::builtin().with_dir(dir.path()).unwrap();
        let p = lib
            .build_base_prompt(&sample("ok", DatasetScale::mosi()))
            .unwrap();
        assert_eq!(p, "Scores go from -3 to 3. Say: 'ok'.");
    }

    #[test]
    fn malformed_template_rejected() {
        assert!(PromptTemplate::parse("version=1\n---\nonly two sections\n---\nbody {text}").is_err());
        assert!(PromptTemplate::parse("version=9\n---\na\n---\nb {text}\n---\nc {data}").is_err());
        assert!(PromptTemplate::parse("version=1\n---\na\n---\nb\n---\nc {data}").is_err());
    }
}
