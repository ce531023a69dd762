use std::fmt;
use std::str::FromStr;

/// The four distractor conditions. Labels are used verbatim as score-table
/// condition names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistractorClass {
    Control,
    Salient,
    Semantic,
    SalientSemantic,
}

impl DistractorClass {
    pub const ALL: [DistractorClass; 4] = [
        DistractorClass::Control,
        DistractorClass::Salient,
        DistractorClass::Semantic,
        DistractorClass::SalientSemantic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DistractorClass::Control => "Control",
            DistractorClass::Salient => "Salient",
            DistractorClass::Semantic => "Semantic",
            DistractorClass::SalientSemantic => "Salient & Semantic",
        }
    }

    /// Whether the distractor must disrupt the target's saliency map.
    pub fn is_salient(self) -> bool {
        matches!(self, DistractorClass::Salient | DistractorClass::SalientSemantic)
    }

    /// Whether the distractor must be semantically dissimilar to the target.
    pub fn is_semantic(self) -> bool {
        matches!(self, DistractorClass::Semantic | DistractorClass::SalientSemantic)
    }
}

impl serde::Serialize for DistractorClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl fmt::Display for DistractorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DistractorClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "control" => Ok(DistractorClass::Control),
            "salient" => Ok(DistractorClass::Salient),
            "semantic" => Ok(DistractorClass::Semantic),
            "salientsemantic" | "semanticsalient" => Ok(DistractorClass::SalientSemantic),
            _ => Err(format!("unknown distractor class {s:?}")),
        }
    }
}
