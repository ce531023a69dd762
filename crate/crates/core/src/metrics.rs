//! Score-table vocabulary shared by the analyses and the run pipeline.

/// Condition label for scores computed on unaltered images.
pub const BASELINE: &str = "Baseline";

pub const RSA_SALIENCY: &str = "rsa_saliency";
pub const RSA_SEMANTICS: &str = "rsa_semantics";
pub const DELTA_SALIENCY: &str = "delta_rsa_saliency";
pub const DELTA_SEMANTICS: &str = "delta_rsa_semantics";
/// Layer RDM vs. brain-region RDM.
pub const BRAIN_SCORE: &str = "brain_score";
pub const PEARSON_R: &str = "pearson_r";
pub const P_VALUE: &str = "p_value";

/// Metric names for the RSA and delta rows of a target.
pub fn rsa_metric(target: crate::repsim::RsaTarget) -> &'static str {
    use crate::repsim::RsaTarget;
    match target {
        RsaTarget::Saliency => RSA_SALIENCY,
        RsaTarget::Semantics => RSA_SEMANTICS,
        RsaTarget::Brain => BRAIN_SCORE,
        RsaTarget::Unspecified => "rsa",
    }
}

pub fn delta_metric(target: crate::repsim::RsaTarget) -> &'static str {
    use crate::repsim::RsaTarget;
    match target {
        RsaTarget::Saliency => DELTA_SALIENCY,
        RsaTarget::Semantics => DELTA_SEMANTICS,
        _ => "delta_rsa",
    }
}
