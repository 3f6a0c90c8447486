//! Convergence studies and certification.

mod certify;
mod diagnose;
mod rates;

pub use certify::{
    certify, certify_scenario, CertificationReport, CertifyOptions, RegionCheck, VelocityCheck, Verdict,
};
pub use diagnose::{diagnose_scenario, DiagnoseOptions, DiagnosticsReport, RegionDiagnostics};
pub use rates::{
    run_rate_study, RateStudy, RateStudyError, Reference, NOISE_BAND, REFERENCE_REFINEMENT, SAMPLE_TIMES, SATURATION,
};
