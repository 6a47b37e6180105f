//! Versioned JSON reports and their CSV views.
//!
//! Reports hold no timestamps or host data: the same config and seed give
//! the same bytes. Files are named `{command}-{hash prefix}.json` and are
//! never overwritten.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Command, Format};
use crate::entropy::EntropyReport;
use crate::error::{Error, Result};
use crate::lyapunov::{GeneratorExponent, LyapunovSpectrum};
use crate::orbitspace::FriedlandEstimate;
use crate::systems::Weights;

pub const SCHEMA_VERSION: u32 = 1;

/// Length of the config-hash prefix used in file names.
const NAME_HASH_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub command: Command,
    pub config_hash: String,
    pub seed: u64,
    pub system: String,
    pub nu: Weights,
    pub result: ReportBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReportBody {
    Spectrum(SpectrumReport),
    RandomSpectrum(SpectrumReport),
    Splitting(SplittingReport),
    Entropy(EntropyReport),
    Friedland(FriedlandReport),
    Verify(VerifyReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumEntry {
    /// Generator name, or `random` for the i.i.d. composition.
    pub map: String,
    pub p: usize,
    pub n: usize,
    pub burn_in: usize,
    pub x0: Vec<f64>,
    pub exponents: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub ci: Vec<f64>,
    pub samples: usize,
    pub unresolved: Vec<usize>,
}

impl SpectrumEntry {
    pub fn new(map: impl Into<String>, p: usize, burn_in: usize, x0: Vec<f64>, s: &LyapunovSpectrum) -> Self {
        SpectrumEntry {
            map: map.into(),
            p,
            n: s.n_used,
            burn_in,
            x0,
            exponents: s.exponents.clone(),
            multiplicities: s.multiplicities.clone(),
            ci: s.ci_halfwidth.clone(),
            samples: s.samples,
            unresolved: s.unresolved.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumReport {
    pub spectra: Vec<SpectrumEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub label: String,
    pub pair: [f64; 2],
    pub dim: usize,
    /// Orthonormal basis vectors.
    pub basis: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defects {
    pub f1: Vec<BlockEntry>,
    pub f2: Vec<BlockEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplittingReport {
    pub lambda_alpha: f64,
    pub blocks: Vec<BlockEntry>,
    pub defects: Defects,
    pub alpha_dim: usize,
    pub alpha_parts: Vec<BlockEntry>,
    pub generator_exponents: [Vec<GeneratorExponent>; 2],
    /// Largest principal angle between the unstable subspaces of f1 and f2.
    pub h3_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderRow {
    pub n: usize,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FriedlandReport {
    pub estimate: FriedlandEstimate,
    pub cylinders: Vec<CylinderRow>,
    /// `slope - formula_value`.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub residual: f64,
    pub tolerance: f64,
    /// Informational checks never fail the suite.
    pub informational: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
    pub failing: Vec<String>,
}

impl VerifyReport {
    pub fn new(checks: Vec<CheckResult>) -> Self {
        let failing: Vec<String> = checks
            .iter()
            .filter(|c| !c.pass && !c.informational)
            .map(|c| c.name.clone())
            .collect();
        VerifyReport {
            passed: failing.is_empty(),
            failing,
            checks,
        }
    }
}

/// Pretty JSON with a trailing newline. Fails on values JSON cannot hold.
pub fn encode_report(report: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::InvalidState(e.to_string()))?;
    s.push('\n');
    // serde_json writes non-finite floats as null, which would not decode.
    decode_report(s.as_bytes()).map_err(|_| Error::InvalidState("report contains non-finite values".into()))?;
    Ok(s)
}

pub fn decode_report(bytes: &[u8]) -> Result<Report> {
    let report: Report = serde_json::from_slice(bytes).map_err(|e| Error::invalid(format!("malformed report: {e}")))?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::invalid(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            report.schema_version
        )));
    }
    Ok(report)
}

fn csv_floats(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match &self.result {
            ReportBody::Spectrum(r) | ReportBody::RandomSpectrum(r) => {
                out.push_str("map,index,exponent,multiplicity,ci,unresolved\n");
                for e in &r.spectra {
                    for (i, l) in e.exponents.iter().enumerate() {
                        let _ = writeln!(
                            out,
                            "{},{i},{l},{},{},{}",
                            csv_field(&e.map),
                            e.multiplicities[i],
                            e.ci[i],
                            e.unresolved.contains(&i)
                        );
                    }
                }
            }
            ReportBody::Splitting(r) => {
                out.push_str("part,label,lambda1,lambda2,dim,basis\n");
                let groups = [
                    ("block", &r.blocks),
                    ("defect-f1", &r.defects.f1),
                    ("defect-f2", &r.defects.f2),
                    ("alpha", &r.alpha_parts),
                ];
                for (part, blocks) in groups {
                    for b in blocks {
                        let basis: Vec<String> = b.basis.iter().map(|v| csv_floats(v)).collect();
                        let _ = writeln!(
                            out,
                            "{part},{},{},{},{},{}",
                            csv_field(&b.label),
                            b.pair[0],
                            b.pair[1],
                            b.dim,
                            csv_field(&basis.join("|"))
                        );
                    }
                }
            }
            ReportBody::Entropy(r) => {
                out.push_str("quantity,value\n");
                let srb = r.srb_lower.map_or(String::new(), |v| v.to_string());
                let rows = [
                    ("nu1", r.nu.get(0).to_string()),
                    ("nu2", r.nu.get(1).to_string()),
                    ("h1", r.per_generator_unstable[0].to_string()),
                    ("h2", r.per_generator_unstable[1].to_string()),
                    ("ruelle_bound", r.ruelle_bound.to_string()),
                    ("pesin_value", r.pesin_value.to_string()),
                    ("srb_lower", srb),
                    ("shift_entropy", r.shift_entropy.to_string()),
                    ("skew_entropy", r.skew_entropy.to_string()),
                    ("friedland_value", r.friedland_value.to_string()),
                    ("friedland_upper", r.friedland_upper.to_string()),
                    ("below_optimum", r.below_optimum.to_string()),
                    ("optimal_nu1", r.optimal_nu.get(0).to_string()),
                    ("optimal_nu2", r.optimal_nu.get(1).to_string()),
                ];
                for (k, v) in rows {
                    let _ = writeln!(out, "{k},{v}");
                }
            }
            ReportBody::Friedland(r) => out.push_str(&r.estimate.to_csv()),
            ReportBody::Verify(r) => {
                out.push_str("check,pass,residual,tolerance,informational,detail\n");
                for c in &r.checks {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        csv_field(&c.name),
                        c.pass,
                        c.residual,
                        c.tolerance,
                        c.informational,
                        csv_field(&c.detail)
                    );
                }
            }
        }
        out
    }

    /// Human-readable lines; entropies are converted to bits only here.
    pub fn summary(&self, bits: bool) -> String {
        let (unit, scale) = if bits { ("bits", std::f64::consts::LOG2_E) } else { ("nats", 1.0) };
        let mut out = format!("{} on {} (seed {})\n", self.command.as_str(), self.system, self.seed);
        match &self.result {
            ReportBody::Spectrum(r) | ReportBody::RandomSpectrum(r) => {
                for e in &r.spectra {
                    let _ = write!(out, "  {}:", e.map);
                    for (l, (m, c)) in e.exponents.iter().zip(e.multiplicities.iter().zip(&e.ci)) {
                        let _ = write!(out, " {l:.6} (x{m}, ci {c:.2e})");
                    }
                    out.push('\n');
                }
            }
            ReportBody::Splitting(r) => {
                let _ = writeln!(
                    out,
                    "  {} blocks, {}+{} defect blocks, alpha dim {}, H3 angle {:.6}",
                    r.blocks.len(),
                    r.defects.f1.len(),
                    r.defects.f2.len(),
                    r.alpha_dim,
                    r.h3_angle
                );
            }
            ReportBody::Entropy(r) => {
                let rows = [
                    ("ruelle_bound", Some(r.ruelle_bound)),
                    ("srb_lower", r.srb_lower),
                    ("skew_entropy", Some(r.skew_entropy)),
                    ("friedland_value", Some(r.friedland_value)),
                    ("friedland_upper", Some(r.friedland_upper)),
                ];
                for (k, v) in rows {
                    if let Some(v) = v {
                        let _ = writeln!(out, "  {k} = {:.6} {unit}", v * scale);
                    }
                }
                if r.below_optimum {
                    let _ = writeln!(
                        out,
                        "  weights are below the optimum ({:.4}, {:.4}); friedland_upper is informational",
                        r.optimal_nu.get(0),
                        r.optimal_nu.get(1)
                    );
                }
            }
            ReportBody::Friedland(r) => {
                let e = &r.estimate;
                let _ = writeln!(
                    out,
                    "  slope {:.6} {unit} vs formula {:.6} {unit} at epsilon {}",
                    e.slope * scale,
                    e.formula_value * scale,
                    e.epsilon
                );
            }
            ReportBody::Verify(r) => {
                for c in &r.checks {
                    let status = match (c.pass, c.informational) {
                        (true, _) => "PASS",
                        (false, true) => "INFO",
                        (false, false) => "FAIL",
                    };
                    let _ = writeln!(out, "  {status} {} (residual {:.3e}) {}", c.name, c.residual, c.detail);
                }
                let _ = writeln!(out, "  {}", if r.passed { "all checks passed" } else { "verification failed" });
            }
        }
        out
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => encode_report(self),
            Format::Csv => Ok(self.to_csv()),
        }
    }
}

/// Writes `contents` under `dir` without touching existing files.
///
/// An existing file with identical contents is reused; otherwise a numeric
/// suffix is appended until a free name is found.
pub fn write_report_file(dir: &Path, report: &Report, format: Format, contents: &str) -> Result<PathBuf> {
    let io = |e: std::io::Error| Error::InvalidState(format!("cannot write report in {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let ext = match format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    let hash = &report.config_hash[..NAME_HASH_LEN.min(report.config_hash.len())];
    let stem = format!("{}-{hash}", report.command.as_str());
    for k in 0u32.. {
        let name = if k == 0 { format!("{stem}.{ext}") } else { format!("{stem}.{k}.{ext}") };
        let path = dir.join(name);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                f.write_all(contents.as_bytes()).map_err(io)?;
                return Ok(path);
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                if std::fs::read(&path).map_err(io)? == contents.as_bytes() {
                    return Ok(path);
                }
            }
            Err(e) => return Err(io(e)),
        }
    }
    unreachable!("the suffix search is unbounded")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verify_report() -> Report {
        Report {
            schema_version: SCHEMA_VERSION,
            command: Command::Verify,
            config_hash: "ab".repeat(32),
            seed: 9,
            system: "cat-and-square".into(),
            nu: Weights::uniform(),
            result: ReportBody::Verify(VerifyReport::new(vec![
                CheckResult {
                    name: "composite".into(),
                    pass: true,
                    residual: 1e-12,
                    tolerance: 1e-6,
                    informational: false,
                    detail: "max over 15 exponent pairs, 2 pieces".into(),
                },
                CheckResult {
                    name: "h3-angle".into(),
                    pass: false,
                    residual: 1.5707963267948966,
                    tolerance: 1e-9,
                    informational: true,
                    detail: "H3 violated".into(),
                },
            ])),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let r = verify_report();
        let s = encode_report(&r).unwrap();
        assert_eq!(decode_report(s.as_bytes()).unwrap(), r);
        assert!(s.contains("\"schema_version\": 1"));
        assert!(s.ends_with("}\n"));
    }

    #[test]
    fn informational_failures_do_not_fail_the_suite() {
        let ReportBody::Verify(v) = verify_report().result else { unreachable!() };
        assert!(v.passed && v.failing.is_empty());
    }

    #[test]
    fn decoder_rejects_bad_input() {
        let good = encode_report(&verify_report()).unwrap();
        assert!(decode_report(good.replace("\"schema_version\": 1", "\"schema_version\": 2").as_bytes()).is_err());
        assert!(decode_report(good.replace("\"seed\"", "\"sede\"").as_bytes()).is_err());
        assert!(decode_report(b"").is_err());
        assert!(decode_report(b"[1,2]").is_err());
        assert!(decode_report(&good.as_bytes()[..good.len() / 2]).is_err());
    }

    #[test]
    fn non_finite_values_are_refused() {
        let mut r = verify_report();
        if let ReportBody::Verify(v) = &mut r.result {
            v.checks[0].residual = f64::NAN;
        }
        assert!(matches!(encode_report(&r), Err(Error::InvalidState(_))));
    }

    #[test]
    fn csv_quotes_fields() {
        let csv = verify_report().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "check,pass,residual,tolerance,informational,detail");
        assert_eq!(lines[1], "composite,true,0.000000000001,0.000001,false,\"max over 15 exponent pairs, 2 pieces\"");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn files_are_append_only() {
        let dir = std::env::temp_dir().join(format!("ergodyn-report-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let r = verify_report();
        let a = write_report_file(&dir, &r, Format::Json, "one").unwrap();
        assert_eq!(a.file_name().unwrap(), "verify-abababababababab.json");
        assert_eq!(write_report_file(&dir, &r, Format::Json, "one").unwrap(), a);
        let b = write_report_file(&dir, &r, Format::Json, "two").unwrap();
        assert_eq!(b.file_name().unwrap(), "verify-abababababababab.1.json");
        assert_eq!(std::fs::read_to_string(&a).unwrap(), "one");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn bits_toggle_changes_display_only() {
        let r = Report {
            result: ReportBody::Entropy(
                EntropyReport::new(Weights::new(0.4, 0.6).unwrap(), [2f64.ln(), 3f64.ln()], None, vec![]).unwrap(),
            ),
            command: Command::Entropy,
            ..verify_report()
        };
        assert!(r.summary(false).contains("friedland_value = 1.609438 nats"));
        assert!(r.summary(true).contains("friedland_value = 2.321928 bits"));
    }
}
