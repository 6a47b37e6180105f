//! Dispatches a parsed config to the command it names and assembles the report.

use crate::config::{Command, Params, RunConfig};
use crate::entropy::{splitting_unstable_entropies, srb_lower_bound, unstable_entropy, EntropyReport};
use crate::error::{Error, Result};
use crate::linalg::Subspace;
use crate::lyapunov::{
    default_burn_in, joint_splitting_with_threshold, lyapunov_spectrum, random_lyapunov_spectrum, JointSplitting,
    LabeledBlock,
};
use crate::orbitspace::{cylinder_count, friedland_estimate};
use crate::registry::SystemSpec;
use crate::report::{
    BlockEntry, CylinderRow, Defects, FriedlandReport, Report, ReportBody, SpectrumEntry, SpectrumReport,
    SplittingReport, SCHEMA_VERSION,
};
use crate::systems::DynamicalMap;
use crate::verify::verify_system;

/// Runs the configured command. Files are not written here.
pub fn execute(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let spec = config.system_spec()?;
    let params = &config.params;
    let result = match config.command {
        Command::Spectrum => ReportBody::Spectrum(spectrum(&spec, params)?),
        Command::RandomSpectrum => ReportBody::RandomSpectrum(random_spectrum(&spec, params, config.seed)?),
        Command::Splitting => ReportBody::Splitting(splitting_report(&splitting(&spec, params)?)?),
        Command::Entropy => ReportBody::Entropy(entropy(&spec, params)?),
        Command::Friedland => ReportBody::Friedland(friedland(&spec, params)?),
        Command::Verify => ReportBody::Verify(verify_system(&spec, params, config.seed)?),
    };
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        command: config.command,
        config_hash: config.config_hash(),
        seed: config.seed,
        system: spec.name.clone(),
        nu: spec.nu,
        result,
    })
}

fn start_point(map: &DynamicalMap, params: &Params) -> Vec<f64> {
    params.x0.clone().unwrap_or_else(|| map.base_point())
}

fn spectrum(spec: &SystemSpec, params: &Params) -> Result<SpectrumReport> {
    let burn_in = params.burn_in();
    let spectra = spec
        .generators()
        .into_iter()
        .map(|g| {
            let x0 = start_point(g, params);
            let p = params.p.unwrap_or(g.dim());
            let mut s = lyapunov_spectrum(g, &x0, p, params.n(), burn_in)?;
            if let Some(t) = params.lambda_alpha {
                s = s.with_threshold(t);
            }
            Ok(SpectrumEntry::new(g.name(), p, burn_in, x0, &s))
        })
        .collect::<Result<_>>()?;
    Ok(SpectrumReport { spectra })
}

fn random_spectrum(spec: &SystemSpec, params: &Params, seed: u64) -> Result<SpectrumReport> {
    let sys = spec.commuting()?;
    let x0 = start_point(sys.f1(), params);
    let p = params.p.unwrap_or(sys.dim());
    let n = params.n();
    let mut s = random_lyapunov_spectrum(&sys, &x0, p, n, params.samples(), seed)?;
    if let Some(t) = params.lambda_alpha {
        s = s.with_threshold(t);
    }
    // Every sample word discards its own default burn-in.
    Ok(SpectrumReport {
        spectra: vec![SpectrumEntry::new("random", p, default_burn_in(n), x0, &s)],
    })
}

fn splitting(spec: &SystemSpec, params: &Params) -> Result<JointSplitting> {
    let f2 = spec
        .f2
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("system {} has a single generator; a pair is required", spec.name)))?;
    joint_splitting_with_threshold(&spec.f1, f2, params.lambda_alpha())
}

fn block_entry(label: String, b: &LabeledBlock) -> BlockEntry {
    block_from_subspace(label, [b.pair.0, b.pair.1], &b.subspace)
}

fn block_from_subspace(label: String, pair: [f64; 2], s: &Subspace) -> BlockEntry {
    BlockEntry {
        label,
        pair,
        dim: s.dim(),
        basis: s.basis().to_vecs(),
    }
}

fn splitting_report(split: &JointSplitting) -> Result<SplittingReport> {
    let entries = |prefix: &str, blocks: &[LabeledBlock]| -> Vec<BlockEntry> {
        blocks
            .iter()
            .enumerate()
            .map(|(i, b)| block_entry(format!("{prefix}{i}"), b))
            .collect()
    };
    Ok(SplittingReport {
        lambda_alpha: split.lambda_alpha,
        blocks: entries("E", &split.blocks),
        defects: Defects {
            f1: entries("D1-", &split.defect_blocks_f1),
            f2: entries("D2-", &split.defect_blocks_f2),
        },
        alpha_dim: split.alpha_dim(),
        alpha_parts: entries("A", &split.alpha_parts),
        generator_exponents: [split.generator_exponents(0), split.generator_exponents(1)],
        h3_angle: split.h3_angle()?,
    })
}

/// Unstable entropies come from the joint splitting when both derivatives
/// are constant, and from orbit spectra otherwise; in the latter case there
/// is no SRB bound.
fn entropy(spec: &SystemSpec, params: &Params) -> Result<EntropyReport> {
    let sys = spec.commuting()?;
    let constant = sys.f1().constant_jacobian().is_some() && sys.f2().constant_jacobian().is_some();
    if constant {
        let split = splitting(spec, params)?;
        let h = splitting_unstable_entropies(&split);
        let srb = srb_lower_bound(Some(&split), sys.nu())?;
        return EntropyReport::new(
            sys.nu(),
            h,
            Some(srb),
            vec![
                "unstable entropies from the joint splitting of the constant derivatives".into(),
                "srb_lower from defect-corrected dimensions".into(),
            ],
        );
    }
    let mut h = [0.0; 2];
    for (slot, g) in h.iter_mut().zip([sys.f1(), sys.f2()]) {
        let x0 = start_point(g, params);
        let s = lyapunov_spectrum(g, &x0, params.p.unwrap_or(g.dim()), params.n(), params.burn_in())?;
        *slot = unstable_entropy(&s);
    }
    EntropyReport::new(
        sys.nu(),
        h,
        None,
        vec![format!("unstable entropies from orbit spectra at n = {}", params.n())],
    )
}

fn friedland(spec: &SystemSpec, params: &Params) -> Result<FriedlandReport> {
    let sys = spec.commuting()?;
    let [lo, hi] = params.n_range();
    let estimate = friedland_estimate(&sys, lo..=hi, params.epsilon(), params.shift_steps())?;
    let gens = [sys.f1().clone(), sys.f2().clone()];
    let cylinders = (lo..=hi)
        .map(|n| {
            let count = cylinder_count(&gens, n)?;
            let count = u64::try_from(count)
                .map_err(|_| Error::invalid(format!("cylinder count at n = {n} exceeds 64 bits")))?;
            Ok(CylinderRow { n, count })
        })
        .collect::<Result<_>>()?;
    Ok(FriedlandReport {
        difference: estimate.slope - estimate.formula_value,
        estimate,
        cylinders,
    })
}
