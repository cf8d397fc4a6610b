//! Subcommands of the `hyperdecay` tool. Each reads a [`RunConfig`], validates
//! it in full, runs one analysis and writes its files into the output
//! directory.

pub mod config;
pub mod error;

use std::fs;
use std::path::{Path, PathBuf};

use hyperdecay::compensator::{default_form, verify_coercivity_with};
use hyperdecay::error::Error as CoreError;
use hyperdecay::evolve::{band_e_folding, decay_report, pointwise_envelope_check_seeded};
use hyperdecay::exponents::{
    alt_dissipation_check, lambda_from_exponents, model1_best_exponents, model2_best_exponents, reconcile_rates,
    AltDissipationReport, EtaTerm, ExponentVectors, FeasibilityReport, RateFunction,
};
use hyperdecay::lyapunov::{certificate_margins, lambda_profile, margins_csv, pointwise_certificate, LyapunovCertificate};
use hyperdecay::spectral::{fit_decay_type, spectral_abscissa_curve, verify_type_bound};
use hyperdecay::sysmodel::ModelTag;
use serde::Serialize;

pub use config::{RunConfig, Validated};
pub use error::CliError;

/// The four analyses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Certify,
    Decay,
    Exponents,
}

/// Load, validate and run. `output_dir` overrides the configuration's.
/// Returns the files written.
pub fn run(command: Command, config_path: &Path, output_dir: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir.to_path_buf();
    }
    let v = cfg.validate()?;
    let mut out = Output::new(&v.config.output_dir)?;
    match command {
        Command::Spectrum => spectrum(&v, &mut out),
        Command::Certify => certify(&v, &mut out),
        Command::Decay => decay(&v, &mut out),
        Command::Exponents => exponents(&v, &mut out),
    }?;
    Ok(out.written)
}

/// Writes files atomically: a hidden temporary in the same directory, then a rename.
struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let dest = self.dir.join(name);
        fs::write(&tmp, body)?;
        fs::rename(&tmp, &dest)?;
        self.written.push(dest);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut body = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        body.push('\n');
        self.text(name, &body)
    }
}

fn spectrum(v: &Validated, out: &mut Output) -> Result<(), CliError> {
    let curve = spectral_abscissa_curve(&v.system, &v.grid).map_err(|e| CliError::from_core("spectrum", e))?;
    let mut csv = String::from("xi,abscissa,bits\n");
    for ((xi, a), b) in curve.grid.points.iter().zip(&curve.abscissa).zip(&curve.bits) {
        csv.push_str(&format!("{xi:.16e},{a:.16e},{b}\n"));
    }
    out.text("spectrum.csv", &csv)?;
    let (p, q) = v.type_pq;
    let bound = verify_type_bound(&curve, p, q);
    out.json("bound.json", &bound)?;
    let s = &v.config.spectrum;
    let fit = fit_decay_type(&curve, s.low_max, s.high_min).map_err(|e| CliError::from_core("fit", e))?;
    out.json("typefit.json", &fit)?;
    if !bound.holds {
        return Err(CliError::Certification {
            stage: "type_bound",
            msg: format!("type ({p}, {q}) bound fails at {} grid point(s), c_est = {}", bound.violations.len(), bound.c_est),
        });
    }
    Ok(())
}

fn certificate(v: &Validated) -> Result<LyapunovCertificate, CliError> {
    pointwise_certificate(&v.system, &v.grid).map_err(|e| CliError::from_core("certify", e))
}

fn certify(v: &Validated, out: &mut Output) -> Result<(), CliError> {
    let cert = certificate(v)?;
    out.text("certificate.json", &(cert.to_json() + "\n"))?;
    let margins = certificate_margins(&cert, &v.grid).map_err(|e| CliError::from_core("margins", e))?;
    out.text("margins.csv", &margins_csv(&margins))?;
    let set = cert.compensators(&v.system).map_err(|e| CliError::from_core("coercivity", e))?;
    let coercivity = verify_coercivity_with(&v.system, &set, cert.outer_delta, default_form(v.system.model), &v.grid);
    out.text("coercivity.csv", &coercivity.to_csv())?;
    Ok(())
}

#[derive(Serialize)]
struct CaseSummary {
    k: i32,
    ell: i32,
    exponents: [f64; 2],
    fitted_slope: Option<f64>,
    pass: bool,
    monotone_tail: bool,
    file: String,
}

#[derive(Serialize)]
struct EFolding {
    radius: f64,
    time: Option<f64>,
}

#[derive(Serialize)]
struct DecaySummary {
    cases: Vec<CaseSummary>,
    e_folding: Vec<EFolding>,
}

#[derive(Serialize)]
struct EnvelopeSummary {
    seed: u64,
    samples: usize,
    times: Vec<f64>,
    c_rate: f64,
    /// Largest `|û(t)| e^{c λ(ξ) t}` over frequencies, samples and times.
    c_est: f64,
    /// `sqrt(C_equiv/c_equiv)`.
    bound: f64,
    pass: bool,
}

fn decay(v: &Validated, out: &mut Output) -> Result<(), CliError> {
    let d = &v.config.decay;
    let mut cases = Vec::new();
    for case in &d.cases {
        let rep = decay_report(&v.system, &v.data, case.k, case.ell, &v.times, &v.grid)
            .map_err(|e| CliError::from_core("decay", e))?;
        let file = format!("decay_k{}_l{}.csv", case.k, case.ell);
        out.text(&file, &rep.to_csv())?;
        cases.push(CaseSummary {
            k: rep.k,
            ell: rep.ell,
            exponents: rep.exponents,
            fitted_slope: rep.fitted_slope,
            pass: rep.pass,
            monotone_tail: rep.monotone_tail,
            file,
        });
    }
    let mut e_folding = Vec::new();
    for &radius in &d.efold_radii {
        let time = band_e_folding(&v.system, radius, v.data.amplitude.clone(), &v.grid, &v.efold_times)
            .map_err(|e| CliError::from_core("e_folding", e))?;
        e_folding.push(EFolding { radius, time });
    }
    let failed: Vec<String> = cases.iter().filter(|c| !c.pass).map(|c| format!("(k={}, ell={})", c.k, c.ell)).collect();
    out.json("decay.json", &DecaySummary { cases, e_folding })?;

    // The envelope needs a certificate, which exists only for m ≥ 6.
    let envelope = match pointwise_certificate(&v.system, &v.grid) {
        Ok(cert) => {
            let c_est =
                pointwise_envelope_check_seeded(&v.system, &cert, &v.grid, d.envelope_samples, &v.envelope_times, v.config.seed)
                    .map_err(|e| CliError::from_core("envelope", e))?;
            let bound = (cert.c_equiv_upper / cert.c_equiv).sqrt();
            let summary = EnvelopeSummary {
                seed: v.config.seed,
                samples: d.envelope_samples,
                times: v.envelope_times.clone(),
                c_rate: cert.c_rate,
                c_est,
                bound,
                pass: c_est <= bound * (1.0 + 1e-9),
            };
            out.json("envelope.json", &summary)?;
            Some(summary)
        }
        Err(CoreError::Unsupported(_)) => None,
        Err(e) => return Err(CliError::from_core("envelope", e)),
    };
    if !failed.is_empty() {
        return Err(CliError::Certification { stage: "decay", msg: format!("measured norm exceeds the bound for {}", failed.join(", ")) });
    }
    if let Some(env) = envelope.filter(|e| !e.pass) {
        return Err(CliError::Certification {
            stage: "envelope",
            msg: format!("pointwise envelope {} exceeds sqrt(C/c) = {}", env.c_est, env.bound),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct EtaSummary {
    terms: Vec<EtaTerm>,
    dominant: Option<EtaTerm>,
    /// `η(ξ)/λ(ξ)` extremes over the grid.
    reconcile: (f64, f64),
}

#[derive(Serialize)]
struct AltSummary {
    ratio: f64,
    halvings: usize,
    constants: Vec<f64>,
    equivalence: (f64, f64),
    c_found: f64,
    min_scaled: f64,
    worst_xi: f64,
}

impl From<&AltDissipationReport> for AltSummary {
    fn from(r: &AltDissipationReport) -> Self {
        AltSummary {
            ratio: r.ratio,
            halvings: r.halvings,
            constants: r.constants.clone(),
            equivalence: r.equivalence,
            c_found: r.coercivity.c_found,
            min_scaled: r.coercivity.min_scaled,
            worst_xi: r.coercivity.worst_xi,
        }
    }
}

#[derive(Serialize)]
struct FeasibilitySummary {
    vectors: ExponentVectors,
    report: FeasibilityReport,
    eta: Option<EtaSummary>,
    alt_check: Option<AltSummary>,
}

fn exponents(v: &Validated, out: &mut Output) -> Result<(), CliError> {
    let core = |e| CliError::from_core("exponents", e);
    let (model, m) = (v.system.model, v.system.m);
    let vectors = match &v.config.exponents.vectors {
        Some(x) => x.clone(),
        None => match model {
            ModelTag::ModelI => ExponentVectors::I(model1_best_exponents(m).map_err(core)?),
            ModelTag::ModelII => ExponentVectors::II(model2_best_exponents(m).map_err(core)?),
            ModelTag::Custom => return Err(CliError::validation("exponents", "custom systems have no exponent ledger")),
        },
    };
    let report = vectors.feasibility().map_err(core)?;
    let mut summary = FeasibilitySummary { vectors: vectors.clone(), report, eta: None, alt_check: None };
    if !summary.report.satisfied {
        let n = summary.report.violations.len();
        out.json("feasibility.json", &summary)?;
        return Err(CliError::from_core("exponents", CoreError::Infeasible(n)));
    }
    let eta = lambda_from_exponents(&vectors).map_err(core)?;
    let lambda = lambda_profile(model, m).map_err(core)?;
    summary.eta = Some(EtaSummary { terms: eta.terms.clone(), dominant: eta.dominant(), reconcile: reconcile_rates(&lambda, &eta, &v.grid) });
    let mut csv = String::from("xi,eta,lambda,ratio\n");
    for &xi in &v.grid.points {
        let (le, ll) = (eta.ln_eval(xi), lambda.ln_rate(xi));
        csv.push_str(&format!("{xi:.16e},{:.16e},{:.16e},{:.16e}\n", le.exp(), ll.exp(), (le - ll).exp()));
    }
    out.text("rates.csv", &csv)?;
    let alt = if v.config.exponents.alt_check { Some(alt_dissipation_check(&v.system, &vectors, &v.grid)) } else { None };
    match alt {
        Some(Ok(r)) => summary.alt_check = Some(AltSummary::from(&r)),
        Some(Err(e)) => {
            out.json("feasibility.json", &summary)?;
            return Err(core(e));
        }
        None => {}
    }
    out.json("feasibility.json", &summary)
}
