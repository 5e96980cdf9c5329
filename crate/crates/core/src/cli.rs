//! The `nilzeta` command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 mismatch or failed
//! verification, 3 budget exhausted, 4 inconclusive (unstable oracle or
//! indeterminate membership).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::arith::is_prime;
use crate::conegen::{good_basis_conditions, relative_conditions, ConeConditionSystem, ConeSystemJson};
use crate::error::{Error, Result};
use crate::evaluator::{local_counts, system_counts, CountSource, EvalConfig, LocalSeries};
use crate::extension::{
    extension_catalog, fin_subgroups, structure_words, transversal_convention_failures, verify_cocycle, ExtensionJson, SubgroupOfF,
    VirtuallyTauGroup, EXTENSION_CATALOG_NAMES,
};
use crate::malcev::{catalog_make, verify_presentation, MalcevPresentation, PresentationJson, VerificationReport, CATALOG_NAMES};
use crate::oracle::OracleConfig;
use crate::polyring::format_rational;
use crate::zeta::{assemble_global, compare_reports, compare_system, CompareJob, CountReport};
use crate::Variant;

#[derive(Parser, Debug)]
#[command(name = "nilzeta", version, about = "Local and global subgroup-counting zeta coefficients of virtually nilpotent groups")]
struct Cli {
    /// Worker threads (default: available parallelism)
    #[arg(long, env = "NILZETA_WORKERS", global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

#[derive(clap::Args, Debug)]
struct GroupArgs {
    /// Catalog name (e.g. `abelian:3`, `heisenberg`, `dinfty`) or path to a JSON group file
    #[arg(long)]
    group: String,
    /// `subgroup` (all subgroups) or `normal`
    #[arg(long, default_value = "subgroup", value_parser = parse_variant)]
    variant: Variant,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List built-in groups
    Catalog {
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Check group laws (and the cocycle, for extensions)
    Verify {
        #[arg(long)]
        group: String,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 12)]
        bound: i64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Print the cone condition system as canonical JSON
    Conditions {
        #[command(flatten)]
        g: GroupArgs,
        /// `all` or comma-separated indices into the subgroup list of F
        #[arg(long = "K", default_value = "all")]
        k: String,
    },
    /// Local counts a_{p^k} from the cone pipeline
    Local {
        /// Group to count in (omit when `--system` is given)
        #[arg(long)]
        group: Option<String>,
        /// Evaluate a condition system file instead of a group
        #[arg(long, conflicts_with = "group")]
        system: Option<PathBuf>,
        #[arg(long, default_value = "subgroup", value_parser = parse_variant)]
        variant: Variant,
        #[arg(long = "K", default_value = "all")]
        k: String,
        #[arg(long = "prime", alias = "primes", value_delimiter = ',', required = true)]
        primes: Vec<u64>,
        #[arg(long, default_value_t = 3)]
        kmax: u32,
        /// Write the condition systems used to this file
        #[arg(long)]
        dump_conditions: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Global coefficients a_n for n <= nmax
    Global {
        #[command(flatten)]
        g: GroupArgs,
        #[arg(long, default_value_t = 20)]
        nmax: u64,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Cone counts against finite-quotient counts
    OracleCompare {
        #[command(flatten)]
        g: GroupArgs,
        #[arg(long = "K", default_value = "all")]
        k: String,
        #[arg(long = "prime", alias = "primes", value_delimiter = ',', required = true)]
        primes: Vec<u64>,
        #[arg(long, default_value_t = 2)]
        kmax: u32,
        /// Quotient level (default: kmax)
        #[arg(long)]
        level: Option<u32>,
        /// Largest finite quotient the oracle may build
        #[arg(long, default_value_t = 4_000_000)]
        max_order: usize,
        /// Use this condition system for the cone side (its K and variant apply)
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A group as given on the command line.
#[derive(Clone, Debug)]
pub enum LoadedGroup {
    Tau(MalcevPresentation),
    Extension(VirtuallyTauGroup),
}

impl LoadedGroup {
    pub fn as_extension(&self) -> VirtuallyTauGroup {
        match self {
            LoadedGroup::Tau(n) => VirtuallyTauGroup::trivial(n.clone()),
            LoadedGroup::Extension(v) => v.clone(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            LoadedGroup::Tau(n) => n.name(),
            LoadedGroup::Extension(v) => v.name(),
        }
    }
}

const EXTENSION_PREFIXES: &[&str] = &["dinfty", "z-over-c2", "heisenberg-c2", "swap-c2", "s3-trivial:", "trivial("];

/// Resolve a catalog name or a JSON file (looked up as given, then under `groups/`).
pub fn load_group(spec: &str) -> Result<LoadedGroup> {
    let candidates = [PathBuf::from(spec), Path::new("groups").join(spec)];
    if let Some(path) = candidates.iter().find(|p| p.is_file()) {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        return if value.get("F").is_some() {
            let j: ExtensionJson = serde_json::from_value(value)?;
            Ok(LoadedGroup::Extension(VirtuallyTauGroup::from_json(&j)?))
        } else {
            let j: PresentationJson = serde_json::from_value(value)?;
            Ok(LoadedGroup::Tau(MalcevPresentation::from_json(&j)?))
        };
    }
    if spec.ends_with(".json") {
        return Err(Error::Usage(format!("group file {spec} not found")));
    }
    if EXTENSION_PREFIXES.iter().any(|p| spec.starts_with(p)) {
        return Ok(LoadedGroup::Extension(extension_catalog(spec)?));
    }
    Ok(LoadedGroup::Tau(catalog_make(spec)?))
}

/// `all` or comma-separated indices into `fin_subgroups(F, variant)`.
pub fn select_k(v: &VirtuallyTauGroup, variant: Variant, sel: &str) -> Result<Vec<SubgroupOfF>> {
    let all = fin_subgroups(v.quotient(), variant);
    if sel.trim() == "all" {
        return Ok(all);
    }
    sel.split(',')
        .map(|t| {
            let i: usize = t.trim().parse().map_err(|_| Error::Usage(format!("bad K index {t:?}")))?;
            all.get(i).cloned().ok_or_else(|| Error::Usage(format!("K index {i} out of range (F has {} candidate subgroups)", all.len())))
        })
        .collect()
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Verification(_) | Error::Consistency(_) => 2,
        Error::Budget(_) => 3,
        Error::Indeterminate(_) => 4,
        _ => 1,
    }
}

fn check_primes(primes: &[u64]) -> Result<()> {
    match primes.iter().find(|&&p| !is_prime(p)) {
        Some(p) => Err(Error::Usage(format!("{p} is not prime"))),
        None => Ok(()),
    }
}

fn check_positive(name: &str, v: u64) -> Result<()> {
    if v == 0 {
        return Err(Error::Usage(format!("{name} must be at least 1")));
    }
    Ok(())
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    let err = |e: csv::Error| Error::Internal(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

/// Counts as JSON numbers where they fit, strings otherwise.
fn count_values(s: &LocalSeries) -> Vec<serde_json::Value> {
    s.coeffs_text()
        .into_iter()
        .map(|t| t.parse::<u64>().map_or(serde_json::Value::String(t), serde_json::Value::from))
        .collect()
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes") + "\n"
}

fn members(k: &[usize]) -> String {
    k.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(" ")
}

/// Run with the given arguments (including the program name); returns the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "nilzeta: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let workers = cli.workers.filter(|&w| w > 0);
    let eval = EvalConfig { workers, ..EvalConfig::default() };
    match cli.command {
        Command::Catalog { format } => {
            let text = match format {
                Format::Json => pretty(&json!({ "schema": 1, "presentations": CATALOG_NAMES, "extensions": EXTENSION_CATALOG_NAMES })),
                Format::Csv => csv_text(
                    &["kind", "name"],
                    CATALOG_NAMES
                        .iter()
                        .map(|n| vec!["presentation".to_string(), n.to_string()])
                        .chain(EXTENSION_CATALOG_NAMES.iter().map(|n| vec!["extension".to_string(), n.to_string()]))
                        .collect(),
                )?,
                Format::Table => {
                    let mut s = String::from("presentations:\n");
                    for n in CATALOG_NAMES {
                        s.push_str(&format!("  {n}\n"));
                    }
                    s.push_str("extensions:\n");
                    for n in EXTENSION_CATALOG_NAMES {
                        s.push_str(&format!("  {n}\n"));
                    }
                    s
                }
            };
            out.write_all(text.as_bytes())?;
            Ok(0)
        }
        Command::Verify { group, samples, bound, seed, format } => {
            let g = load_group(&group)?;
            let v = g.as_extension();
            let mut report: VerificationReport = verify_presentation(v.n(), bound, samples, seed);
            if let LoadedGroup::Extension(v) = &g {
                report.checks.extend(verify_cocycle(v, bound.min(8), samples.min(60), seed).checks);
                let words = structure_words(v).map(|_| ()).map_err(|e| e.to_string());
                report.record("structure_words", words);
            }
            let conv = transversal_convention_failures(&v);
            let checks: Vec<serde_json::Value> =
                report.checks.iter().map(|c| json!({ "law": c.law, "passed": c.passed, "detail": c.detail })).collect();
            let text = match format {
                Format::Json => pretty(&json!({
                    "schema": 1,
                    "group": g.name(),
                    "passed": report.all_passed(),
                    "checks": checks,
                    "transversal_convention_failures": conv,
                })),
                Format::Csv => csv_text(
                    &["law", "passed", "detail"],
                    report.checks.iter().map(|c| vec![c.law.to_string(), c.passed.to_string(), c.detail.clone()]).collect(),
                )?,
                Format::Table => {
                    let mut s = format!("{}\n", g.name());
                    for c in &report.checks {
                        s.push_str(&format!("  {:<24} {}{}\n", c.law, if c.passed { "ok" } else { "FAILED" }, if c.passed { String::new() } else { format!(" ({})", c.detail) }));
                    }
                    if !conv.is_empty() {
                        s.push_str(&format!("  note: psi(f^-1, f) is nonzero for f in {conv:?}\n"));
                    }
                    s
                }
            };
            out.write_all(text.as_bytes())?;
            Ok(if report.all_passed() { 0 } else { 2 })
        }
        Command::Conditions { g, k } => {
            let group = load_group(&g.group)?;
            let systems = match &group {
                LoadedGroup::Tau(n) if k == "all" => vec![good_basis_conditions(n, g.variant)?],
                _ => {
                    let v = group.as_extension();
                    select_k(&v, g.variant, &k)?.iter().map(|k| relative_conditions(&v, k, g.variant)).collect::<Result<Vec<_>>>()?
                }
            };
            let text = if systems.len() == 1 {
                systems[0].to_canonical_json()
            } else {
                let vals: Vec<ConeSystemJson> = systems.iter().map(ConeConditionSystem::to_json).collect();
                serde_json::to_string_pretty(&vals)? + "\n"
            };
            out.write_all(text.as_bytes())?;
            Ok(0)
        }
        Command::Local { group, system, variant, k, primes, kmax, dump_conditions, format } => {
            check_primes(&primes)?;
            check_positive("kmax", kmax as u64)?;
            let mut results: Vec<(String, Vec<usize>, LocalSeries, usize)> = vec![];
            let mut used: Vec<ConeConditionSystem> = vec![];
            match (&group, &system) {
                (None, Some(path)) => {
                    let j: ConeSystemJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                    let sys = ConeConditionSystem::from_json(&j)?;
                    for &p in &primes {
                        let (s, _) = system_counts(&sys, p, kmax, &eval)?;
                        results.push((sys.name.clone(), sys.k_members.clone(), s, sys.h));
                    }
                    used.push(sys);
                }
                (Some(spec), None) => {
                    let g = load_group(spec)?;
                    match &g {
                        LoadedGroup::Tau(n) if k == "all" => {
                            for &p in &primes {
                                results.push((g.name().to_string(), vec![0], local_counts(CountSource::Tau(n), variant, p, kmax, &eval)?, n.hirsch_length()));
                            }
                            if dump_conditions.is_some() {
                                used.push(good_basis_conditions(n, variant)?);
                            }
                        }
                        _ => {
                            let v = g.as_extension();
                            for kk in select_k(&v, variant, &k)? {
                                for &p in &primes {
                                    results.push((g.name().to_string(), kk.members.clone(), local_counts(CountSource::Relative(&v, &kk), variant, p, kmax, &eval)?, v.hirsch_length()));
                                }
                                if dump_conditions.is_some() {
                                    used.push(relative_conditions(&v, &kk, variant)?);
                                }
                            }
                        }
                    }
                }
                _ => return Err(Error::Usage("give exactly one of --group and --system".into())),
            }
            if let Some(path) = dump_conditions {
                let vals: Vec<ConeSystemJson> = used.iter().map(ConeConditionSystem::to_json).collect();
                std::fs::write(path, serde_json::to_string_pretty(&vals)? + "\n")?;
            }
            let text = match format {
                Format::Json => {
                    let rows: Vec<serde_json::Value> = results
                        .iter()
                        .map(|(_, k, s, h)| {
                            let raw: Vec<String> = s.raw_coeffs(*h, (h + k.len() - 1) as i64).iter().map(format_rational).collect();
                            json!({ "K": k, "p": s.p, "kmax": s.kmax, "counts": count_values(s), "a_raw": raw, "provenance": s.provenance })
                        })
                        .collect();
                    let name = results.first().map(|r| r.0.clone()).unwrap_or_default();
                    pretty(&json!({ "schema": 1, "group": name, "variant": variant, "results": rows }))
                }
                Format::Csv => csv_text(
                    &["K", "p", "k", "count"],
                    results
                        .iter()
                        .flat_map(|(_, k, s, _)| {
                            s.coeffs_text().into_iter().enumerate().map(move |(i, c)| vec![members(k), s.p.to_string(), i.to_string(), c])
                        })
                        .collect(),
                )?,
                Format::Table => results
                    .iter()
                    .map(|(_, k, s, _)| format!("K={{{}}} p={}: {}\n", members(k), s.p, s.coeffs_text().join(" ")))
                    .collect(),
            };
            out.write_all(text.as_bytes())?;
            Ok(0)
        }
        Command::Global { g, nmax, format } => {
            check_positive("nmax", nmax)?;
            let v = load_group(&g.group)?.as_extension();
            let series = assemble_global(&v, g.variant, nmax, &eval)?;
            let text = match format {
                Format::Json => pretty(&series.to_json()),
                Format::Csv => series.to_csv()?,
                Format::Table => series.coeffs.iter().enumerate().map(|(i, c)| format!("{:>6} {c}\n", i + 1)).collect(),
            };
            out.write_all(text.as_bytes())?;
            Ok(0)
        }
        Command::OracleCompare { g, k, primes, kmax, level, max_order, system, format } => {
            check_primes(&primes)?;
            check_positive("kmax", kmax as u64)?;
            if let Some(e) = level {
                check_positive("level", e as u64)?;
            }
            let v = load_group(&g.group)?.as_extension();
            let oracle = OracleConfig { workers, max_order, ..OracleConfig::default() };
            let report = match system {
                None => {
                    let ks = select_k(&v, g.variant, &k)?;
                    let job = CompareJob { group: &v, ks, variant: g.variant, primes, kmax, level };
                    compare_reports(&job, &eval, &oracle)
                }
                Some(path) => {
                    let j: ConeSystemJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                    let sys = ConeConditionSystem::from_json(&j)?;
                    let kk = fin_subgroups(v.quotient(), sys.variant)
                        .into_iter()
                        .find(|c| c.members == sys.k_members)
                        .ok_or_else(|| Error::Usage(format!("the system's K {:?} is not a subgroup of F for {}", sys.k_members, v.name())))?;
                    let rows = primes.iter().map(|&p| compare_system(&sys, &v, &kk, p, kmax, &eval, &oracle)).collect();
                    CountReport { schema: 1, group: v.name().to_string(), variant: sys.variant, rows }
                }
            };
            let text = match format {
                Format::Json => pretty(&report.to_json()),
                Format::Csv => report.to_csv()?,
                Format::Table => report.to_table(),
            };
            out.write_all(text.as_bytes())?;
            Ok(report.exit_code())
        }
    }
}
