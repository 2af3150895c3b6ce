//! Command-line front end: attractor export, KMS simplex classification,
//! and basis verification. Outputs are deterministic files (CSV/JSON/SVG)
//! written atomically into the output directory.
//!
//! Exit codes: 0 on success, 1 when a verification check fails, 2 on
//! configuration errors.

use clap::{Args, Parser, Subcommand};
use kmsf_core::basis::{build_patched_basis, BasisParams, EnumOrder};
use kmsf_core::bimodule::{tilde, BimoduleElement};
use kmsf_core::branching::{branch_values, BranchReport};
use kmsf_core::error::Error;
use kmsf_core::exact::big_rat;
use kmsf_core::family::{standard_family, standard_grid};
use kmsf_core::ifs::{attractor_approx, check_self_similar, IfsSystem};
use kmsf_core::kms::{
    check_orbit_identity, classify, decompose, mixture_candidate, min_beta, ClassifyParams,
    Regime, SystemClass,
};
use kmsf_core::measure::OrbitSeries;
use kmsf_core::presets;
use kmsf_core::report::{
    cloud_csv, cloud_svg, exact_point_json, f64_repr, measure_csv, rational_repr,
    report_object, system_from_json, system_to_json, write_atomic, Json,
};
use num::rational::BigRational;
use num::Zero;
use rand::{Rng, SeedableRng};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kmsf", version, about = "Branch structure, bimodule bases, and KMS eigenmeasures of contraction systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SystemArgs {
    /// preset name: tent, doubling, or sierpinski
    #[arg(long, conflicts_with = "system")]
    preset: Option<String>,
    /// JSON file with a system definition
    #[arg(long)]
    system: Option<PathBuf>,
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// comma-separated formats: json,csv,svg
    #[arg(long, default_value = "json,csv,svg")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the attractor cloud and check self-similarity
    Attractor {
        #[command(flatten)]
        sys: SystemArgs,
        /// word length of the enumeration
        #[arg(long)]
        depth: u32,
        /// self-similarity tolerance on top of the cloud resolution
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Classify the candidate simplex at an inverse temperature
    Kms {
        #[command(flatten)]
        sys: SystemArgs,
        /// inverse temperature; accepts floats or lnK (e.g. ln4) for exact K
        #[arg(long)]
        beta: String,
        /// fixed-point iteration steps at lambda = N
        #[arg(long, default_value_t = 14)]
        steps: u32,
        /// RNG seed for the test family and round-trip weights
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// target truncation defect of orbit vertices
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Verify basis reconstruction and the trace-sum identity
    Basis {
        #[command(flatten)]
        sys: SystemArgs,
        /// number of basis elements in the partial sums
        #[arg(long)]
        terms: usize,
        /// RNG seed for the test family
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct LoadedSystem {
    system: IfsSystem,
    branch: BranchReport,
    class: SystemClass,
    label: String,
}

fn load_system(args: &SystemArgs) -> Result<LoadedSystem, Error> {
    match (&args.preset, &args.system) {
        (Some(name), None) => {
            let p = presets::by_name(name)?;
            let class = match name.as_str() {
                "tent" | "doubling" => SystemClass::IntervalOsc,
                _ => SystemClass::Gasket,
            };
            Ok(LoadedSystem { system: p.system, branch: p.branch, class, label: name.clone() })
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let system = system_from_json(&text)?;
            let branch = branch_values(&system)?;
            Ok(LoadedSystem { system, branch, class: SystemClass::Custom, label: "custom".into() })
        }
        _ => Err(Error::Config("exactly one of --preset or --system is required".into())),
    }
}

fn formats(args: &SystemArgs) -> Vec<String> {
    args.format.split(',').map(|s| s.trim().to_lowercase()).collect()
}

fn ensure_out(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))
}

/// Parses --beta: lnK carries the exact lambda = K, plain floats do not.
fn parse_beta(text: &str) -> Result<(f64, Option<BigRational>), Error> {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("ln") {
        let k: i64 = rest
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("cannot parse '{t}' as lnK with integer K")))?;
        if k <= 0 {
            return Err(Error::Config("lnK needs a positive K".into()));
        }
        return Ok(((k as f64).ln(), Some(big_rat(k, 1))));
    }
    let beta: f64 =
        t.parse().map_err(|_| Error::Config(format!("cannot parse beta '{t}'")))?;
    if !beta.is_finite() {
        return Err(Error::Config("beta must be finite".into()));
    }
    Ok((beta, None))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let msg = report_object(
                "error",
                vec![("error".into(), Json::Str(e.to_string()))],
            );
            eprint!("{}", msg.render());
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Attractor { sys, depth, tol } => cmd_attractor(sys, depth, tol),
        Command::Kms { sys, beta, steps, seed, tol } => cmd_kms(sys, &beta, steps, seed, tol),
        Command::Basis { sys, terms, seed } => cmd_basis(sys, terms, seed),
    }
}

fn cmd_attractor(args: SystemArgs, depth: u32, tol: f64) -> Result<bool, Error> {
    let loaded = load_system(&args)?;
    ensure_out(&args.out)?;
    let seed: Vec<f64> = (0..loaded.system.dim())
        .map(|i| 0.5 * (loaded.system.ambient_box.lo[i] + loaded.system.ambient_box.hi[i]))
        .collect();
    let cloud = attractor_approx(&loaded.system, depth, &seed)?;
    let check = check_self_similar(&loaded.system, &cloud, tol)?;

    let fmts = formats(&args);
    if fmts.iter().any(|f| f == "csv") {
        write_atomic(&args.out.join("points.csv"), &cloud_csv(&cloud, loaded.system.len()))?;
    }
    if fmts.iter().any(|f| f == "svg") {
        write_atomic(
            &args.out.join("attractor.svg"),
            &cloud_svg(&cloud, &loaded.system.ambient_box),
        )?;
    }
    if fmts.iter().any(|f| f == "json") {
        let report = report_object(
            "attractor",
            vec![
                ("system".into(), Json::Str(loaded.label.clone())),
                ("definition".into(), system_to_json(&loaded.system)?),
                ("depth".into(), Json::Int(depth as i64)),
                ("points".into(), Json::Int(cloud.points.len() as i64)),
                ("resolution".into(), Json::Num(cloud.resolution)),
                (
                    "self_similar".into(),
                    Json::Obj(vec![
                        ("defect".into(), Json::Num(check.defect)),
                        ("tolerance".into(), Json::Num(check.tolerance)),
                        ("pass".into(), Json::Bool(check.pass)),
                    ]),
                ),
            ],
        );
        write_atomic(&args.out.join("report.json"), &report.render())?;
    }
    Ok(check.pass)
}

fn residual_rows(
    name: &str,
    c3: &kmsf_core::kms::Condition3Report,
    c4: &kmsf_core::kms::Condition4Report,
    rows: &mut String,
) {
    for m in &c3.members {
        let _ = writeln!(
            rows,
            "{name},eigen_equation,{},{},{},{}",
            m.name,
            f64_repr(m.residual),
            f64_repr(m.bound),
            if m.pass { "pass" } else { "fail" }
        );
    }
    for m in &c4.members {
        let _ = writeln!(
            rows,
            "{name},domination_margin,{},{},{},{}",
            m.name,
            f64_repr(m.residual),
            f64_repr(m.bound),
            if m.pass { "pass" } else { "fail" }
        );
    }
}

fn cmd_kms(args: SystemArgs, beta_text: &str, steps: u32, seed: u64, tol: f64) -> Result<bool, Error> {
    let loaded = load_system(&args)?;
    ensure_out(&args.out)?;
    let (beta, lambda_exact) = parse_beta(beta_text)?;
    let family = standard_family(&loaded.system, &loaded.branch, seed)?;
    let params = ClassifyParams {
        hutchinson_steps: steps,
        merge_resolution: 0.0,
        target_defect: tol,
    };
    let classification = classify(
        &loaded.system,
        &loaded.branch,
        beta,
        lambda_exact.clone(),
        loaded.class,
        &family,
        &params,
    )?;

    let mut all_pass = classification
        .checks
        .iter()
        .all(|(_, c3, c4)| c3.pass && c4.pass);

    let mut residual_table = String::from("candidate,check,member,residual_or_margin,bound,verdict\n");
    for (name, c3, c4) in &classification.checks {
        residual_rows(name, c3, c4, &mut residual_table);
    }

    let fmts = formats(&args);
    let mut simplex_json: Vec<Json> = Vec::new();
    let mut roundtrip_json = Json::Null;

    match &classification.regime {
        Regime::Empty { reason } => {
            simplex_json.push(Json::Obj(vec![("empty_reason".into(), Json::Str(reason.clone()))]));
        }
        Regime::UniqueHutchinson(cand) => {
            if fmts.iter().any(|f| f == "csv") {
                write_atomic(
                    &args.out.join("vertex_hutchinson.csv"),
                    &measure_csv(&cand.measure),
                )?;
            }
            simplex_json.push(Json::Obj(vec![
                ("vertex".into(), Json::Str("hutchinson".into())),
                ("measure_file".into(), Json::Str("vertex_hutchinson.csv".into())),
                ("atoms".into(), Json::Int(cand.measure.atoms.len() as i64)),
                ("defect".into(), Json::Num(cand.measure.defect)),
            ]));
        }
        Regime::Simplex(vertices) => {
            for (idx, cand) in vertices.iter().enumerate() {
                let file = format!("vertex_{}.csv", idx + 1);
                if fmts.iter().any(|f| f == "csv") {
                    write_atomic(&args.out.join(&file), &measure_csv(&cand.measure))?;
                }
                let anchor = match &cand.kind {
                    kmsf_core::kms::CandidateKind::BranchOrbit { anchor, .. } => {
                        exact_point_json(anchor)
                    }
                    _ => Json::Null,
                };
                simplex_json.push(Json::Obj(vec![
                    ("vertex".into(), Json::Str(cand.name())),
                    ("anchor".into(), anchor),
                    ("measure_file".into(), Json::Str(file)),
                    ("atoms".into(), Json::Int(cand.measure.atoms.len() as i64)),
                    ("defect".into(), Json::Num(cand.measure.defect)),
                ]));
            }
            // decomposition round trip on a seeded mixture of the vertices
            if let Some(lam) = &lambda_exact {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
                let raw: Vec<BigRational> = (0..vertices.len())
                    .map(|_| big_rat(rng.random_range(1..=1000), 1))
                    .collect();
                let total: BigRational = raw.iter().fold(BigRational::zero(), |a, w| a + w);
                let weights: Vec<_> = loaded
                    .branch
                    .branch_points
                    .iter()
                    .cloned()
                    .zip(raw.iter().map(|w| w / &total))
                    .collect();
                let depth = vertices
                    .iter()
                    .map(|v| v.materialized_depth)
                    .min()
                    .unwrap_or(8);
                let mix = mixture_candidate(&loaded.system, &loaded.branch, &weights, lam.clone(), depth)?;
                let rep = decompose(&mix, &loaded.system, &loaded.branch, &family, depth)?;
                all_pass &= rep.pass;
                let recovered: Vec<Json> = rep
                    .weights
                    .iter()
                    .map(|(p, w)| {
                        Json::Obj(vec![
                            ("anchor".into(), exact_point_json(p)),
                            ("weight".into(), Json::Str(rational_repr(w))),
                        ])
                    })
                    .collect();
                roundtrip_json = Json::Obj(vec![
                    ("depth".into(), Json::Int(depth as i64)),
                    ("recovered_weights".into(), Json::Arr(recovered)),
                    (
                        "residual_tv".into(),
                        Json::Str(rational_repr(&rep.residual_tv)),
                    ),
                    ("pass".into(), Json::Bool(rep.pass)),
                ]);
            }
        }
    }

    if fmts.iter().any(|f| f == "csv") {
        write_atomic(&args.out.join("residuals.csv"), &residual_table)?;
    }
    if fmts.iter().any(|f| f == "json") {
        let checks_json: Vec<Json> = classification
            .checks
            .iter()
            .map(|(name, c3, c4)| {
                Json::Obj(vec![
                    ("candidate".into(), Json::Str(name.clone())),
                    (
                        "eigen_equation".into(),
                        Json::Obj(vec![
                            ("max_residual".into(), Json::Num(c3.max_residual)),
                            ("worst_member".into(), Json::Str(c3.worst_member.clone())),
                            ("pass".into(), Json::Bool(c3.pass)),
                        ]),
                    ),
                    (
                        "domination".into(),
                        Json::Obj(vec![
                            ("min_margin".into(), Json::Num(c4.min_margin)),
                            ("worst_member".into(), Json::Str(c4.worst_member.clone())),
                            ("pass".into(), Json::Bool(c4.pass)),
                        ]),
                    ),
                ])
            })
            .collect();
        let report = report_object(
            "kms",
            vec![
                ("system".into(), Json::Str(loaded.label.clone())),
                ("beta".into(), Json::Num(classification.beta)),
                ("lambda".into(), Json::Num(classification.lambda)),
                ("min_beta".into(), Json::Num(min_beta(&loaded.system))),
                ("verified_class".into(), Json::Bool(classification.verified_class)),
                ("family_members".into(), Json::Int(family.len() as i64)),
                ("family_seed".into(), Json::Int(seed as i64)),
                ("simplex".into(), Json::Arr(simplex_json)),
                ("checks".into(), Json::Arr(checks_json)),
                ("decomposition_round_trip".into(), roundtrip_json),
            ],
        );
        write_atomic(&args.out.join("simplex.json"), &report.render())?;
    }
    Ok(all_pass)
}

fn cmd_basis(args: SystemArgs, terms: usize, seed: u64) -> Result<bool, Error> {
    let loaded = load_system(&args)?;
    ensure_out(&args.out)?;
    let basis = build_patched_basis(&loaded.system, &loaded.branch, BasisParams::default())?;
    let grid = standard_grid(&loaded.system, &loaded.branch);
    let family = standard_family(&loaded.system, &loaded.branch, seed)?;

    // reconstruction targets: the constant, the right-embedded identity
    // (sheets share one function of y), and the left-embedded identity
    // (sheet j carries map_j(y), genuinely different across sheets)
    let one = BimoduleElement::constant(&loaded.system, &loaded.branch, 1.0)?;
    let right_id = BimoduleElement::diagonal(&loaded.system, &loaded.branch, |y| {
        num::complex::Complex64::new(y.iter().sum::<f64>(), 0.0)
    })?;
    let sys_for_left = loaded.system.clone();
    let n_maps = loaded.system.len();
    let left_components: Vec<kmsf_core::bimodule::ComplexFn> = (1..=n_maps)
        .map(|j| {
            let sys = sys_for_left.clone();
            let f: kmsf_core::bimodule::ComplexFn = std::sync::Arc::new(move |y: &[f64]| {
                let img = sys.apply_f64(j, y).expect("valid label");
                num::complex::Complex64::new(img.iter().sum::<f64>(), 0.0)
            });
            f
        })
        .collect();
    let left_id =
        BimoduleElement::new(&loaded.system, &loaded.branch, left_components)?;
    let targets = [("one", &one), ("right_identity", &right_id), ("left_identity", &left_id)];

    let checkpoints: Vec<usize> = (1..=20).map(|k| k * terms / 20).filter(|&k| k > 0).collect();
    let mut profile: Vec<(usize, f64)> = Vec::new();
    let mut final_error: f64 = 0.0;
    let mut order_delta: f64 = 0.0;
    let complete = basis.level_complete_count(terms);
    for (_, f) in targets {
        let rep = kmsf_core::basis::verify_reconstruction(
            &basis,
            f,
            terms,
            &grid,
            EnumOrder::Standard,
            &checkpoints,
        )?;
        if profile.is_empty() {
            profile = rep.profile.clone();
        } else {
            for (acc, cur) in profile.iter_mut().zip(&rep.profile) {
                acc.1 = acc.1.max(cur.1);
            }
        }
        final_error = final_error.max(rep.final_error);
        // compare orders at a level-complete truncation where both cover the
        // same element set
        let std_at = kmsf_core::basis::verify_reconstruction(
            &basis,
            f,
            complete,
            &grid,
            EnumOrder::Standard,
            &[complete],
        )?;
        let rev_at = kmsf_core::basis::verify_reconstruction(
            &basis,
            f,
            complete,
            &grid,
            EnumOrder::ReversedWithinLevel,
            &[complete],
        )?;
        order_delta = order_delta.max((std_at.final_error - rev_at.final_error).abs());
    }

    // trace-sum identity over a few family members
    let mut max_sum_residual: f64 = 0.0;
    let mut branch_value_residual: f64 = 0.0;
    for m in family.members.iter().take(8) {
        let a = m.as_algebra_element();
        let ta = tilde(&a, &loaded.system, &loaded.branch);
        let rep = kmsf_core::basis::verify_sum_identity(
            &basis,
            &a,
            &ta,
            terms,
            &grid,
            &loaded.branch,
        )?;
        // grid residuals near the patch center reflect unsaturated ramps at
        // finite truncation; the branch values themselves must be exact
        max_sum_residual = max_sum_residual.max(rep.max_residual);
        for r in rep.at_branch_values {
            branch_value_residual = branch_value_residual.max(r);
        }
    }

    let pass = order_delta < 1e-9 && branch_value_residual == 0.0;

    let fmts = formats(&args);
    if fmts.iter().any(|f| f == "csv") {
        let mut rows = String::from("terms,sup_error\n");
        for (m, e) in &profile {
            let _ = writeln!(rows, "{m},{}", f64_repr(*e));
        }
        write_atomic(&args.out.join("error_profile.csv"), &rows)?;
    }
    if fmts.iter().any(|f| f == "json") {
        let radii: Vec<Json> = basis
            .patches
            .iter()
            .filter(|p| p.center.is_some())
            .map(|p| Json::Num(p.radius))
            .collect();
        let report = report_object(
            "basis",
            vec![
                ("system".into(), Json::Str(loaded.label.clone())),
                ("terms".into(), Json::Int(terms as i64)),
                ("patches".into(), Json::Int(basis.patches.len() as i64)),
                ("patch_radii".into(), Json::Arr(radii)),
                (
                    "ramp_scale_ratio".into(),
                    Json::Num(basis.params.ramp_scale_ratio),
                ),
                ("reconstruction_sup_error".into(), Json::Num(final_error)),
                ("order_independence_delta".into(), Json::Num(order_delta)),
                ("sum_identity_max_residual".into(), Json::Num(max_sum_residual)),
                (
                    "sum_identity_branch_value_residual".into(),
                    Json::Num(branch_value_residual),
                ),
                ("pass".into(), Json::Bool(pass)),
            ],
        );
        write_atomic(&args.out.join("report.json"), &report.render())?;
    }

    // orbit-identity spot check for interval presets with a branch point
    if loaded.system.dim() == 1 && !loaded.branch.branch_points.is_empty() && loaded.system.exact_inputs {
        let anchor = loaded.branch.branch_points[0].clone();
        if let Ok(series) = OrbitSeries::new(&loaded.system, anchor, big_rat(4, 1), 24) {
            let rep = check_orbit_identity(&series, &family)?;
            if !rep.pass {
                return Ok(false);
            }
        }
    }
    Ok(pass)
}
