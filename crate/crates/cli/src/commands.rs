//! One function per subcommand, each producing a [`Report`].

use std::f64::consts::{FRAC_PI_2, PI};

use hermann_core::catalog::{self, TriadSpec};
use hermann_core::integration::{self, testfns, PointFn};
use hermann_core::orbit::{self, FdConfig, GeneralSpectrumDatum};
use hermann_core::{
    AnalysisConfig, DensityProfile, QuadratureConfig, SectionLattice, TriadAnalysis,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::args::{
    CatalogArgs, Cli, Command, CommonArgs, DensityArgs, IntegrateArgs, RootsArgs, ShapeArgs,
    TriadArgs, VerifyArgs, VolumeArgs,
};
use crate::error::{CliError, CliErrorKind};
use crate::output::{Cell, Report, Table, SCHEMA};
use crate::triad::{self, TriadFile};

type CmdResult = Result<Report, CliError>;

/// Run the selected command. Returns the shared flags, the report and the
/// JSON envelope around it.
pub fn dispatch(cli: &Cli) -> Result<(CommonArgs, Report, Value), CliError> {
    let (name, t, c) = match &cli.command {
        Command::Roots(x) => ("roots", &x.triad, &x.common),
        Command::Density(x) => ("density", &x.triad, &x.common),
        Command::Shape(x) => ("shape", &x.triad, &x.common),
        Command::Volume(x) => ("volume", &x.triad, &x.common),
        Command::Integrate(x) => ("integrate", &x.triad, &x.common),
        Command::Verify(x) => ("verify", &x.triad, &x.common),
        Command::Catalog(x) => ("catalog", &x.triad, &x.common),
    };
    if !(c.tol > 0.0 && c.tol.is_finite()) {
        return Err(CliError::input("--tol must be positive"));
    }
    if let Command::Catalog(args) = &cli.command {
        let (spec, report) = catalog_cmd(args)?;
        let config = json!({ "seed": c.seed, "tol": c.tol });
        let env = envelope(name, spec.as_ref().map(triad::describe), config, &report);
        return Ok((c.clone(), report, env));
    }
    let a = analyze(t, c)?;
    let mut config = json!({
        "seed": c.seed,
        "tolerances": a.config.tol,
        "explicit_frames": a.frames().explicit,
        "tol": c.tol,
    });
    let report = match &cli.command {
        Command::Roots(x) => roots(&a, x),
        Command::Density(x) => {
            config["grid"] = json!(x.grid);
            density(&a, x)
        }
        Command::Shape(x) => {
            config["step"] = json!(x.step);
            shape(&a, x)
        }
        Command::Volume(x) => {
            config["grid"] = json!(x.grid);
            volume(&a, x)
        }
        Command::Integrate(x) => {
            config["grid"] = json!(x.grid);
            config["mc_n"] = json!(x.mc_n);
            integrate(&a, x)
        }
        Command::Verify(x) => {
            config["grid"] = json!(x.grid);
            config["mc_n"] = json!(x.mc_n);
            verify(&a, x)
        }
        Command::Catalog(_) => unreachable!("handled above"),
    }?;
    let env = envelope(name, Some(triad::describe(&a.spec)), config, &report);
    Ok((c.clone(), report, env))
}

fn envelope(command: &str, triad: Option<Value>, config: Value, report: &Report) -> Value {
    json!({
        "schema": SCHEMA,
        "command": command,
        "triad": triad,
        "config": config,
        "result": report.result,
    })
}

pub fn analyze(t: &TriadArgs, c: &CommonArgs) -> Result<TriadAnalysis, CliError> {
    let spec = triad::select(t)?;
    let cfg = AnalysisConfig {
        seed: c.seed,
        explicit_frames: !t.greedy_frames,
        ..AnalysisConfig::default()
    };
    Ok(TriadAnalysis::new(&spec, &cfg)?)
}

fn check_len(v: &[f64], rank: usize, flag: &str) -> Result<(), CliError> {
    if v.len() != rank {
        return Err(CliError::input(format!(
            "{flag} needs {rank} comma-separated coordinates, got {}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::input(format!("{flag} has non-finite entries")));
    }
    Ok(())
}

/// `theta` for commuting triads from the multiplicities, otherwise from the
/// refined blocks of the general path.
pub fn profile(
    a: &TriadAnalysis,
) -> Result<(DensityProfile, Option<GeneralSpectrumDatum>), CliError> {
    if a.commuting() {
        Ok((DensityProfile::from_analysis(a)?, None))
    } else {
        let datum = orbit::general_spectrum(a)?;
        Ok((DensityProfile::from_general(a, &datum), Some(datum)))
    }
}

fn coeff(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x:.6}")
    }
}

/// `2w1-w2` style name of a linear form on the chart.
pub fn root_label(coeffs: &[f64]) -> String {
    let mut s = String::new();
    for (i, &c) in coeffs.iter().enumerate() {
        if c.abs() < 1e-9 {
            continue;
        }
        let sign = if c < 0.0 {
            "-"
        } else if s.is_empty() {
            ""
        } else {
            "+"
        };
        let mag = c.abs();
        let m = if (mag - 1.0).abs() < 1e-9 {
            String::new()
        } else {
            coeff(mag)
        };
        s.push_str(&format!("{sign}{m}w{}", i + 1));
    }
    if s.is_empty() {
        "0".into()
    } else {
        s
    }
}

fn joined(xs: &[f64]) -> String {
    xs.iter().map(|x| coeff(*x)).collect::<Vec<_>>().join(" ")
}

fn roots(a: &TriadAnalysis, _args: &RootsArgs) -> CmdResult {
    let d = &a.decomp;
    let check = a.check_expected();
    let mut expected_label = vec![None; a.adapted().len()];
    if let Some(c) = &check {
        for m in &c.roots {
            if let Some(i) = m.computed {
                expected_label[i] = Some(m.label.clone());
            }
        }
    }
    let restricted: Vec<Value> = a
        .roots
        .system
        .roots
        .iter()
        .enumerate()
        .map(|(i, r)| json!({ "index": i, "coeffs": r.coeffs.as_slice(), "mult": r.mult() }))
        .collect();
    let mut table = Table::new(&[
        "index",
        "label",
        "expected_label",
        "chart_coeffs",
        "p_mult",
        "h_mult",
        "dim",
        "families",
    ]);
    let mut adapted = Vec::new();
    for (i, r) in a.adapted().iter().enumerate() {
        let coeffs: Vec<f64> = r.chart_coeffs.iter().copied().collect();
        let label = root_label(&coeffs);
        let families: Vec<Value> = r
            .families
            .iter()
            .map(|f| json!({ "restricted_roots": f.roots, "p_mult": f.p_mult, "h_mult": f.h_mult }))
            .collect();
        let fam_text = r
            .families
            .iter()
            .map(|f| format!("({},{})", f.p_mult, f.h_mult))
            .collect::<Vec<_>>()
            .join(" ");
        table.push(vec![
            i.into(),
            label.clone().into(),
            expected_label[i].clone().into(),
            joined(&coeffs).into(),
            r.p_mult.into(),
            r.h_mult.into(),
            r.dim().into(),
            fam_text.into(),
        ]);
        adapted.push(json!({
            "index": i,
            "label": label,
            "expected_label": expected_label[i],
            "chart_coeffs": coeffs,
            "p_mult": r.p_mult,
            "h_mult": r.h_mult,
            "dim": r.dim(),
            "splits": r.splits,
            "restricted_roots": r.roots,
            "families": families,
        }));
    }
    let c = &a.roots.adapted.centralizer;
    let (sum, dim_m) = if a.commuting() {
        a.dimension_sum()
    } else {
        (a.roots.adapted.total_dim(), a.decomp.m.ncols())
    };
    let result = json!({
        "rank": a.rank(),
        "restricted_rank": a.frames().a_basis.ncols(),
        "dims": {
            "g": a.triad.alg.dim(), "k": d.k.ncols(), "m": d.m.ncols(), "h": d.h.ncols(),
            "k_p": d.kp.ncols(), "k_h": d.kh.ncols(), "m_h": d.mh.ncols(), "m_p": d.mp.ncols(),
        },
        "centralizer": {
            "z_m_t": c.zm.ncols(), "z_m_t_h": c.zm_h.ncols(), "z_m_t_p": c.zm_p.ncols(),
            "z_k_t": c.zk.ncols(), "splits": c.splits,
        },
        "restricted_roots": restricted,
        "adapted_roots": adapted,
        "dimension_sum": { "sum": sum, "dim_m": dim_m, "ok": sum == dim_m },
        "regression": check,
    });
    Ok(Report {
        result,
        table,
        failed: false,
    })
}

fn default_density_grid(rank: usize) -> usize {
    match rank {
        0 | 1 => 65,
        2 => 33,
        _ => 9,
    }
}

fn density(a: &TriadAnalysis, args: &DensityArgs) -> CmdResult {
    let (prof, _) = profile(a)?;
    let lat = integration::section_lattice(a, &prof)?;
    let r = a.rank();
    let g = args.grid.unwrap_or_else(|| default_density_grid(r));
    if g < 2 {
        return Err(CliError::input("--grid must be at least 2"));
    }
    let total = g.checked_pow(r as u32).filter(|t| *t <= 1 << 22);
    let Some(total) = total else {
        return Err(CliError::input("grid too large for this rank"));
    };
    let mut header: Vec<String> = (1..=r).map(|i| format!("w{i}")).collect();
    header.extend(["theta", "regular", "chamber"].map(String::from));
    let mut table = Table {
        header,
        rows: Vec::new(),
    };
    let mut points = Vec::with_capacity(total);
    let mut max_theta: f64 = 0.0;
    for k in 0..total {
        let mut rem = k;
        let w: Vec<f64> = lat
            .cell
            .iter()
            .map(|(lo, hi)| {
                let i = rem % g;
                rem /= g;
                lo + (hi - lo) * i as f64 / (g - 1) as f64
            })
            .collect();
        let th = prof.eval(&w);
        max_theta = max_theta.max(th);
        let chamber = prof.chamber_label(&w);
        let chamber_text = chamber
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let mut row: Vec<Cell> = w.iter().map(|x| Cell::Float(*x)).collect();
        row.extend([th.into(), (th > 0.0).into(), chamber_text.into()]);
        table.push(row);
        points.push(json!({ "w": w, "theta": th, "regular": th > 0.0, "chamber": chamber }));
    }
    let result = json!({
        "profile": prof,
        "lattice": lat,
        "grid": g,
        "max_theta": max_theta,
        "points": points,
    });
    Ok(Report {
        result,
        table,
        failed: false,
    })
}

fn shape(a: &TriadAnalysis, args: &ShapeArgs) -> CmdResult {
    let r = a.rank();
    check_len(&args.w, r, "--w")?;
    check_len(&args.u, r, "--u")?;
    let (w, u) = (&args.w, &args.u);
    let (regularity, closed) = if a.commuting() {
        let reg = a.is_regular(w);
        if !reg.regular {
            return Err(CliError::new(
                CliErrorKind::SingularPoint,
                format!("w = {w:?} lies on a wall: {:?}", reg.violations),
            ));
        }
        (Some(reg), Some(orbit::shape_spectrum_closed(a, w, u)?))
    } else {
        (None, None)
    };
    let datum = orbit::general_spectrum(a)?;
    let general = orbit::eval_general_shape(a, &datum, w, u)?;
    let algebraic = orbit::shape_operator_algebraic(a, w, u)?.eigenvalues();
    let numeric = orbit::shape_operator_numeric(
        a,
        w,
        u,
        &FdConfig {
            step: args.step,
            richardson: true,
        },
    )?;
    let curvature = orbit::curvature_on_tangent(a, w, u)?.eigenvalues();
    let reference = closed.as_ref().unwrap_or(&general).expanded();
    let scale = orbit::direction_scale(a, u).max(f64::MIN_POSITIVE);
    let err = |other: &[f64]| orbit::spectrum_error(&reference, other, scale);
    let errors = json!({
        "scale": scale,
        "general": err(&general.expanded()),
        "algebraic": err(&algebraic),
        "finite_difference": err(&numeric.spectrum),
        "extrapolated": numeric.extrapolated.as_deref().and_then(&err),
    });
    let frame = if a.commuting() {
        Some(orbit::orbit_frame(a, w)?)
    } else {
        None
    };
    let mut table = Table::new(&[
        "index",
        "reference",
        "general",
        "algebraic",
        "finite_difference",
        "extrapolated",
    ]);
    let gen = general.expanded();
    for (i, &value) in reference.iter().enumerate() {
        table.push(vec![
            i.into(),
            value.into(),
            gen.get(i).copied().into(),
            algebraic.get(i).copied().into(),
            numeric.spectrum.get(i).copied().into(),
            numeric
                .extrapolated
                .as_ref()
                .and_then(|e| e.get(i).copied())
                .into(),
        ]);
    }
    let result = json!({
        "w": w,
        "u": u,
        "regularity": regularity,
        "closed_form": closed,
        "general": general,
        "general_blocks": datum,
        "algebraic": algebraic,
        "finite_difference": numeric,
        "curvature": curvature,
        "errors": errors,
        "frame": frame,
    });
    Ok(Report {
        result,
        table,
        failed: false,
    })
}

fn quad_cfg(grid: Option<usize>, tol: f64) -> Result<QuadratureConfig, CliError> {
    if grid.is_some_and(|g| g < 8) {
        return Err(CliError::input("--grid must be at least 8"));
    }
    Ok(QuadratureConfig {
        points_per_axis: grid,
        invariance_tol: tol,
        ..QuadratureConfig::default()
    })
}

fn volume(a: &TriadAnalysis, args: &VolumeArgs) -> CmdResult {
    let r = a.rank();
    check_len(&args.w, r, "--w")?;
    let w = &args.w;
    let (prof, _) = profile(a)?;
    let theta_w = prof.eval(w);
    if theta_w == 0.0 {
        return Err(CliError::new(
            CliErrorKind::SingularPoint,
            format!("theta vanishes at w = {w:?}"),
        ));
    }
    let lat = integration::section_lattice(a, &prof)?;
    let fraction = integration::orbit_volume_fraction(
        a,
        &prof,
        &lat,
        w,
        &quad_cfg(args.grid, args.common.tol)?,
    )?;
    let mut table = Table::new(&["quantity", "value"]);
    table.push(vec!["theta_w".into(), theta_w.into()]);
    table.push(vec![
        "volume_fraction_weyl_free".into(),
        fraction.weyl_free.into(),
    ]);
    table.push(vec!["volume_fraction".into(), fraction.fraction.into()]);
    let mut pair = Value::Null;
    if !args.v.is_empty() {
        check_len(&args.v, r, "--v")?;
        let v = &args.v;
        let theta_v = prof.eval(v);
        if theta_v == 0.0 {
            return Err(CliError::new(
                CliErrorKind::SingularPoint,
                format!("theta vanishes at v = {v:?}"),
            ));
        }
        let ratio = theta_v / theta_w;
        let relative = orbit::relative_density(&prof, w, v);
        let gram = orbit::gram_density_ratio(a, w, v);
        let rel_err = |x: f64| (x - ratio).abs() / ratio.abs();
        table.push(vec!["theta_v".into(), theta_v.into()]);
        table.push(vec!["theta_ratio".into(), ratio.into()]);
        table.push(vec![
            "relative_density".into(),
            relative.as_ref().ok().copied().into(),
        ]);
        table.push(vec![
            "gram_ratio".into(),
            gram.as_ref().ok().copied().into(),
        ]);
        pair = json!({
            "v": v,
            "theta_v": theta_v,
            "theta_ratio": ratio,
            "relative_density": relative.as_ref().ok(),
            "relative_density_note": relative.as_ref().err().map(|e| e.to_string()),
            "relative_density_error": relative.as_ref().ok().map(|x| rel_err(*x)),
            "gram_ratio": gram.as_ref().ok(),
            "gram_note": gram.as_ref().err().map(|e| e.to_string()),
            "gram_error": gram.as_ref().ok().map(|x| rel_err(*x)),
        });
    }
    let result = json!({
        "w": w,
        "theta_w": theta_w,
        "fraction": fraction,
        "pair": pair,
        "lattice": lat,
    });
    Ok(Report {
        result,
        table,
        failed: false,
    })
}

struct Integrals {
    names: Vec<String>,
    quad: Vec<hermann_core::QuadratureResult>,
    mc: Vec<Option<hermann_core::McResult>>,
}

fn run_integrals(
    a: &TriadAnalysis,
    prof: &DensityProfile,
    lat: &SectionLattice,
    names: &[String],
    qcfg: &QuadratureConfig,
    mc_n: usize,
    seed: u64,
) -> Result<Integrals, CliError> {
    let fs: Vec<Box<PointFn<'static>>> = names
        .iter()
        .map(|n| testfns::by_name(a, n))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&PointFn<'_>> = fs.iter().map(|f| f.as_ref()).collect();
    let quad = integration::integrate_invariant_many(a, &refs, prof, lat, qcfg)?;
    let mc = if mc_n > 0 {
        integration::haar_mc_integrate_many(&a.embedding, a.triad.n(), &refs, mc_n, seed)
            .into_iter()
            .map(Some)
            .collect()
    } else {
        vec![None; names.len()]
    };
    Ok(Integrals {
        names: names.to_vec(),
        quad,
        mc,
    })
}

/// `|quad - mc| / (3 sigma + quadrature error)`; at most 1 when they agree.
fn agreement(q: &hermann_core::QuadratureResult, m: &hermann_core::McResult) -> f64 {
    (q.mean - m.mean).abs() / (3.0 * m.std_error + q.error_estimate).max(f64::MIN_POSITIVE)
}

fn integrate(a: &TriadAnalysis, args: &IntegrateArgs) -> CmdResult {
    if args.f.is_empty() {
        return Err(CliError::input("--f needs at least one function"));
    }
    let (prof, _) = profile(a)?;
    let lat = integration::section_lattice(a, &prof)?;
    let qcfg = quad_cfg(args.grid, args.common.tol)?;
    let res = run_integrals(a, &prof, &lat, &args.f, &qcfg, args.mc_n, args.common.seed)?;
    let mut table = Table::new(&[
        "function",
        "quadrature",
        "quadrature_error",
        "order",
        "mc_mean",
        "mc_std_error",
        "mc_samples",
        "difference",
        "agreement",
    ]);
    let mut out = Vec::new();
    for ((name, q), m) in res.names.iter().zip(&res.quad).zip(&res.mc) {
        let diff = m.map(|m| q.mean - m.mean);
        let agree = m.map(|m| agreement(q, &m));
        table.push(vec![
            name.as_str().into(),
            q.mean.into(),
            q.error_estimate.into(),
            q.order.into(),
            m.map(|m| m.mean).into(),
            m.map(|m| m.std_error).into(),
            m.map(|m| m.samples).into(),
            diff.into(),
            agree.into(),
        ]);
        out.push(json!({
            "function": name,
            "quadrature": q,
            "monte_carlo": m,
            "difference": diff,
            "agreement": agree,
            "within_3_sigma": agree.map(|x| x <= 1.0),
        }));
    }
    let result = json!({ "lattice": lat, "integrals": out });
    Ok(Report {
        result,
        table,
        failed: false,
    })
}

fn catalog_cmd(args: &CatalogArgs) -> Result<(Option<TriadSpec>, Report), CliError> {
    let t = &args.triad;
    if t.triad.is_none() && t.triad_file.is_none() {
        let params = |name: &str| -> Vec<&str> {
            match name {
                "sphere-isotropy" => vec!["n"],
                "grassmannian-isotropy" => vec!["blocks=a,b"],
                "double-grassmannian" => vec!["blocks=a,b,c,d"],
                "u-on-grassmannian" => vec!["p", "q"],
                _ => vec![],
            }
        };
        let mut table = Table::new(&["name", "params"]);
        let mut entries = Vec::new();
        for name in catalog::NAMES {
            table.push(vec![name.into(), params(name).join(" ").into()]);
            entries.push(json!({ "name": name, "params": params(name) }));
        }
        let standard: Vec<String> = catalog::standard_instances()
            .iter()
            .map(|s| s.label())
            .collect();
        let result = json!({
            "triads": entries,
            "standard_instances": standard,
            "test_functions": testfns::NAMES,
        });
        return Ok((
            None,
            Report {
                result,
                table,
                failed: false,
            },
        ));
    }
    let spec = triad::select(t)?;
    let mut table = Table::new(&["label", "chart_coeffs", "p_mult", "h_mult"]);
    if let Some(e) = &spec.expected {
        for r in &e.roots {
            table.push(vec![
                r.label.as_str().into(),
                r.chart_coeffs.as_deref().map(joined).into(),
                r.p_mult.into(),
                r.h_mult.into(),
            ]);
        }
    }
    let result = json!({
        "triad_file": TriadFile::from_spec(&spec),
        "expected_roots": spec.expected,
        "expected_blocks": spec.expected_blocks,
    });
    Ok((
        Some(spec),
        Report {
            result,
            table,
            failed: false,
        },
    ))
}

// ---------------------------------------------------------------------------
// verify

struct Check {
    name: &'static str,
    value: f64,
    tol: f64,
    detail: Value,
}

impl Check {
    fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.tol
    }
}

fn check(name: &'static str, value: f64, tol: f64, detail: Value) -> Check {
    Check {
        name,
        value,
        tol,
        detail,
    }
}

/// A point whose every density factor is `margin` away from its walls.
fn sample_regular(
    prof: &DensityProfile,
    rng: &mut ChaCha8Rng,
    margin: f64,
) -> Result<Vec<f64>, CliError> {
    for _ in 0..100_000 {
        let w: Vec<f64> = (0..prof.rank)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let clear = prof.factors.iter().filter(|f| f.exponent > 0).all(|f| {
            let s = (f.eval_beta(&w) - f.offset).rem_euclid(PI);
            s.min(PI - s) > margin
        });
        if clear {
            return Ok(w);
        }
    }
    Err(CliError::new(
        CliErrorKind::Numeric,
        "could not sample a regular point",
    ))
}

fn sample_dir(r: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..r).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn verify(a: &TriadAnalysis, args: &VerifyArgs) -> CmdResult {
    let tol = args.common.tol;
    let mut rng = ChaCha8Rng::seed_from_u64(args.common.seed);
    let mut checks: Vec<Result<Check, (&'static str, CliError)>> = Vec::new();
    let r = a.rank();

    // refined multiplicities only exist where sigma2 preserves the root spaces
    let (sum, dim_m) = if a.commuting() {
        a.dimension_sum()
    } else {
        (a.roots.adapted.total_dim(), a.decomp.m.ncols())
    };
    checks.push(Ok(check(
        "dimension_sum",
        sum.abs_diff(dim_m) as f64,
        0.0,
        json!({ "sum": sum, "dim_m": dim_m }),
    )));
    if a.commuting() {
        let d = &a.decomp;
        let blocks = [d.kp.ncols(), d.kh.ncols(), d.mh.ncols(), d.mp.ncols()];
        let total: usize = blocks.iter().sum();
        checks.push(Ok(check(
            "refined_blocks",
            total.abs_diff(a.triad.alg.dim()) as f64,
            0.0,
            json!({ "k_p": blocks[0], "k_h": blocks[1], "m_h": blocks[2], "m_p": blocks[3] }),
        )));
    }
    if let Some(c) = a.check_expected() {
        let bad =
            c.roots.iter().filter(|m| !m.ok).count() + c.unexpected.len() + usize::from(!c.passed);
        checks.push(Ok(check("root_table", bad as f64, 0.0, json!(c))));
    }
    let same = (a.triad.sigma1.conjugator() - a.triad.sigma2.conjugator()).norm() < 1e-12
        || (a.triad.sigma1.conjugator() + a.triad.sigma2.conjugator()).norm() < 1e-12;
    if same {
        let h: usize = a.adapted().iter().map(|d| d.h_mult).sum();
        checks.push(Ok(check(
            "h_equals_k",
            h as f64,
            0.0,
            json!({ "sum_h_mult": h }),
        )));
    }

    let prof = match profile(a) {
        Ok((p, _)) => p,
        Err(e) => {
            checks.push(Err(("density_profile", e)));
            return finish_verify(checks);
        }
    };
    let gram = a.chart_gram();

    let regular: Vec<Vec<f64>> = (0..8)
        .map(|_| sample_regular(&prof, &mut rng, 0.15))
        .collect::<Result<_, _>>()?;

    if a.commuting() {
        checks.push(
            (|| {
                let mut bad = 0usize;
                let mut dims = Vec::new();
                for w in regular.iter().take(3).chain(std::iter::once(&vec![0.0; r])) {
                    let frame = orbit::orbit_frame(a, w)?;
                    let numeric = orbit::tangent_rank_numeric(a, w)?;
                    dims.push((frame.tangent_dim, numeric));
                    bad += usize::from(frame.tangent_dim != numeric);
                }
                Ok(check(
                    "tangent_rank",
                    bad as f64,
                    0.0,
                    json!({ "frame_vs_numeric": dims }),
                ))
            })()
            .map_err(|e: hermann_core::Error| ("tangent_rank", e.into())),
        );
    }

    // regular configurations plus the origin and wall points, all in one section
    let mut configs: Vec<Vec<f64>> = regular.clone();
    configs.push(vec![0.0; r]);
    let active: Vec<usize> = (0..prof.factors.len())
        .filter(|&i| prof.factors[i].exponent > 0)
        .collect();
    for (k, w) in regular.iter().take(3).enumerate() {
        if active.is_empty() {
            break;
        }
        if let Some(refl) = prof.reflect(active[k % active.len()], w, &gram) {
            configs.push(w.iter().zip(&refl).map(|(x, y)| 0.5 * (x + y)).collect());
        }
    }
    checks.push(
        (|| {
            let mut worst: f64 = 0.0;
            for w in &configs {
                let v = sample_dir(r, &mut rng);
                let u = sample_dir(r, &mut rng);
                let c = orbit::commutation_residual(a, w, &v, &u)?;
                worst = worst.max(c.curvature_shape).max(c.shape_shape);
            }
            Ok(check(
                "commutation",
                worst,
                tol,
                json!({ "configurations": configs.len() }),
            ))
        })()
        .map_err(|e: hermann_core::Error| ("commutation", e.into())),
    );

    let datum = orbit::general_spectrum(a);
    let mut fd_err: f64 = 0.0;
    let mut alg_err: f64 = 0.0;
    let mut order_dev: f64 = 0.0;
    let mut orders = Vec::new();
    let fd: Result<(), hermann_core::Error> = (|| {
        let datum = datum
            .as_ref()
            .map_err(|e| hermann_core::Error::Degenerate(e.to_string()))?;
        for w in regular.iter().take(2) {
            let u = sample_dir(r, &mut rng);
            let reference = if a.commuting() {
                orbit::shape_spectrum_closed(a, w, &u)?
            } else {
                orbit::eval_general_shape(a, datum, w, &u)?
            }
            .expanded();
            let scale = orbit::direction_scale(a, &u).max(f64::MIN_POSITIVE);
            let num = orbit::shape_operator_numeric(a, w, &u, &FdConfig::default())?;
            let alg = orbit::shape_operator_algebraic(a, w, &u)?.eigenvalues();
            fd_err = fd_err.max(
                orbit::spectrum_error(&reference, &num.spectrum, scale).unwrap_or(f64::INFINITY),
            );
            alg_err = alg_err
                .max(orbit::spectrum_error(&reference, &alg, scale).unwrap_or(f64::INFINITY));
            orders.push(num.convergence_order);
            order_dev = order_dev.max(
                num.convergence_order
                    .map_or(f64::INFINITY, |o| (o - 2.0).abs()),
            );
        }
        Ok(())
    })();
    match fd {
        Ok(()) => {
            checks.push(Ok(check(
                "shape_finite_difference",
                fd_err,
                1e-5,
                json!({ "step": 1e-4 }),
            )));
            checks.push(Ok(check(
                "shape_fd_order",
                order_dev,
                0.5,
                json!({ "orders": orders }),
            )));
            checks.push(Ok(check("shape_algebraic", alg_err, tol, Value::Null)));
        }
        Err(e) => checks.push(Err(("shape_finite_difference", e.into()))),
    }

    match &datum {
        Ok(datum) if a.commuting() => {
            let t_dev = datum
                .blocks
                .iter()
                .map(|b| (b.t_origin - FRAC_PI_2).abs().min((b.t_origin - PI).abs()))
                .fold(0.0, f64::max);
            let c_dev = datum
                .blocks
                .iter()
                .map(|b| (1.0 / b.t.tan() - b.c).abs())
                .fold(0.0, f64::max);
            checks.push(Ok(check("general_t", t_dev, 1e-8, json!(datum))));
            checks.push(Ok(check("general_c", c_dev, 1e-10, Value::Null)));
        }
        Ok(datum) => {
            let res = datum
                .blocks
                .iter()
                .map(|b| b.residual)
                .fold(datum.zero_residual, f64::max);
            checks.push(Ok(check("general_blocks", res, tol, json!(datum))));
        }
        Err(e) => checks.push(Err((
            "general_t",
            CliError::new(CliErrorKind::Numeric, e.to_string()),
        ))),
    }

    let mut rel_worst: f64 = 0.0;
    let mut gram_worst: f64 = 0.0;
    let mut cocycle: f64 = 0.0;
    let mut pairs = 0;
    let mut gram_failures = Vec::new();
    let mut attempts = 0;
    while pairs < 20 && attempts < 2000 {
        attempts += 1;
        let p = sample_regular(&prof, &mut rng, 0.1)?;
        let dir = sample_dir(r, &mut rng);
        let q: Vec<f64> = p.iter().zip(&dir).map(|(x, d)| x + 0.1 * d).collect();
        let s: Vec<f64> = p.iter().zip(&dir).map(|(x, d)| x + 0.2 * d).collect();
        let (Ok(pq), Ok(qs), Ok(ps)) = (
            orbit::relative_density(&prof, &p, &q),
            orbit::relative_density(&prof, &q, &s),
            orbit::relative_density(&prof, &p, &s),
        ) else {
            continue;
        };
        let ratio = prof.eval(&q) / prof.eval(&p);
        rel_worst = rel_worst.max((pq - ratio).abs() / ratio);
        cocycle = cocycle.max((pq * qs - ps).abs() / ps.abs().max(1.0));
        match orbit::gram_density_ratio(a, &p, &q) {
            Ok(g) => gram_worst = gram_worst.max((g - ratio).abs() / ratio),
            Err(e) => gram_failures.push(e.to_string()),
        }
        pairs += 1;
    }
    if !gram_failures.is_empty() || pairs < 20 {
        gram_worst = f64::INFINITY;
    }
    checks.push(Ok(check(
        "density_relative",
        rel_worst,
        1e-9,
        json!({ "pairs": pairs }),
    )));
    checks.push(Ok(check(
        "density_gram",
        gram_worst,
        1e-6,
        json!({ "pairs": pairs, "failures": gram_failures }),
    )));
    checks.push(Ok(check("density_cocycle", cocycle, 1e-9, Value::Null)));
    checks.push(Ok(check(
        "weyl_invariance",
        integration::weyl_invariance_residual(a, &prof, 64, args.common.seed),
        tol,
        Value::Null,
    )));

    let lat = match integration::section_lattice(a, &prof) {
        Ok(l) => l,
        Err(e) => {
            checks.push(Err(("section_lattice", e.into())));
            return finish_verify(checks);
        }
    };
    let period = lat.period_residuals.iter().copied().fold(0.0, f64::max);
    checks.push(Ok(check(
        "lattice_periods",
        period,
        1e-8 * a.triad.n() as f64,
        json!({ "axis_periods": lat.axis_periods }),
    )));
    checks.push(Ok(check(
        "theta_periodicity",
        lat.theta_periodicity_residual,
        1e-9,
        Value::Null,
    )));

    let sphere = a.spec.name == "sphere-isotropy";
    let mut names: Vec<String> = ["trace1", "trace2", "trace3"].map(String::from).to_vec();
    if sphere {
        names.push("cos2".into());
    }
    let qcfg = quad_cfg(args.grid, tol)?;
    match run_integrals(a, &prof, &lat, &names, &qcfg, args.mc_n, args.common.seed) {
        Ok(res) => {
            let mut worst: f64 = 0.0;
            let mut rows = Vec::new();
            for ((name, q), m) in res.names.iter().zip(&res.quad).zip(&res.mc) {
                let agree = m.map(|m| agreement(q, &m));
                worst = worst.max(agree.unwrap_or(0.0));
                rows.push(json!({ "function": name, "quadrature": q, "monte_carlo": m, "agreement": agree }));
            }
            checks.push(Ok(check("integration_mc", worst, 1.0, json!(rows))));
            if sphere {
                let q = res.quad.last().expect("cos2 was requested").mean;
                let exact = 1.0 / a.triad.n() as f64;
                checks.push(Ok(check(
                    "sphere_cos2",
                    (q - exact).abs(),
                    1e-9,
                    json!({ "quadrature": q, "exact": exact }),
                )));
            }
        }
        Err(e) => checks.push(Err(("integration_mc", e))),
    }
    finish_verify(checks)
}

fn finish_verify(checks: Vec<Result<Check, (&'static str, CliError)>>) -> CmdResult {
    let mut table = Table::new(&["check", "value", "tol", "passed"]);
    let mut out = Vec::new();
    let mut all = true;
    for c in checks {
        match c {
            Ok(c) => {
                let ok = c.passed();
                all &= ok;
                table.push(vec![c.name.into(), c.value.into(), c.tol.into(), ok.into()]);
                out.push(json!({
                    "name": c.name, "value": c.value, "tol": c.tol, "passed": ok, "detail": c.detail,
                }));
            }
            Err((name, e)) => {
                all = false;
                table.push(vec![
                    name.into(),
                    Cell::Text(String::new()),
                    Cell::Text(String::new()),
                    false.into(),
                ]);
                out.push(json!({ "name": name, "passed": false, "error": e.to_string() }));
            }
        }
    }
    let result = json!({ "passed": all, "checks": out });
    Ok(Report {
        result,
        table,
        failed: !all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_read_like_linear_forms() {
        assert_eq!(root_label(&[1.0]), "w1");
        assert_eq!(root_label(&[2.0, 0.0]), "2w1");
        assert_eq!(root_label(&[1.0, -1.0]), "w1-w2");
        assert_eq!(root_label(&[-1.0, 2.0]), "-w1+2w2");
        assert_eq!(root_label(&[0.5]), "0.500000w1");
    }
}
