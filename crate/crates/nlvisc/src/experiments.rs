//! The six experiment kinds. Each writes `report.txt` plus its CSV artifacts
//! into the output directory and returns the list of property checks.

use crate::config::{Config, FieldSpec, Kind, Overrides, SideSpec};
use crate::error::CliError;
use crate::io::{self, fmt_f64, Report};
use nlvisc_core::moreau::{
    certify_semiconvex, certify_semiconvex_directional, inf_convolution, inf_convolution_brute, lipschitz_estimate,
    oscillation, shrunken_domain, sup_convolution, sup_convolution_brute, sup_norm_bound, MoreauParams,
};
use nlvisc_core::solver::{check_monotone, scheme_residual_for};
use nlvisc_core::viscosity::{
    check_key_inequality, doubling_maximize, jensen_sequence, largest_jet_radius, neumann_residual, sub_residual,
    BoxNormal, IndexBox, NeumannParams, Window,
};
use nlvisc_core::{
    comparison_experiment, convergence_study, discrete_jet, is_matrix_ordered, solve_dirichlet, Error, Grid,
    GridFunction, LevyQuadrature, Node, Side,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub clause: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub report: Report,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    fn check(&mut self, clause: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { clause: clause.into(), pass, detail: detail.into() });
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.pass)
    }

    pub fn passed(&self) -> bool {
        self.first_failure().is_none()
    }

    /// The failing clause as an error, if any.
    pub fn into_result(self) -> Result<Outcome, CliError> {
        match self.first_failure() {
            Some(c) => Err(CliError::check(c.clause.clone(), c.detail.clone())),
            None => Ok(self),
        }
    }
}

struct Ctx<'a> {
    cfg: &'a Config,
    out_dir: &'a Path,
    overrides: &'a Overrides,
    out: Outcome,
}

impl Ctx<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out_dir.join(name);
        self.out.files.push(p.clone());
        p
    }

    fn write_gf(&mut self, name: &str, u: &GridFunction) -> Result<(), CliError> {
        let p = self.path(name);
        io::write_grid_function(&p, u)
    }

    fn measure(&self) -> Result<LevyQuadrature, CliError> {
        self.cfg.measure()?.ok_or_else(|| CliError::config(&self.cfg.path, None, "missing [measure] section"))
    }

    fn grid_function(&self, spec: &FieldSpec, grid: &Grid, key: &str) -> Result<GridFunction, CliError> {
        self.cfg.grid_function(spec, grid, self.cfg.section_name(), key)
    }
}

/// Runs the configured experiment. Configuration problems are errors; failed
/// property checks are recorded in the outcome and the report.
pub fn run(cfg: &Config, out_dir: &Path, overrides: &Overrides) -> Result<Outcome, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut ctx = Ctx { cfg, out_dir, overrides, out: Outcome::default() };
    let r = &mut ctx.out.report;
    r.push("kind", cfg.raw.kind.name());
    if let Some(n) = &cfg.raw.name {
        r.push("name", n);
    }
    if let Some(s) = cfg.raw.seed {
        r.push("seed", s);
    }
    match cfg.raw.kind {
        Kind::Solve => solve(&mut ctx)?,
        Kind::Compare => compare(&mut ctx)?,
        Kind::MoreauVerify => moreau(&mut ctx)?,
        Kind::DoublingVerify => doubling(&mut ctx)?,
        Kind::NeumannResidual => neumann(&mut ctx)?,
        Kind::Convergence => convergence(&mut ctx)?,
    }
    let mut out = ctx.out;
    let failed = out.checks.iter().filter(|c| !c.pass).count();
    for c in &out.checks {
        let verdict = if c.pass { "pass" } else { "FAIL" };
        out.report.push(format!("check.{}", c.clause), format!("{verdict} ({})", c.detail));
    }
    out.report.push("checks", out.checks.len());
    out.report.push("failed", failed);
    out.report.push("status", if failed == 0 { "pass" } else { "fail" });
    let path = out_dir.join("report.txt");
    out.report.write(&path)?;
    out.files.push(path);
    Ok(out)
}

fn grid_lines(r: &mut Report, g: &Grid) {
    r.push("dim", g.dim());
    let b: Vec<String> = (0..g.dim()).map(|a| format!("[{}, {}]", fmt_f64(g.lo()[a]), fmt_f64(g.hi()[a]))).collect();
    r.push("bounds", b.join(" x "));
    r.num("h", g.h());
    r.num("halo", g.halo_radius());
    r.push("nodes", g.node_count());
    r.push("interior_nodes", g.interior_count());
}

/// Errors that are findings rather than configuration problems.
fn finding(e: &Error) -> bool {
    matches!(
        e,
        Error::NotConverged { .. } | Error::Jensen { .. } | Error::JetBound { .. } | Error::DataNotOrdered { .. }
    )
}

fn clause_of(e: &Error) -> String {
    match e {
        Error::NotConverged { .. } => "solver-converged".into(),
        Error::Jensen { m, .. } => format!("jensen-step-{m}"),
        Error::JetBound { .. } => "jet-bound".into(),
        Error::DataNotOrdered { .. } => "exterior-data-ordered".into(),
        _ => "error".into(),
    }
}

fn core_err(cfg: &Config, key: &str, e: Error) -> CliError {
    if finding(&e) {
        CliError::check(clause_of(&e), e)
    } else {
        cfg.err(cfg.section_name(), key, e)
    }
}

fn max_interior_residual(
    u: &GridFunction,
    ctx: &Ctx,
    q: &LevyQuadrature,
    scheme: nlvisc_core::SchemeVariant,
) -> Result<f64, CliError> {
    let f = ctx.cfg.fspec()?;
    let mut worst: f64 = 0.0;
    for n in u.grid().interior_nodes() {
        let r = scheme_residual_for(u, n, &f, q, scheme).map_err(|e| core_err(ctx.cfg, "g", e))?;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

fn solve(ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let sec = cfg.raw.solve.as_ref().expect("validated");
    let q = ctx.measure()?;
    let grid = cfg.grid(Some(&q))?;
    let f = cfg.fspec()?;
    let params = cfg.solve_params()?;
    let g = cfg.field(&sec.g, Some(&grid), "solve", "g")?;
    grid_lines(&mut ctx.out.report, &grid);
    let sol = match solve_dirichlet(&f, &|x| g(x), &q, &grid, &params) {
        Ok(s) => s,
        Err(e) if finding(&e) => {
            ctx.out.check(clause_of(&e), false, e.to_string());
            return Ok(());
        }
        Err(e) => return Err(core_err(cfg, "g", e)),
    };
    ctx.write_gf("solution.csv", &sol.u)?;
    let r = &mut ctx.out.report;
    r.push("iterations", sol.iterations);
    r.num("residual", sol.residual);
    r.push("monotone_scheme", check_monotone(&f, &q, &grid).map_or_else(|e| format!("no ({e})"), |_| "yes".into()));
    let certified = max_interior_residual(&sol.u, ctx, &q, params.scheme)?;
    ctx.out.report.num("certified_residual", certified);
    ctx.out.check(
        "residual-certified",
        certified <= params.stop_tol,
        format!("max |R| = {} vs stop_tol {}", fmt_f64(certified), fmt_f64(params.stop_tol)),
    );
    if let Some(exact) = &sec.exact {
        let ex = cfg.field(exact, Some(&grid), "solve", "exact")?;
        let err = grid
            .interior_nodes()
            .map(|n| (sol.u.get(n).unwrap_or(f64::NAN) - ex(&grid.coord(n))).abs())
            .fold(0.0, f64::max);
        ctx.out.report.num("error", err);
        if let Some(tol) = sec.error_tol {
            ctx.out.check("error-bound", err <= tol, format!("sup error {} vs {}", fmt_f64(err), fmt_f64(tol)));
        }
    }
    Ok(())
}

fn compare(ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let sec = cfg.raw.compare.as_ref().expect("validated");
    let q = ctx.measure()?;
    let grid = cfg.grid(Some(&q))?;
    let f = cfg.fspec()?;
    let params = cfg.solve_params()?;
    let tol = cfg.tolerances(ctx.overrides).check;
    let g1 = cfg.field(&sec.g1, Some(&grid), "compare", "g1")?;
    let g2 = cfg.field(&sec.g2, Some(&grid), "compare", "g2")?;
    grid_lines(&mut ctx.out.report, &grid);
    ctx.out.report.push("scheme", format!("{:?}", params.scheme));
    let rep = match comparison_experiment(&f, &q, &grid, &|x| g1(x), &|x| g2(x), &params, tol) {
        Ok(r) => r,
        Err(e) if finding(&e) => {
            ctx.out.check(clause_of(&e), false, e.to_string());
            return Ok(());
        }
        Err(e) => return Err(core_err(cfg, "g1", e)),
    };
    ctx.write_gf("u1.csv", &rep.u1)?;
    ctx.write_gf("u2.csv", &rep.u2)?;
    let r = &mut ctx.out.report;
    r.num("violation", rep.violation);
    r.push("worst_node", coords(&grid, rep.worst_node));
    r.push("iterations", format!("{} {}", rep.iterations[0], rep.iterations[1]));
    r.push("residuals", format!("{} {}", fmt_f64(rep.residuals[0]), fmt_f64(rep.residuals[1])));
    r.push("monotone_scheme", rep.monotonicity.clone().map_or("yes".into(), |m| format!("no ({m})")));
    ctx.out.check("comparison", rep.pass, format!("max(u1 - u2) = {} vs tol {}", fmt_f64(rep.violation), fmt_f64(tol)));
    Ok(())
}

fn coords(grid: &Grid, n: Node) -> String {
    grid.coord(n)[..grid.dim()].iter().map(|&c| fmt_f64(c)).collect::<Vec<_>>().join(" ")
}

fn bitwise_eq(a: &GridFunction, b: &GridFunction) -> bool {
    a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn moreau(ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let sec = cfg.raw.moreau.as_ref().expect("validated");
    let tol = cfg.tolerances(ctx.overrides);
    let q = cfg.measure()?;
    let grid = cfg.grid(q.as_ref())?;
    grid_lines(&mut ctx.out.report, &grid);
    let u = ctx.grid_function(&sec.u, &grid, "u")?;
    let v = sec.v.as_ref().map(|s| ctx.grid_function(s, &grid, "v")).transpose()?;
    let m = sec.m.unwrap_or_else(|| sup_norm_bound(&u, v.as_ref().unwrap_or(&u)));
    ctx.out.report.num("M", m);
    let residual_setup = match &sec.residual {
        Some(rc) => Some((rc, cfg.fspec()?, q.clone().expect("validated"))),
        None => None,
    };
    let mut curve = Vec::new();
    for (i, &r) in sec.r.iter().enumerate() {
        let params = MoreauParams::new(r, m).map_err(|e| cfg.err("moreau", "r", e))?;
        let tag = format!("r{i}");
        let ur = sup_convolution(&u, r).map_err(|e| cfg.err("moreau", "r", e))?;
        ctx.write_gf(&format!("sup_{tag}.csv"), &ur)?;
        ctx.out.report.num(format!("{tag}.r"), r);
        let neg = u.map(|x| -x).map_err(|e| cfg.err("moreau", "u", e))?;
        let dual = inf_convolution(&neg, r).and_then(|w| w.map(|x| -x)).map_err(|e| cfg.err("moreau", "r", e))?;
        ctx.out.check(format!("{tag}.duality"), bitwise_eq(&dual, &ur), "sup(u) = -inf(-u) bitwise");
        ctx.out.check(
            format!("{tag}.above-input"),
            ur.values().iter().zip(u.values()).all(|(a, b)| a >= b),
            "u^r >= u nodewise",
        );
        if sec.brute_check {
            let brute = sup_convolution_brute(&u, r).map_err(|e| cfg.err("moreau", "r", e))?;
            ctx.out.check(
                format!("{tag}.fast-equals-brute"),
                bitwise_eq(&brute, &ur),
                "separable pass vs exhaustive maximum",
            );
        }
        let c = 1.0 / (r * r);
        if sec.certify {
            let eig = certify_semiconvex(&ur, c).map_err(|e| cfg.err("moreau", "u", e))?;
            ctx.out.report.num(format!("{tag}.semiconvex_worst"), eig.worst_violation);
            if grid.dim() == 1 {
                ctx.out.check(
                    format!("{tag}.semiconvex"),
                    eig.passes(tol.check),
                    format!("min eigenvalue of D2 u^r + I/r^2: {}", fmt_f64(eig.worst_violation)),
                );
            } else {
                let dir = certify_semiconvex_directional(&ur, c).map_err(|e| cfg.err("moreau", "u", e))?;
                ctx.out.report.num(format!("{tag}.semiconvex_directional_worst"), dir.worst_violation);
                ctx.out.check(
                    format!("{tag}.semiconvex"),
                    dir.passes(tol.check),
                    format!(
                        "min directional second difference of u^r + |x|^2/(2r^2): {}",
                        fmt_f64(dir.worst_violation)
                    ),
                );
            }
            let lip = lipschitz_estimate(&ur);
            let bound = (2.0 * oscillation(&u)).sqrt() / r + grid.h() / (2.0 * r * r);
            ctx.out.report.num(format!("{tag}.lipschitz"), lip);
            ctx.out.check(
                format!("{tag}.lipschitz"),
                lip <= bound * (1.0 + 1e-12),
                format!("{} vs bound {}", fmt_f64(lip), fmt_f64(bound)),
            );
        }
        if let Some(v) = &v {
            let vr = inf_convolution(v, r).map_err(|e| cfg.err("moreau", "r", e))?;
            ctx.write_gf(&format!("inf_{tag}.csv"), &vr)?;
            ctx.out.check(
                format!("{tag}.below-input"),
                vr.values().iter().zip(v.values()).all(|(a, b)| a <= b),
                "v_r <= v nodewise",
            );
            if sec.brute_check {
                let brute = inf_convolution_brute(v, r).map_err(|e| cfg.err("moreau", "r", e))?;
                ctx.out.check(
                    format!("{tag}.inf-fast-equals-brute"),
                    bitwise_eq(&brute, &vr),
                    "separable pass vs exhaustive minimum",
                );
            }
        }
        if let Some(cf) = &sec.closed_form {
            let expect = cfg.field(&cf.field, Some(&grid), "moreau", "closed_form")?;
            let region: Vec<(f64, f64)> = cf.region.iter().map(|b| (b[0], b[1])).collect();
            let inside =
                |x: &[f64; 2]| region.iter().enumerate().all(|(a, &(lo, hi))| x[a] >= lo - 1e-12 && x[a] <= hi + 1e-12);
            let err = grid
                .nodes()
                .filter(|&n| inside(&grid.coord(n)))
                .map(|n| (ur.get(n).unwrap_or(f64::NAN) - expect(&grid.coord(n))).abs())
                .fold(0.0, f64::max);
            ctx.out.report.num(format!("{tag}.closed_form_error"), err);
            ctx.out.check(
                format!("{tag}.closed-form"),
                err <= cf.tol,
                format!("sup error {} vs {}", fmt_f64(err), fmt_f64(cf.tol)),
            );
        }
        if let Some((rc, f, q)) = &residual_setup {
            let nodes = shrunken_domain(&grid, &params);
            let nu = residual_curve_point(&ur, &nodes, f, q, rc.eps, rc.delta, &tol);
            match nu {
                Ok((nu, min_eps)) => {
                    ctx.out.report.num(format!("{tag}.nu"), nu);
                    ctx.out.report.push(format!("{tag}.omega_r_nodes"), nodes.len());
                    curve.push(vec![r, nu, nodes.len() as f64, min_eps]);
                }
                Err(e) => ctx.out.check(format!("{tag}.residual"), false, e),
            }
        }
    }
    if let Some((rc, _, _)) = &residual_setup {
        let p = ctx.path("nu_curve.csv");
        io::write_table(&p, &["r", "nu", "omega_r_nodes", "min_eps"], &curve)?;
        if rc.require_decreasing {
            let mut sorted = curve.clone();
            sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
            let ok = sorted.len() == sec.r.len() && sorted.windows(2).all(|w| w[0][1] < w[1][1]);
            let shown: Vec<String> =
                sorted.iter().map(|row| format!("nu({}) = {}", fmt_f64(row[0]), fmt_f64(row[1]))).collect();
            ctx.out.check("nu-decreasing", ok, shown.join(", "));
        }
    }
    Ok(())
}

/// `ν(r) = max_{Ω_r} sub_residual(u^r)`, with the split radius at each node
/// the largest lattice radius `≤ eps` where the jet bound holds.
pub fn residual_curve_point(
    ur: &GridFunction,
    nodes: &[Node],
    f: &nlvisc_core::FSpec,
    q: &LevyQuadrature,
    eps: f64,
    delta: f64,
    tol: &nlvisc_core::Tolerances,
) -> Result<(f64, f64), String> {
    if nodes.is_empty() {
        return Err("shrunken domain is empty".into());
    }
    let mut nu = f64::NEG_INFINITY;
    let mut min_eps = f64::INFINITY;
    for &n in nodes {
        let jet = discrete_jet(ur, n).map_err(|e| e.to_string())?;
        let e = largest_jet_radius(ur, n, &jet, delta, Side::Sub, eps, tol.jet_bound);
        if !(e > 0.0) {
            return Err(format!("no jet radius at {:?}", ur.grid().coord(n)));
        }
        min_eps = min_eps.min(e);
        let res = sub_residual(ur, n, &jet, f, q, e, delta, tol).map_err(|e| e.to_string())?;
        nu = nu.max(res);
    }
    Ok((nu, min_eps))
}

fn window(cfg: &Config, grid: &Grid) -> Result<Window, CliError> {
    let sec = cfg.raw.doubling.as_ref().expect("validated");
    match &sec.window {
        None => Ok(Window::full(grid)),
        Some(w) => {
            let conv = |b: &Vec<[f64; 2]>| -> Vec<(f64, f64)> { b.iter().map(|p| (p[0], p[1])).collect() };
            let x = IndexBox::from_coords(grid, &conv(&w.x)).map_err(|e| cfg.err("doubling", "window", e))?;
            let y = IndexBox::from_coords(grid, &conv(&w.y)).map_err(|e| cfg.err("doubling", "window", e))?;
            Ok(Window { x, y })
        }
    }
}

fn doubling(ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let sec = cfg.raw.doubling.as_ref().expect("validated");
    let tol = cfg.tolerances(ctx.overrides);
    let grid = cfg.grid(None)?;
    grid_lines(&mut ctx.out.report, &grid);
    let mut u = ctx.grid_function(&sec.u, &grid, "u")?;
    let mut v = ctx.grid_function(&sec.v, &grid, "v")?;
    if let Some(r) = sec.regularize {
        u = sup_convolution(&u, r).map_err(|e| cfg.err("doubling", "regularize", e))?;
        v = inf_convolution(&v, r).map_err(|e| cfg.err("doubling", "regularize", e))?;
        ctx.out.report.num("regularize", r);
    }
    let w = window(cfg, &grid)?;
    let pt = doubling_maximize(&u, &v, sec.alpha, &w).map_err(|e| cfg.err("doubling", "alpha", e))?;
    let r = &mut ctx.out.report;
    r.num("alpha", sec.alpha);
    r.push("x_bar", coords(&grid, pt.x_bar));
    r.push("y_bar", coords(&grid, pt.y_bar));
    r.num("phi_max", pt.phi_max);
    r.num("boundary_max", pt.boundary_max);
    r.num("mu", pt.mu);
    if let Some(expect) = sec.expect_mu {
        let mt = sec.mu_tol.unwrap_or(1e-9);
        ctx.out.check(
            "mu-expected",
            (pt.mu - expect).abs() <= mt,
            format!("mu = {} vs {} ± {}", fmt_f64(pt.mu), fmt_f64(expect), fmt_f64(mt)),
        );
    }
    if sec.count == 0 {
        return Ok(());
    }
    ctx.out.check("mu-positive", pt.mu > 0.0, format!("mu = {}", fmt_f64(pt.mu)));
    if pt.mu <= 0.0 {
        return Ok(());
    }
    let seed = cfg.raw.seed.expect("validated");
    let jc = cfg.jensen_config(sec, tol);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = match jensen_sequence(&u, &v, &pt, &jc, &mut rng) {
        Ok(s) => s,
        Err(e) if finding(&e) => {
            ctx.out.check(clause_of(&e), false, e.to_string());
            return Ok(());
        }
        Err(e) => return Err(cfg.err("doubling", "count", e)),
    };
    let p = ctx.path("perturbed_maxima.csv");
    io::write_perturbed_maxima(&p, &grid, &seq)?;
    let mut ordered = true;
    let mut worst_key = f64::INFINITY;
    let mut key_ok = true;
    let mut grad_ok = true;
    for pm in &seq {
        ordered &= is_matrix_ordered(&pm.x_mat, &pm.y_mat, tol.matrix_order).unwrap_or(false);
        let key = check_key_inequality(&u, &v, pm, &w, tol.key_inequality).map_err(|e| cfg.err("doubling", "u", e))?;
        worst_key = worst_key.min(key.worst_margin);
        key_ok &= key.pass;
        grad_ok &= pm.gradient_gap <= pm.gradient_tolerance;
    }
    let last = seq.last().expect("count > 0");
    let r = &mut ctx.out.report;
    r.push("steps", seq.len());
    r.num("final_gradient_gap", last.gradient_gap);
    r.num("final_distance_to_limit", last.distance_to_limit);
    r.num("worst_key_margin", worst_key);
    r.push("draws", seq.iter().map(|p| p.draws.to_string()).collect::<Vec<_>>().join(" "));
    ctx.out.check("matrix-order", ordered, format!("X_m <= Y_m at tol {}", fmt_f64(tol.matrix_order)));
    ctx.out.check(
        "key-inequality",
        key_ok,
        format!("worst margin {} vs -{}", fmt_f64(worst_key), fmt_f64(tol.key_inequality)),
    );
    ctx.out.check("gradient-limit", grad_ok, format!("final |p_m - p| = {}", fmt_f64(last.gradient_gap)));
    Ok(())
}

fn neumann(ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let sec = cfg.raw.neumann.as_ref().expect("validated");
    let q = ctx.measure()?;
    let grid = cfg.grid(Some(&q))?;
    if grid.halo_cells() < 1 {
        return Err(cfg.err("grid", "halo", "neumann residuals need a halo of at least h for jets on the boundary"));
    }
    grid_lines(&mut ctx.out.report, &grid);
    let f = cfg.fspec()?;
    let w = ctx.grid_function(&sec.w, &grid, "w")?;
    let side = match sec.side {
        SideSpec::Sub => Side::Sub,
        SideSpec::Super => Side::Super,
    };
    let params = NeumannParams { rho: sec.rho, r: sec.r, m: sec.m };
    let normals = BoxNormal::new(&grid);
    let mut rows = Vec::new();
    let mut extreme = match side {
        Side::Sub => f64::NEG_INFINITY,
        Side::Super => f64::INFINITY,
    };
    let mut skipped = 0;
    let mut boundary_active = 0;
    for n in grid.nodes().filter(|&n| grid.in_closure(n)) {
        let jet = discrete_jet(&w, n).map_err(|e| cfg.err("neumann", "w", e))?;
        let res =
            neumann_residual(&w, n, &jet, &f, &q, &normals, &params, side).map_err(|e| cfg.err("neumann", "rho", e))?;
        extreme = match side {
            Side::Sub => extreme.max(res.value),
            Side::Super => extreme.min(res.value),
        };
        skipped += res.skipped_atoms;
        if res.value == res.boundary_branch && res.boundary_branch.is_finite() {
            boundary_active += 1;
        }
        let x = grid.coord(n);
        let mut row: Vec<f64> = x[..grid.dim()].to_vec();
        row.extend([res.value, res.nonlocal_branch, res.boundary_branch, res.skipped_atoms as f64]);
        rows.push(row);
    }
    let mut header: Vec<String> = (1..=grid.dim()).map(|i| format!("x{i}")).collect();
    header.extend(["value", "nonlocal_branch", "boundary_branch", "skipped_atoms"].map(String::from));
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let p = ctx.path("neumann.csv");
    io::write_table(&p, &hdr, &rows)?;
    let r = &mut ctx.out.report;
    r.push("side", if side == Side::Sub { "sub" } else { "super" });
    r.num("rho", sec.rho);
    r.num("reach", (2.0 * sec.m).sqrt() * sec.r);
    r.push("evaluated_nodes", rows.len());
    r.push("boundary_branch_active", boundary_active);
    r.push("skipped_atoms_total", skipped);
    r.num(if side == Side::Sub { "max_residual" } else { "min_residual" }, extreme);
    if let Some(b) = sec.bound {
        let (ok, what) = match side {
            Side::Sub => (extreme <= b, format!("max {} <= {}", fmt_f64(extreme), fmt_f64(b))),
            Side::Super => (extreme >= -b, format!("min {} >= -{}", fmt_f64(extreme), fmt_f64(b))),
        };
        ctx.out.check("residual-bound", ok, what);
    }
    Ok(())
}

fn convergence(ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let sec = cfg.raw.convergence.as_ref().expect("validated");
    let q = ctx.measure()?;
    let template = cfg.fspec()?;
    let params = cfg.solve_params()?;
    let u_star = cfg.smooth(&sec.u_star, "convergence", "u_star")?;
    let bounds = cfg.bounds();
    let table = match convergence_study(&u_star, &template, &q, &bounds, &sec.hs, &params) {
        Ok(t) => t,
        Err(e) if finding(&e) => {
            ctx.out.check(clause_of(&e), false, e.to_string());
            return Ok(());
        }
        Err(e) => return Err(cfg.err("convergence", "hs", e)),
    };
    let p = ctx.path("convergence.csv");
    io::write_convergence(&p, &table)?;
    let r = &mut ctx.out.report;
    r.push("rows", table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        r.push(
            format!("row{i}"),
            format!(
                "h = {}, error = {}, order = {}, iterations = {}",
                fmt_f64(row.h),
                fmt_f64(row.error),
                row.order.map_or("-".into(), fmt_f64),
                row.iterations
            ),
        );
    }
    if let Some(min) = sec.min_order {
        let last = table.last_order();
        ctx.out.check(
            "observed-order",
            last.is_some_and(|o| o >= min),
            format!("last order {} vs {}", last.map_or("-".into(), fmt_f64), fmt_f64(min)),
        );
    }
    if let Some(max) = sec.max_error {
        let worst = table.rows.iter().map(|r| r.error).fold(0.0, f64::max);
        ctx.out.check("error-bound", worst <= max, format!("worst error {} vs {}", fmt_f64(worst), fmt_f64(max)));
    }
    Ok(())
}

/// Text summary of a configuration; no computation beyond building the
/// measure.
pub fn describe(cfg: &Config, overrides: &Overrides) -> Result<String, CliError> {
    let mut r = Report::new();
    r.push("kind", cfg.raw.kind.name());
    if let Some(n) = &cfg.raw.name {
        r.push("name", n);
    }
    if let Some(s) = cfg.raw.seed {
        r.push("seed", s);
    }
    let q = cfg.measure()?;
    if cfg.raw.kind == Kind::Convergence {
        r.push("dim", cfg.dim());
        let hs: Vec<String> = cfg.raw.convergence.as_ref().expect("validated").hs.iter().map(|&h| fmt_f64(h)).collect();
        r.push("spacings", hs.join(" "));
    } else {
        grid_lines(&mut r, &cfg.grid(q.as_ref())?);
    }
    if let Some(q) = &q {
        r.push("atoms", q.len());
        r.num("s2", q.second_moment_small());
        r.num("tmass", q.tail_mass());
        r.num("total_mass", q.total_mass());
        r.num("max_jump", q.max_jump());
        r.num("truncated_s2", q.truncated_second_moment());
        for (i, a) in q.atoms().iter().enumerate() {
            let z: Vec<String> = a.z[..q.dim()].iter().map(|&c| fmt_f64(c)).collect();
            r.push(
                format!("atom{i}"),
                format!(
                    "z = {}, weight = {}, {}",
                    z.join(" "),
                    fmt_f64(a.weight),
                    if a.small { "small" } else { "tail" }
                ),
            );
        }
    }
    if cfg.raw.equation.is_some() {
        let f = cfg.fspec()?;
        r.num("lambda", f.lambda());
        r.push("hamiltonian", format!("{:?}", f.hamiltonian()));
        if let Some(eq) = &cfg.raw.equation {
            r.push("diffusion", format!("{:?}", eq.diffusion));
            r.push("source", format!("{:?}", eq.source));
        }
    }
    let t = cfg.tolerances(overrides);
    r.push(
        "tolerances",
        format!(
            "jet_bound {}, matrix_order {}, key_inequality {}, check {}, delta0 {}",
            fmt_f64(t.jet_bound),
            fmt_f64(t.matrix_order),
            fmt_f64(t.key_inequality),
            fmt_f64(t.check),
            fmt_f64(t.delta0)
        ),
    );
    r.push("planned_checks", planned_checks(cfg).join(", "));
    Ok(r.render())
}

fn planned_checks(cfg: &Config) -> Vec<String> {
    let raw = &cfg.raw;
    let mut v: Vec<String> = Vec::new();
    match raw.kind {
        Kind::Solve => {
            v.push("residual-certified".into());
            if raw.solve.as_ref().is_some_and(|s| s.error_tol.is_some()) {
                v.push("error-bound".into());
            }
        }
        Kind::Compare => v.push("comparison".into()),
        Kind::MoreauVerify => {
            let m = raw.moreau.as_ref().expect("validated");
            for i in 0..m.r.len() {
                v.push(format!("r{i}.duality"));
                v.push(format!("r{i}.above-input"));
                if m.certify {
                    v.push(format!("r{i}.semiconvex"));
                    v.push(format!("r{i}.lipschitz"));
                }
                if m.brute_check {
                    v.push(format!("r{i}.fast-equals-brute"));
                }
                if m.closed_form.is_some() {
                    v.push(format!("r{i}.closed-form"));
                }
            }
            if m.residual.as_ref().is_some_and(|r| r.require_decreasing) {
                v.push("nu-decreasing".into());
            }
        }
        Kind::DoublingVerify => {
            let d = raw.doubling.as_ref().expect("validated");
            if d.expect_mu.is_some() {
                v.push("mu-expected".into());
            }
            if d.count > 0 {
                v.extend(
                    ["mu-positive", "jensen-steps", "matrix-order", "key-inequality", "gradient-limit"]
                        .map(String::from),
                );
            }
        }
        Kind::NeumannResidual => {
            if raw.neumann.as_ref().is_some_and(|n| n.bound.is_some()) {
                v.push("residual-bound".into());
            }
        }
        Kind::Convergence => {
            let c = raw.convergence.as_ref().expect("validated");
            if c.min_order.is_some() {
                v.push("observed-order".into());
            }
            if c.max_error.is_some() {
                v.push("error-bound".into());
            }
        }
    }
    if v.is_empty() {
        v.push("none".into());
    }
    v
}
