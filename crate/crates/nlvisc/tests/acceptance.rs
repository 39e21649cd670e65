//! Acceptance criteria 1-8. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line.

use nlvisc::experiments::residual_curve_point;
use nlvisc_core::moreau::{
    certify_semiconvex, certify_semiconvex_directional, inf_convolution, shrunken_domain, sup_convolution,
    sup_norm_bound, MoreauParams,
};
use nlvisc_core::solver::manufactured_source;
use nlvisc_core::viscosity::{check_key_inequality, doubling_maximize, jensen_sequence, JensenConfig, Window};
use nlvisc_core::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

/// Grid function with `base(x)` plus independent noise in `[-amp, amp)` per node.
fn noisy(grid: Grid, rng: &mut ChaCha8Rng, amp: f64, base: impl Fn(&Point) -> f64) -> GridFunction {
    let values = grid.nodes().map(|n| base(&grid.coord(n)) + amp * uniform(rng, -1.0, 1.0)).collect();
    GridFunction::from_values(grid, values).unwrap()
}

fn bits_equal(a: &GridFunction, b: &GridFunction) -> bool {
    a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn criterion_1() -> Outcome {
    let grid = Grid::new(&[(-3.0, 3.0)], 0.01, 0.0).map_err(|e| e.to_string())?;
    let r = 1.0;
    let u = GridFunction::from_fn(grid, |x| -x[0] * x[0] / 2.0).unwrap();
    let ur = sup_convolution(&u, r).unwrap();
    let err = grid
        .nodes()
        .filter(|&n| grid.coord(n)[0].abs() <= 1.5)
        .map(|n| (ur.get(n).unwrap() + grid.coord(n)[0].powi(2) / (2.0 * (1.0 + r * r))).abs())
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rough = noisy(grid, &mut rng, 1.0, |_| 0.0);
    let mut dual = true;
    for v in [&u, &rough] {
        for r in [1.0, 0.3, 0.05] {
            let lhs = inf_convolution(v, r).unwrap();
            let rhs = sup_convolution(&v.map(|x| -x).unwrap(), r).unwrap().map(|x| -x).unwrap();
            dual &= bits_equal(&lhs, &rhs);
        }
    }
    ensure(err <= 5e-3 && dual, format!("middle-half sup error {err:.3e} (<= 5e-3), duality bitwise: {dual}"))
}

fn rough_1d(rng: &mut ChaCha8Rng, grid: Grid, k: usize) -> GridFunction {
    let (a, f) = (uniform(rng, -1.0, 1.0), uniform(rng, 1.0, 12.0));
    let amp = [0.0, 0.3, 1.0][k % 3];
    noisy(grid, rng, amp / 2.0, |x| a * (f * x[0]).sin() / 2.0)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g1 = Grid::new(&[(-1.0, 1.0)], 0.01, 0.0).unwrap();
    let g2 = Grid::new(&[(-1.0, 1.0), (-1.0, 1.0)], 0.05, 0.0).unwrap();
    let (mut runs, mut fails, mut worst) = (0, 0, f64::INFINITY);
    for k in 0..24 {
        let u = rough_1d(&mut rng, g1, k);
        for r in [0.5, 0.2, 0.1] {
            let rep = certify_semiconvex(&sup_convolution(&u, r).unwrap(), 1.0 / (r * r)).unwrap();
            runs += 1;
            worst = worst.min(rep.worst_violation);
            fails += usize::from(!rep.passes(1e-8));
        }
    }
    let (mut runs2, mut fails2) = (0, 0);
    for _ in 0..8 {
        let u = noisy(g2, &mut rng, 1.0, |_| 0.0);
        for r in [0.5, 0.2, 0.1] {
            let rep = certify_semiconvex_directional(&sup_convolution(&u, r).unwrap(), 1.0 / (r * r)).unwrap();
            runs2 += 1;
            fails2 += usize::from(!rep.passes(1e-8));
        }
    }
    ensure(
        fails == 0 && fails2 == 0,
        format!(
            "1D eigenvalue certificate {}/{runs} pass (worst {worst:.3e}), 2D directional {}/{runs2} pass",
            runs - fails,
            runs2 - fails2
        ),
    )
}

fn criterion_3() -> Outcome {
    let q = LevyQuadrature::from_atoms(
        1,
        &[([0.05, 0.0], 20.0), ([-0.05, 0.0], 20.0), ([0.3, 0.0], 2.0), ([-0.3, 0.0], 2.0), ([1.2, 0.0], 0.3)],
    )
    .unwrap();
    let grid = Grid::new(&[(-1.0, 1.0)], 0.005, 1.2).unwrap();
    let u_star = ModelField::Sine { amp: 0.5, freq: 2.0 };
    let template = FSpec::new(1, 1.0).unwrap().with_diffusion(SymMat::scalar(1, 0.1)).unwrap();
    let (t, qq) = (template.clone(), q.clone());
    let f = template.with_source(move |x| manufactured_source(&u_star, &t, &qq, x));
    let u = GridFunction::from_fn(grid, |x| u_star.value(x)).unwrap();
    let m = sup_norm_bound(&u, &u);
    let tol = Tolerances::default();
    let mut nu = Vec::new();
    for r in [0.2, 0.1, 0.05] {
        let ur = sup_convolution(&u, r).unwrap();
        let nodes = shrunken_domain(&grid, &MoreauParams::new(r, m).unwrap());
        let (v, _) = residual_curve_point(&ur, &nodes, &f, &q, 0.5, 0.0, &tol)?;
        // every residual is bounded by the recorded maximum
        for &n in &nodes {
            let jet = discrete_jet(&ur, n).unwrap();
            let e = nlvisc_core::viscosity::largest_jet_radius(&ur, n, &jet, 0.0, Side::Sub, 0.5, tol.jet_bound);
            let res = nlvisc_core::viscosity::sub_residual(&ur, n, &jet, &f, &q, e, 0.0, &tol).unwrap();
            if res > v {
                return Err(format!("r = {r}: residual {res} above nu {v}"));
            }
        }
        nu.push(v);
    }
    ensure(
        nu[2] < nu[1] && nu[1] < nu[0],
        format!("nu(0.2) = {:.4e}, nu(0.1) = {:.4e}, nu(0.05) = {:.4e}", nu[0], nu[1], nu[2]),
    )
}

fn criterion_4() -> Outcome {
    let grid = Grid::new(&[(-1.0, 1.0)], 0.05, 0.0).unwrap();
    let u = GridFunction::from_fn(grid, |x| 1.0 - x[0] * x[0]).unwrap();
    let v = GridFunction::from_fn(grid, |x| x[0] * x[0]).unwrap();
    let alpha = 1.0;
    let window = Window::full(&grid);
    let pt = doubling_maximize(&u, &v, alpha, &window).map_err(|e| e.to_string())?;
    if (pt.mu - 1.5).abs() > 1e-9 {
        return Err(format!("mu = {}", pt.mu));
    }
    let cfg = JensenConfig { count: 10, ..Default::default() };
    let seq = jensen_sequence(&u, &v, &pt, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).map_err(|e| e.to_string())?;
    let mut worst_margin = f64::INFINITY;
    for pm in &seq {
        if !is_matrix_ordered(&pm.x_mat, &pm.y_mat, 1e-9).unwrap() {
            return Err(format!("X_m > Y_m at m = {}", pm.m));
        }
        let key = check_key_inequality(&u, &v, pm, &window, 1e-8).unwrap();
        worst_margin = worst_margin.min(key.worst_margin);
        if key.worst_margin < -1e-8 {
            return Err(format!("key margin {} at m = {}", key.worst_margin, pm.m));
        }
    }
    let last = seq.last().ok_or("empty sequence")?;
    let target = 2.0 * alpha * (grid.coord(last.x_m)[0] - grid.coord(last.y_m)[0]);
    let gap = (last.p_m[0] - target).abs().max((last.p_prime_m[0] - target).abs());
    ensure(
        seq.len() == 10 && last.m == 10 && gap <= 1e-6,
        format!(
            "mu = {}, {} witnesses ordered, worst key margin {worst_margin:.3e}, |p - 2a(x - y)| at m = 10: {gap:.3e}",
            pt.mu,
            seq.len()
        ),
    )
}

fn criterion_5() -> Outcome {
    let grid = Grid::new(&[(-1.0, 1.0), (-1.0, 1.0)], 0.05, 2.0).unwrap();
    let small = LevyQuadrature::from_atoms(
        2,
        &[([0.37, -0.21], 1.3), ([-0.5, 0.5], 0.7), ([0.013, 0.9], 2.0), ([-0.61, -0.044], 0.4)],
    )
    .unwrap();
    let p = [3.0, -1.5];
    let affine = GridFunction::from_fn(grid, |x| 1.0 + p[0] * x[0] + p[1] * x[1]).unwrap();
    let mut aff = 0.0f64;
    for n in grid.interior_nodes() {
        aff = aff.max(eval_nonlocal(&affine, n, &p, &small).unwrap().abs());
    }
    let aligned = LevyQuadrature::from_atoms(2, &[([0.1, 0.0], 3.0), ([-0.25, 0.5], 1.0), ([0.6, -0.3], 0.5)]).unwrap();
    let quad = GridFunction::from_fn(grid, |x| (x[0] * x[0] + x[1] * x[1]) / 2.0).unwrap();
    let mut qerr = 0.0f64;
    for n in grid.interior_nodes() {
        let x = grid.coord(n);
        qerr = qerr.max((eval_nonlocal(&quad, n, &x, &aligned).unwrap() - aligned.second_moment_small() / 2.0).abs());
    }
    let z0 = [1.25, -0.5];
    let tail = LevyQuadrature::from_atoms(2, &[(z0, 1.0)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rough = noisy(grid, &mut rng, 1.0, |_| 0.0);
    let mut tail_exact = true;
    let mut split_exact = true;
    let shift = [(z0[0] / grid.h()).round() as i64, (z0[1] / grid.h()).round() as i64];
    for n in grid.interior_nodes() {
        let direct = rough.get(n.offset(shift)).unwrap() - rough.get(n).unwrap();
        tail_exact &= eval_nonlocal(&rough, n, &p, &tail).unwrap().to_bits() == direct.to_bits();
        let jet = discrete_jet(&rough, n).unwrap();
        for q in [&small, &aligned] {
            let full = eval_nonlocal(&rough, n, &jet.p, q).unwrap();
            for side in [Side::Sub, Side::Super] {
                let split = eval_nonlocal_split(&rough, n, &jet, 0.1, 0.01, q, side).unwrap();
                split_exact &= split.to_bits() == full.to_bits();
            }
        }
    }
    ensure(
        aff <= 1e-12 && qerr <= 1e-10 && tail_exact && split_exact,
        format!("affine {aff:.2e}, quadratic {qerr:.2e}, tail atom exact: {tail_exact}, split = direct bitwise: {split_exact}"),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let q =
        LevyQuadrature::from_atoms(1, &[([0.2, 0.0], 1.0), ([-0.2, 0.0], 1.0), ([-0.5, 0.0], 0.5), ([1.2, 0.0], 0.5)])
            .unwrap();
    let template = FSpec::new(1, 1.0).unwrap().with_diffusion(SymMat::scalar(1, 0.5)).unwrap();
    let params = SolveParams::default();
    let grid = Grid::new(&[(-1.0, 1.0)], 0.05, q.max_jump()).unwrap();
    let u_star = ModelField::Quadratic { c0: 0.0, linear: [0.0; 2], quad: [1.0, 0.0] };
    let (t, qq) = (template.clone(), q.clone());
    let f = template.clone().with_source(move |x| manufactured_source(&u_star, &t, &qq, x));
    let sol = solve_dirichlet(&f, &|x| x[0] * x[0], &q, &grid, &params).map_err(|e| e.to_string())?;
    let err =
        grid.interior_nodes().map(|n| (sol.u.get(n).unwrap() - grid.coord(n)[0].powi(2)).abs()).fold(0.0, f64::max);
    let smooth =
        nlvisc::config::FieldSum(vec![ModelField::Sine { amp: 0.5, freq: 3.0 }, ModelField::Quartic { coef: 0.5 }]);
    let table =
        convergence_study(&smooth, &template, &q, &[(-1.0, 1.0)], &[0.02, 0.01], &params).map_err(|e| e.to_string())?;
    let order = table.last_order().unwrap_or(f64::NAN);
    let secs = start.elapsed().as_secs_f64();
    ensure(
        err <= 1e-8 && order >= 1.9 && secs < 60.0,
        format!(
            "x^2 error {err:.2e}, errors {:.3e} -> {:.3e}, order {order:.4}, {secs:.1} s",
            table.rows[0].error, table.rows[1].error
        ),
    )
}

struct Triple {
    f: FSpec,
    q: LevyQuadrature,
    grid: Grid,
    lift: f64,
    slope: f64,
}

fn random_triple(rng: &mut ChaCha8Rng, k: usize) -> Triple {
    let two_d = k % 5 == 4;
    let dim = if two_d { 2 } else { 1 };
    let lambda = uniform(rng, 0.5, 3.0);
    let a = uniform(rng, 0.05, 0.4);
    let h = if two_d { 0.1 } else { 0.05 };
    let q = if k.is_multiple_of(2) {
        let mut atoms = Vec::new();
        for _ in 0..1 + k % 3 {
            let z = [uniform(rng, 0.1, 1.4), if two_d { uniform(rng, -0.5, 0.5) } else { 0.0 }];
            let w = uniform(rng, 0.1, 1.5);
            atoms.push((z, w));
            atoms.push(([-z[0], -z[1]], w));
        }
        LevyQuadrature::from_atoms(dim, &atoms).unwrap()
    } else {
        let alpha = uniform(rng, 0.3, 1.7);
        let c = uniform(rng, 0.05, 0.5);
        let r_max = uniform(rng, 0.5, 1.5);
        let density = move |r: f64| c / r.powf(dim as f64 + alpha);
        let spec = RadialSpec { dim, density: &density, r_min: 0.1, r_max, radial_nodes: 3, angular_sectors: 8 };
        build_quadrature(&MeasureSpec::Radial(spec)).unwrap()
    };
    let eik = uniform(rng, 0.0, 1.0);
    let amp = uniform(rng, -1.0, 1.0);
    let f = FSpec::new(dim, lambda)
        .unwrap()
        .with_diffusion(SymMat::scalar(dim, a))
        .unwrap()
        .with_hamiltonian(Hamiltonian::Eikonal(eik))
        .with_source(move |x| amp * (3.0 * x[0]).sin() + x[1]);
    let bounds = vec![(0.0, 1.0); dim];
    let grid = Grid::new(&bounds, h, q.max_jump()).unwrap();
    Triple { f, q, grid, lift: uniform(rng, 0.1, 1.0), slope: uniform(rng, -1.0, 1.0) }
}

fn comparison_suite(scheme: SchemeVariant) -> Result<(usize, usize, usize, f64), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = SolveParams { scheme, ..Default::default() };
    let (mut pass, mut fail, mut radial, mut worst) = (0, 0, 0, f64::NEG_INFINITY);
    for k in 0..30 {
        let t = random_triple(&mut rng, k);
        radial += k % 2;
        let (lift, slope) = (t.lift, t.slope);
        let g1 = move |x: &Point| slope * x[0] + (4.0 * x[1]).cos();
        let g2 = move |x: &Point| g1(x) + lift + x[0] * x[0];
        match comparison_experiment(&t.f, &t.q, &t.grid, &g1, &g2, &params, 1e-8) {
            Ok(rep) => {
                worst = worst.max(rep.violation);
                if rep.pass {
                    pass += 1
                } else {
                    fail += 1
                }
            }
            Err(Error::NotConverged { .. }) => fail += 1,
            Err(e) => return Err(format!("triple {k}: {e}")),
        }
    }
    Ok((pass, fail, radial, worst))
}

fn criterion_7() -> Outcome {
    let (pass, fail, radial, worst) = comparison_suite(SchemeVariant::Standard)?;
    let (fpass, ffail, _, fworst) = comparison_suite(SchemeVariant::FlippedNonlocalSign)?;
    ensure(
        fail == 0 && pass >= 25 && ffail > 0,
        format!(
            "standard {pass}/{} pass ({radial} truncated-density, worst violation {worst:.3e}); flipped {fpass} pass, {ffail} fail (worst {fworst:.3e})",
            pass + fail
        ),
    )
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_cli(config: &Path, out: &Path, threads: &str) -> Result<i32, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_nlvisc"))
        .arg("run")
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .env("NLVISC_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    Ok(status.status.code().unwrap_or(-1))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for name in ["doubling_noise.toml", "doubling_quadratic.toml", "compare_stable.toml"] {
        let config = repo_root().join("configs").join(name);
        let mut outputs = Vec::new();
        for (i, threads) in ["1", "4", "4"].iter().enumerate() {
            let out = tmp.path().join(format!("{name}-{i}"));
            let code = run_cli(&config, &out, threads)?;
            outputs.push((code, dir_bytes(&out)));
        }
        for o in &outputs[1..] {
            if o != &outputs[0] {
                return Err(format!("{name}: outputs differ between runs"));
            }
        }
        compared += outputs[0].1.len();
    }
    Ok(format!("3 configs x 3 runs (1 and 4 threads), {compared} files byte-identical"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 moreau closed form and duality", criterion_1),
        ("2 semiconvexity certificates", criterion_2),
        ("3 residual curve of u^r", criterion_3),
        ("4 doubling and perturbed maxima", criterion_4),
        ("5 nonlocal identities", criterion_5),
        ("6 solver accuracy and order", criterion_6),
        ("7 comparison property", criterion_7),
        ("8 determinism", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(d) => println!("PASS criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
