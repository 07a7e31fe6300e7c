//! Subcommand implementations. Each returns a pass/fail verdict plus summary
//! lines and writes its reports into the output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lbdie_core::geometry::{build_ball, build_box, write_vtk_surface, write_vtk_volume, Domain, MeshLimits, Point};
use lbdie_core::geometry::{SurfaceMesh, VolumeMesh, VtkField};
use lbdie_core::lbdie::{
    gradient_identity_residual, recover_flux_check, third_identity_residual, KrylovSettings, LbdieSystem,
};
use lbdie_core::localizers::{sigma_certificate, LocalizingFunction};
use lbdie_core::pde_model::{beta_of_tensor, mu_of_tensor, validate, ModelError, VectorField};
use lbdie_core::potentials::surface::Extrapolation;
use lbdie_core::potentials::KernelSet;
use lbdie_core::wiener_hopf::{
    factorize, gaussian_bump, halfspace_solve, sl_check, sl_homotopy, FrozenSymbol, LocalFrame,
};
use log::info;
use nalgebra::{Complex, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{LocalizerSpec, RunConfig};
use crate::CliError;

#[derive(Debug, Default)]
pub struct Report {
    pub passed: bool,
    pub lines: Vec<String>,
}

impl Report {
    fn new(passed: bool) -> Self {
        Self { passed, lines: Vec::new() }
    }

    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }
}

/// CSV writer with 17 significant digits for floats.
struct Csv {
    out: BufWriter<File>,
}

impl Csv {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(File::create(dir.join(name))?);
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out })
    }

    fn row(&mut self, cells: &[Cell]) -> Result<(), CliError> {
        let text: Vec<String> = cells
            .iter()
            .map(|c| match c {
                Cell::F(v) => format!("{v:.16e}"),
                Cell::S(s) => s.clone(),
            })
            .collect();
        writeln!(self.out, "{}", text.join(","))?;
        Ok(())
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.out.flush()?;
        Ok(())
    }
}

enum Cell {
    F(f64),
    S(String),
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

pub fn check_localizer(chi: &LocalizingFunction, spec: &LocalizerSpec, dir: &Path) -> Result<Report, CliError> {
    if !(spec.omega_max > 0.0) || spec.samples < 2 {
        return Err(CliError::Config("localizer: omega_max must be positive and samples ≥ 2".into()));
    }
    let cert = sigma_certificate(chi, spec.omega_max, spec.samples).map_err(numerical)?;
    let mut csv = Csv::create(dir, "localizer_report.csv", &["omega", "sigma"])?;
    csv.row(&[Cell::F(0.0), Cell::F(cert.sigma_at_zero)])?;
    for (w, s) in cert.omega_grid.iter().zip(&cert.sigma_values) {
        csv.row(&[Cell::F(*w), Cell::F(*s)])?;
    }
    csv.finish()?;
    let mut r = Report::new(cert.passed);
    r.line(format!("localizer {}", chi.name));
    r.line(format!("sigma(0)={:.16e}", cert.sigma_at_zero));
    r.line(format!("min_sigma={:.16e}", cert.min_sigma));
    Ok(r)
}

fn sample_points(domain: &Domain, count: usize, seed: u64) -> Vec<[f64; 3]> {
    let (lo, hi) = match *domain {
        Domain::Ball { center, radius } => (center - Point::repeat(radius), center + Point::repeat(radius)),
        Domain::Box { lo, hi } => (lo, hi),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = Point::from_fn(|i, _| rng.gen_range(lo[i]..hi[i]));
        if domain.contains(&p) {
            out.push(p.into());
        }
    }
    out
}

pub fn symbol_check(cfg: &RunConfig, dir: &Path) -> Result<Report, CliError> {
    let field = cfg.field()?;
    let domain = match &cfg.domain {
        Some(d) => d.domain()?,
        None => Domain::unit_ball(),
    };
    let points = sample_points(&domain, cfg.symbol.samples.max(1), cfg.seed);
    let mut csv = Csv::create(dir, "symbol_report.csv", &["quantity", "value"])?;
    let mut r = Report::new(true);
    match validate(&field, &points) {
        Ok(v) => {
            csv.row(&[Cell::S("c1".into()), Cell::F(v.c1_estimate)])?;
            csv.row(&[Cell::S("c2".into()), Cell::F(v.c2_estimate)])?;
            csv.row(&[Cell::S("major_symmetry".into()), Cell::F(f64::from(u8::from(v.symmetry_ok)))])?;
            csv.row(&[Cell::S("minor_symmetry".into()), Cell::F(f64::from(u8::from(v.minor_symmetry_ok)))])?;
            r.passed = v.symmetry_ok && v.c1_estimate > 0.0;
            r.line(format!("c1={:.6e} c2={:.6e} symmetric={}", v.c1_estimate, v.c2_estimate, v.symmetry_ok));
        }
        Err(ModelError::Expression(e)) => return Err(numerical(e)),
        Err(e) => {
            r.passed = false;
            r.line(e.to_string());
        }
    }
    let t = field.tensor(cfg.symbol.point).map_err(numerical)?;
    let beta = beta_of_tensor(&t);
    let mu = mu_of_tensor(&t, Vector3::from(cfg.symbol.normal).normalize().into());
    for (name, m) in [("beta", beta), ("mu", mu)] {
        for p in 0..3 {
            for q in 0..3 {
                csv.row(&[Cell::S(format!("{name}[{p}][{q}]")), Cell::F(m[(p, q)])])?;
            }
        }
    }
    csv.finish()?;
    r.line(format!("beta at {:?}: {:?}", cfg.symbol.point, beta.as_slice()));
    Ok(r)
}

fn frozen_symbol(cfg: &RunConfig) -> Result<FrozenSymbol, CliError> {
    let n = Vector3::from(cfg.symbol.normal);
    if !(n.norm() > 0.0) {
        return Err(CliError::Config("symbol.normal must be non-zero".into()));
    }
    FrozenSymbol::new(&cfg.field()?, cfg.symbol.point, LocalFrame::from_normal(n)).map_err(numerical)
}

pub fn factorize_cmd(cfg: &RunConfig, dir: &Path) -> Result<Report, CliError> {
    let symbol = frozen_symbol(cfg)?;
    let mut xis = cfg.symbol.xi_prime.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.symbol.random_xi {
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        let s = rng.gen_range(0.2..3.0);
        xis.push([s * a.cos(), s * a.sin()]);
    }
    if let Some(bad) = xis.iter().find(|x| x[0] == 0.0 && x[1] == 0.0) {
        return Err(CliError::Config(format!("symbol.xi_prime must be non-zero, got {bad:?}")));
    }
    let mut csv = Csv::create(
        dir,
        "factorization.csv",
        &["xi1", "xi2", "reconstruction_residual", "re_a_plus", "im_a_plus", "re_a_minus", "im_a_minus", "contour_error"],
    )?;
    let mut r = Report::new(true);
    for xi in xis {
        let poly = symbol.at(xi);
        let fact = factorize(&poly).map_err(numerical)?;
        let probes: Vec<_> = (0..8).map(|k| Complex::new(k as f64 - 3.5, 0.5 * (k % 3) as f64 - 0.5)).collect();
        let residual = fact.reconstruction_residual(&probes);
        let want = fact.c_plus / fact.a_plus;
        let got = fact.cofactor_contour_default().map_err(numerical)?;
        let contour_error = (got - want).norm() / want.norm();
        r.passed &= residual <= 1e-8 && contour_error <= 1e-8;
        csv.row(&[
            Cell::F(xi[0]),
            Cell::F(xi[1]),
            Cell::F(residual),
            Cell::F(fact.a_plus.re),
            Cell::F(fact.a_plus.im),
            Cell::F(fact.a_minus.re),
            Cell::F(fact.a_minus.im),
            Cell::F(contour_error),
        ])?;
        r.line(format!("xi' = ({:.6}, {:.6})", xi[0], xi[1]));
        r.line(format!("  roots of det A+ : {}", roots(&fact.roots_plus)));
        r.line(format!("  roots of det A- : {}", roots(&fact.roots_minus)));
        r.line(format!("  a+ = {:.12}, a- = {:.12}", fact.a_plus, fact.a_minus));
        r.line(format!("  A+(tau) = tau {} + {}", cmat(&fact.plus_lead), cmat(&fact.plus_const)));
        r.line(format!("  A-(tau) = tau {} + {}", cmat(&fact.minus_lead), cmat(&fact.minus_const)));
        r.line(format!("  C+ = {}", cmat(&fact.c_plus)));
        r.line(format!("  reconstruction residual = {residual:.3e}, contour error = {contour_error:.3e}"));
    }
    csv.finish()?;
    Ok(r)
}

fn roots(zs: &[Complex<f64>]) -> String {
    zs.iter().map(|z| format!("{:.9}{:+.9}i", z.re, z.im)).collect::<Vec<_>>().join(", ")
}

/// One-line row-major rendering of a complex 3×3 matrix.
fn cmat(m: &nalgebra::Matrix3<Complex<f64>>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|row| {
            let cells: Vec<String> = row.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

pub fn sl_check_cmd(cfg: &RunConfig, dir: &Path) -> Result<Report, CliError> {
    let symbol = frozen_symbol(cfg)?;
    let count = cfg.symbol.directions;
    if count == 0 {
        return Err(CliError::Config("symbol.directions must be positive".into()));
    }
    let t_grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let report = if cfg.symbol.homotopy {
        sl_homotopy(&symbol, &t_grid, count, cfg.symbol.floor)
    } else {
        sl_check(&symbol, count, cfg.symbol.floor)
    }
    .map_err(numerical)?;
    let angle = |xi: &[f64; 2]| xi[1].atan2(xi[0]);
    let mut csv = Csv::create(dir, "sl_report.csv", &["direction", "re_det_e", "im_det_e", "abs_det_e"])?;
    for (xi, d) in report.xi_prime.iter().zip(&report.det_e) {
        csv.row(&[Cell::F(angle(xi)), Cell::F(d.re), Cell::F(d.im), Cell::F(d.norm())])?;
    }
    csv.finish()?;
    if !report.t_grid.is_empty() {
        let mut csv = Csv::create(dir, "sl_homotopy.csv", &["t", "direction", "re_det_e", "im_det_e", "abs_det_e"])?;
        for (t, row) in report.t_grid.iter().zip(&report.det_e_t) {
            for (xi, d) in report.xi_prime.iter().zip(row) {
                csv.row(&[Cell::F(*t), Cell::F(angle(xi)), Cell::F(d.re), Cell::F(d.im), Cell::F(d.norm())])?;
            }
        }
        csv.finish()?;
    }
    let mut r = Report::new(report.passed);
    r.line(format!("min |det e| = {:.6e} (floor {:.1e}) over {count} directions", report.min_abs_det, report.floor));
    Ok(r)
}

pub fn halfspace_cmd(cfg: &RunConfig, dir: &Path) -> Result<Report, CliError> {
    let symbol = frozen_symbol(cfg)?;
    let spec = &cfg.halfspace;
    if spec.sizes.is_empty() {
        return Err(CliError::Config("halfspace.sizes must not be empty".into()));
    }
    let mut csv = Csv::create(dir, "halfspace_report.csv", &["n", "residual"])?;
    let mut r = Report::new(true);
    for &n in &spec.sizes {
        if n < 16 || !n.is_power_of_two() {
            return Err(CliError::Config(format!("halfspace.sizes: {n} is not a power of two ≥ 16")));
        }
        let f = gaussian_bump(n, spec.box_size, spec.center, spec.width, spec.amplitude);
        let res = halfspace_solve(&symbol, &f, n, spec.box_size).map_err(numerical)?;
        csv.row(&[Cell::S(n.to_string()), Cell::F(res.residual)])?;
        r.passed &= res.residual.is_finite() && spec.max_residual.map_or(true, |m| res.residual <= m);
        r.line(format!("n = {n}: residual {:.3e}", res.residual));
    }
    csv.finish()?;
    Ok(r)
}

fn meshes(domain: &Domain, grid: usize, surface: u32) -> Result<(VolumeMesh, SurfaceMesh), CliError> {
    let limits = MeshLimits::default();
    match *domain {
        Domain::Ball { center, radius } => build_ball(center, radius, grid, surface, &limits),
        Domain::Box { lo, hi } => build_box(lo, hi, grid, &limits),
    }
    .map_err(|e| CliError::Config(e.to_string()))
}

pub fn verify_identities(cfg: &RunConfig, dir: &Path) -> Result<Report, CliError> {
    let domain = cfg.domain()?;
    let field = cfg.field()?;
    let chi = cfg.localizer(&domain)?;
    let exact = RunConfig::vector_field(RunConfig::require(&cfg.manufactured, "manufactured")?, "manufactured")?;
    let constant = RunConfig::vector_field(&["1".into(), "-2".into(), "0.5".into()], "constant")?;
    let levels = cfg.levels()?;
    let mut csv = Csv::create(dir, "identities.csv", &["identity", "l2_rel", "max_rel", "resolution"])?;
    let mut r = Report::new(true);
    for (idx, level) in levels.iter().enumerate() {
        let (vm, sm) = meshes(&domain, level.grid, level.surface)?;
        let ks = KernelSet::new(field.clone(), chi.clone());
        let rows = [
            ("third", third_identity_residual(&ks, &vm, &sm, &exact).map_err(numerical)?),
            ("gradient", gradient_identity_residual(&ks, &vm, &sm, &exact).map_err(numerical)?),
            ("constant", gradient_identity_residual(&ks, &vm, &sm, &constant).map_err(numerical)?),
        ];
        for (name, res) in rows {
            csv.row(&[Cell::S(name.into()), Cell::F(res.l2_rel), Cell::F(res.max_rel), Cell::S(level.label())])?;
            r.line(format!("{name} identity at {}: L2 {:.3e}, max {:.3e}", level.label(), res.l2_rel, res.max_rel));
            if idx + 1 == levels.len() {
                r.passed &= res.l2_rel <= cfg.tolerances.identity;
            }
        }
    }
    csv.finish()?;
    Ok(r)
}

fn sample_cells(vm: &VolumeMesh, u: &dyn VectorField) -> Result<Vec<[f64; 3]>, CliError> {
    vm.cells.iter().map(|c| u.value(c.centroid.into()).map_err(numerical)).collect()
}

fn sample_panels(sm: &SurfaceMesh, u: &dyn VectorField) -> Result<Vec<[f64; 3]>, CliError> {
    sm.panels.iter().map(|p| u.value(p.centroid.into()).map_err(numerical)).collect()
}

fn write_file(path: PathBuf, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn solve(cfg: &RunConfig, dir: &Path, dump_operators: bool) -> Result<Report, CliError> {
    let domain = cfg.domain()?;
    let field = cfg.field()?;
    let chi = cfg.localizer(&domain)?;
    let levels = cfg.levels()?;
    let exact = cfg.manufactured.as_ref().map(|m| RunConfig::vector_field(m, "manufactured")).transpose()?;
    let data = match (&exact, &cfg.source, &cfg.dirichlet) {
        (Some(_), None, None) => None,
        (None, Some(f), Some(g)) => {
            Some((RunConfig::vector_field(f, "source")?, RunConfig::vector_field(g, "dirichlet")?))
        }
        _ => {
            return Err(CliError::Config(
                "give either `manufactured` or both `source` and `dirichlet`".into(),
            ))
        }
    };
    let settings = KrylovSettings { tol: cfg.solver.tol, max_iter: cfg.solver.max_iter, restart: cfg.solver.restart };
    std::fs::create_dir_all(dir)?;
    let mut csv = Csv::create(dir, "errors.csv", &["quantity", "L2_rel", "max_rel", "resolution"])?;
    let mut r = Report::new(true);
    for (idx, level) in levels.iter().enumerate() {
        let (vm, sm) = meshes(&domain, level.grid, level.surface)?;
        let ks = KernelSet::new(field.clone(), chi.clone());
        let system = LbdieSystem::assemble(ks.clone(), &vm, &sm, Extrapolation::default()).map_err(numerical)?;
        info!("assembled {} unknowns at {}", system.dimension(), level.label());
        let tag = format!("{}_{}", level.grid, level.surface);
        if dump_operators {
            write_file(dir.join(format!("operators_{tag}.coo")), |out| {
                writeln!(out, "# block row col b00 b01 b02 b10 b11 b12 b20 b21 b22")?;
                let mut status = Ok(());
                system.for_each_block(|kind, t, s, b| {
                    if status.is_ok() {
                        status = writeln!(
                            out,
                            "{} {t} {s} {}",
                            kind.name(),
                            b.transpose().iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(" ")
                        );
                    }
                });
                status
            })?;
        }
        let rhs = match (&exact, &data) {
            (Some(u), _) => system.manufactured_rhs(u).map_err(numerical)?,
            (None, Some((f, g))) => {
                system.rhs(&sample_cells(&vm, f)?, &sample_panels(&sm, g)?).map_err(numerical)?
            }
            (None, None) => unreachable!("checked above"),
        };
        let sol = system.solve(&rhs, settings).map_err(numerical)?;
        r.line(format!(
            "{}: {} iterations, relative residual {:.3e}, condition estimate {:.3e}",
            level.label(),
            sol.iterations,
            sol.residual,
            sol.condition_estimate
        ));
        let mut volume_fields = vec![VtkField::Vector("u", &sol.u)];
        let u_exact;
        if let Some(u) = &exact {
            let flux = recover_flux_check(&ks, &vm, &sm, &sol, u).map_err(numerical)?;
            csv.row(&[Cell::S("u".into()), Cell::F(flux.u.l2_rel), Cell::F(flux.u.max_rel), Cell::S(level.label())])?;
            csv.row(&[
                Cell::S("psi".into()),
                Cell::F(flux.psi.l2_rel),
                Cell::F(flux.psi.max_rel),
                Cell::S(level.label()),
            ])?;
            r.line(format!("  u error L2 {:.3e}, psi error L2 {:.3e}", flux.u.l2_rel, flux.psi.l2_rel));
            if idx + 1 == levels.len() {
                r.passed &= cfg.tolerances.u.map_or(true, |t| flux.u.l2_rel <= t);
                r.passed &= cfg.tolerances.psi.map_or(true, |t| flux.psi.l2_rel <= t);
            }
            u_exact = sample_cells(&vm, u)?;
            volume_fields.push(VtkField::Vector("u_exact", &u_exact));
        }
        write_file(dir.join(format!("u_{tag}.vtk")), |out| {
            write_vtk_volume(out, &vm, &format!("LBDIE volume solution {}", level.label()), &volume_fields)
        })?;
        write_file(dir.join(format!("psi_{tag}.vtk")), |out| {
            write_vtk_surface(out, &sm, &format!("LBDIE flux {}", level.label()), &[VtkField::Vector("psi", &sol.psi)])
        })?;
    }
    csv.finish()?;
    Ok(r)
}
