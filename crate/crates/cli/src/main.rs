//! Command-line front end: parse a model configuration, dispatch the wave
//! constructions, and emit deterministic CSV/JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use rnd_waves::acceptance;
use rnd_waves::fullwave::{self, BvpOptions, WaveProfile};
use rnd_waves::layer::{self, ShockDirection};
use rnd_waves::melnikov;
use rnd_waves::model::{self, ModelParams};
use rnd_waves::reduced::{self, Orientation, Param, SolveOptions};
use rnd_waves::spectral::{self, EvansContext};

#[derive(Parser)]
#[command(name = "rnd-waves", version, about = "Shock-fronted travelling waves of a composite-regularised reaction-nonlinear-diffusion model")]
struct Cli {
    /// TOML configuration file with a [model] table.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for data files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    overrides: ModelOverrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct ModelOverrides {
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    gamma1: Option<f64>,
    #[arg(long, global = true)]
    gamma2: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    kappa: Option<f64>,
    #[arg(long, global = true)]
    a: Option<f64>,
    #[arg(long, global = true)]
    c: Option<f64>,
    #[arg(long, global = true)]
    eps: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirArg {
    GammaPlus,
    GammaMinus,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    Alpha,
    Gamma1,
    Gamma2,
    A,
    C,
}

impl From<ParamArg> for Param {
    fn from(p: ParamArg) -> Param {
        match p {
            ParamArg::Alpha => Param::Alpha,
            ParamArg::Gamma1 => Param::Gamma1,
            ParamArg::Gamma2 => Param::Gamma2,
            ParamArg::A => Param::A,
            ParamArg::C => Param::C,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Equal-area shock height and jump endpoints.
    EqualArea,
    /// Sweep the shock-height branch over a delta grid (CSV).
    LayerBif {
        #[arg(long, default_value_t = 0.0)]
        delta_min: f64,
        #[arg(long, default_value_t = 0.3)]
        delta_max: f64,
        #[arg(long, default_value_t = 61)]
        n: usize,
        #[arg(long, value_enum, default_value_t = DirArg::GammaMinus)]
        direction: DirArg,
    },
    /// Solve the singular heteroclinic at fixed a (wavespeed free).
    SingularHet {
        #[arg(long, default_value_t = 0.0)]
        a: f64,
        #[arg(long)]
        evasion: bool,
        #[arg(long, default_value_t = 0.05)]
        c_min: f64,
        #[arg(long, default_value_t = 0.4)]
        c_max: f64,
    },
    /// Natural-parameter continuation of the heteroclinic matching.
    Continue {
        #[arg(long, value_enum)]
        vary: ParamArg,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, value_enum, default_value_t = ParamArg::C)]
        free: ParamArg,
    },
    /// Locate the tangency codimension-two point at fixed a.
    Tangency {
        #[arg(long, default_value_t = 0.5)]
        a: f64,
        #[arg(long, default_value_t = 0.08)]
        c_guess: f64,
        #[arg(long, default_value_t = 0.125)]
        alpha_guess: f64,
    },
    /// Trace the folded saddle-to-saddle curve over an alpha grid.
    FsToS {
        #[arg(long, default_value_t = 0.05)]
        alpha_min: f64,
        #[arg(long, default_value_t = 0.12)]
        alpha_max: f64,
        #[arg(long, default_value_t = 15)]
        n: usize,
    },
    /// Canard crossing search and wave assembly (alpha, c from config).
    Canard {
        #[arg(long, default_value_t = 1.0)]
        a: f64,
    },
    /// Full 4D heteroclinic boundary-value solve.
    FullHet {
        #[arg(long, default_value_t = 0.5182)]
        a: f64,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
    },
    /// Riccati-Evans point-spectrum scan for the eps > 0 wave.
    Spectrum {
        #[arg(long, default_value_t = 0.5182)]
        a: f64,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e3])]
        radii: Vec<f64>,
        #[arg(long, default_value_t = -0.9)]
        scan_min: f64,
        #[arg(long, default_value_t = 0.05)]
        scan_max: f64,
    },
    /// Melnikov integrals (layer by default, piecewise on request).
    Melnikov {
        #[arg(long)]
        piecewise: bool,
    },
    /// Reproduce the dataset behind a named figure.
    Figure {
        #[arg(value_parser = ["fig2", "fig4", "fig5", "fig7", "fig8", "fig9", "fig10", "fig11", "fig12", "fig13"])]
        id: String,
    },
    /// Run the acceptance suite (one line per criterion).
    Accept,
}

fn load_params(cli: &Cli) -> Result<ModelParams> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct ConfigFile {
        model: ModelParams,
    }
    let mut p = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let cfg: ConfigFile = toml::from_str(&text).context("parsing config")?;
            cfg.model
        }
        None => model::set_a(),
    };
    let o = &cli.overrides;
    if let Some(v) = o.beta {
        p.beta = v;
    }
    if let Some(v) = o.gamma1 {
        p.gamma1 = v;
    }
    if let Some(v) = o.gamma2 {
        p.gamma2 = v;
    }
    if let Some(v) = o.alpha {
        p.alpha = v;
    }
    if let Some(v) = o.kappa {
        p.kappa = v;
    }
    if let Some(v) = o.a {
        p.a = v;
    }
    if let Some(v) = o.c {
        p.c = v;
    }
    if let Some(v) = o.eps {
        p.eps = v;
    }
    p.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(p)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn params_header(p: &ModelParams) -> String {
    format!(
        "# beta = {:.16e}\n# gamma1 = {:.16e}\n# gamma2 = {:.16e}\n# alpha = {:.16e}\n# kappa = {:.16e}\n# a = {:.16e}\n# c = {:.16e}\n# eps = {:.16e}\n",
        p.beta, p.gamma1, p.gamma2, p.alpha, p.kappa, p.a, p.c, p.eps
    )
}

fn build_wave(p: &ModelParams, a: f64, eps: f64) -> Result<(ModelParams, WaveProfile)> {
    let pa = p.with_a(a);
    let seed = reduced::singular_het_solve(
        a,
        &pa,
        Orientation::Invasion,
        &SolveOptions { c_bracket: (0.05, 0.4), ..Default::default() },
    )?;
    let wave = fullwave::het_bvp_solve(&seed, eps, &pa, &BvpOptions::default())?;
    Ok((pa, wave))
}

fn arcs_csv(wave: &reduced::SingularHeteroclinic, p: &ModelParams) -> String {
    let mut out = params_header(p);
    out.push_str("arc,zeta,u,v\n");
    for (tag, arc) in [("right", &wave.right_arc), ("left", &wave.left_arc)] {
        for &(z, u, v) in &arc.samples {
            out.push_str(&format!("{tag},{z:.16e},{u:.16e},{v:.16e}\n"));
        }
    }
    out
}

fn orbit_csv(orbit: &layer::LayerOrbit, p: &ModelParams) -> String {
    let mut out = params_header(p);
    out.push_str(&format!("# w = {:.16e}\n# delta = {:.16e}\ny,u,uhat\n", orbit.w, orbit.delta));
    for &(y, u, uh) in &orbit.samples {
        out.push_str(&format!("{y:.16e},{u:.16e},{uh:.16e}\n"));
    }
    out
}

fn run(cli: &Cli) -> Result<i32> {
    let p = load_params(cli)?;
    let out = &cli.out;
    match &cli.command {
        Command::EqualArea => {
            let rule = layer::equal_area_height(&p);
            println!(
                "equal-area: w_h = {:.12}, u_l = {:.12}, u_r = {:.12}",
                rule.w, rule.u_l, rule.u_r
            );
        }
        Command::LayerBif { delta_min, delta_max, n, direction } => {
            let dir = match direction {
                DirArg::GammaPlus => ShockDirection::GammaPlus,
                DirArg::GammaMinus => ShockDirection::GammaMinus,
            };
            let grid: Vec<f64> = (0..*n)
                .map(|i| delta_min + (delta_max - delta_min) * i as f64 / (*n - 1).max(1) as f64)
                .collect();
            let branch = layer::layer_bifurcation_branch(&grid, &p, dir);
            let ok = branch.iter().filter(|b| b.rule.is_ok()).count();
            let csv = format!("{}{}", params_header(&p), layer::branch_to_csv(&branch));
            let path = write_file(out, "layer_branch.csv", &csv)?;
            println!("layer-bif: {ok}/{} points -> {}", grid.len(), path.display());
        }
        Command::SingularHet { a, evasion, c_min, c_max } => {
            let orientation = if *evasion { Orientation::Evasion } else { Orientation::Invasion };
            let opts = SolveOptions { c_bracket: (*c_min, *c_max), ..Default::default() };
            let wave = reduced::singular_het_solve(*a, &p, orientation, &opts)?;
            let path = write_file(out, "singular_het.json", &wave.to_json())?;
            write_file(out, "singular_het_arcs.csv", &arcs_csv(&wave, &p.with_a(*a).with_c(wave.wavespeed)))?;
            println!(
                "singular-het: a = {a}, c = {:.12}, shock {:?} at w = {:.12} -> {}",
                wave.wavespeed,
                wave.shock.kind,
                wave.shock.w,
                path.display()
            );
        }
        Command::Continue { vary, from, to, free } => {
            let vary: Param = (*vary).into();
            let free: Param = (*free).into();
            let pts = reduced::continue_branch(vary, (*from, *to), &p, free, Orientation::Invasion)?;
            let csv = format!("{}{}", params_header(&p), reduced::branch_to_csv(&pts, vary, free));
            let path = write_file(out, "continuation.csv", &csv)?;
            println!(
                "continue: {} accepted points, {}({}) = {:.12} -> {}",
                pts.len(),
                free.name(),
                pts.last().map(|q| q.vary).unwrap_or(f64::NAN),
                pts.last().map(|q| q.free).unwrap_or(f64::NAN),
                path.display()
            );
        }
        Command::Tangency { a, c_guess, alpha_guess } => {
            let (c, alpha) = reduced::detect_tangency(&p, *a, (*c_guess, *alpha_guess))?;
            println!("tangency: (c, alpha) = ({c:.10}, {alpha:.10}) at a = {a}");
        }
        Command::FsToS { alpha_min, alpha_max, n } => {
            let alphas: Vec<f64> = (0..*n)
                .map(|i| alpha_min + (alpha_max - alpha_min) * i as f64 / (*n - 1).max(1) as f64)
                .collect();
            let pts = reduced::fs_to_s_branch(&alphas, &p, (0.02, 0.4));
            let mut csv = params_header(&p);
            csv.push_str("alpha,c,kind,residual\n");
            for q in &pts {
                if let Some(c) = q.c {
                    let res = reduced::fs_to_s_residual(c, &p.with_alpha(q.alpha).with_c(c))
                        .unwrap_or(f64::NAN);
                    csv.push_str(&format!("{:.16e},{:.16e},fs-to-s,{:.16e}\n", q.alpha, c, res));
                }
            }
            let path = write_file(out, "fs_to_s.csv", &csv)?;
            let found = pts.iter().filter(|q| q.c.is_some()).count();
            println!("fs-to-s: {found}/{} points -> {}", pts.len(), path.display());
        }
        Command::Canard { a } => {
            let pa = p.with_a(*a);
            let crossing = reduced::canard_crossing(&pa)?;
            let wave = reduced::canard_wave_solve(&pa)?;
            let path = write_file(out, "canard_wave.json", &wave.to_json())?;
            write_file(out, "canard_arcs.csv", &arcs_csv(&wave, &pa))?;
            println!(
                "canard: crossing at u_dep = {:.8}, u_mid = {:.8}, v = {:.8} -> {}",
                crossing.u_dep,
                crossing.u_mid,
                crossing.v,
                path.display()
            );
        }
        Command::FullHet { a, eps } => {
            let (pa, wave) = build_wave(&p, *a, *eps)?;
            let path = write_file(out, "wave.csv", &wave.to_csv(&pa))?;
            println!(
                "full-het: a = {a}, eps = {eps:.1e}, c = {:.12}, residual = {:.3e} -> {}",
                wave.wavespeed,
                wave.residual_norm,
                path.display()
            );
        }
        Command::Spectrum { a, eps, radii, scan_min, scan_max } => {
            let (pa, wave) = build_wave(&p, *a, *eps)?;
            let ctx = EvansContext::new(&wave, &pa);
            let report = spectral::point_spectrum_scan(&ctx, (*scan_min, *scan_max), radii)?;
            let path = write_file(out, "spectrum.json", &serde_json::to_string_pretty(&report)?)?;
            for (radius, _w) in &report.windings {
                let contour = spectral::semicircle_contour(*radius, 1e-3, 720);
                let (_n, samples) = spectral::winding_number(&ctx, &contour)?;
                write_file(
                    out,
                    &format!("evans_contour_R{radius:.0e}.csv"),
                    &spectral::samples_to_csv(&samples),
                )?;
            }
            println!(
                "spectrum: eigenvalues {:?}, windings {:?} -> {}",
                report
                    .eigenvalues
                    .iter()
                    .map(|e| (e.lambda, e.multiplicity))
                    .collect::<Vec<_>>(),
                report.windings,
                path.display()
            );
        }
        Command::Melnikov { piecewise } => {
            let res = if *piecewise {
                melnikov::piecewise_melnikov(&p)?
            } else {
                melnikov::layer_melnikov(&p, ShockDirection::GammaMinus)?
            };
            let path = write_file(out, "melnikov.json", &res.to_json())?;
            println!(
                "melnikov: partials {:?}, slope b = {:.10} -> {}",
                res.partials,
                res.slope_b,
                path.display()
            );
        }
        Command::Figure { id } => {
            figure_repro(id, &p, out)?;
            println!("figure {id}: data written to {}", out.display());
        }
        Command::Accept => {
            let results = acceptance::run_all();
            let mut all_ok = true;
            for r in &results {
                println!("{}", r.summary_line());
                all_ok &= r.passed();
            }
            if !all_ok {
                return Ok(2);
            }
        }
    }
    Ok(0)
}

/// Emit the plottable dataset behind a named figure at the parameter sets
/// used in the reported computations.
fn figure_repro(id: &str, base: &ModelParams, out: &Path) -> Result<()> {
    match id {
        "fig2" => {
            let p = model::symmetric_set();
            let wave = reduced::standing_wave_solve(&p, None)?;
            write_file(out, "fig2_arcs.csv", &arcs_csv(&wave, &p))?;
            // shock segment at the matching v-level
            let v = wave.right_arc.samples.last().map(|s| s.2).unwrap_or(0.0);
            let mut shock = params_header(&p);
            shock.push_str("u,v\n");
            for i in 0..=100 {
                let u = wave.shock.u_l + (wave.shock.u_r - wave.shock.u_l) * i as f64 / 100.0;
                shock.push_str(&format!("{u:.16e},{v:.16e}\n"));
            }
            write_file(out, "fig2_shock.csv", &shock)?;
            // zero contour of the c = 0 Hamiltonian
            let mut contour = params_header(&p);
            contour.push_str("u,v_plus,v_minus\n");
            for i in 0..=400 {
                let u = -0.05 + 1.15 * i as f64 / 400.0;
                let g = -2.0 * (reduced::reduced_hamiltonian(u, 0.0, &p));
                if g >= 0.0 {
                    let v = g.sqrt();
                    contour.push_str(&format!("{u:.16e},{v:.16e},{:.16e}\n", -v));
                }
            }
            write_file(out, "fig2_hzero.csv", &contour)?;
        }
        "fig4" => {
            let p = model::set_a();
            let rule = layer::equal_area_height(&p);
            for (dir, name) in [
                (ShockDirection::GammaPlus, "fig4_gamma_plus.csv"),
                (ShockDirection::GammaMinus, "fig4_gamma_minus.csv"),
            ] {
                let orbit = layer::heteroclinic_orbit(rule.w, 0.0, &p, dir)?;
                write_file(out, name, &orbit_csv(&orbit, &p))?;
            }
        }
        "fig5" => {
            let p = model::set_a();
            let r1 = layer::generalised_height(0.1, &p, ShockDirection::GammaMinus)?;
            let o1 = layer::heteroclinic_orbit(r1.w, 0.1, &p, ShockDirection::GammaMinus)?;
            write_file(out, "fig5a_delta01.csv", &orbit_csv(&o1, &p))?;
            let dm = layer::delta_m(&p, ShockDirection::GammaMinus)?;
            let r2 = layer::generalised_height(dm + 1e-4, &p, ShockDirection::GammaMinus)?;
            let o2 = layer::heteroclinic_orbit(r2.w, dm + 1e-4, &p, ShockDirection::GammaMinus)?;
            write_file(out, "fig5b_delta_m.csv", &orbit_csv(&o2, &p))?;
        }
        "fig7" => {
            let p0 = model::symmetric_set();
            let leg1 = reduced::continue_branch(Param::Alpha, (0.5, 0.2), &p0, Param::C, Orientation::Invasion)?;
            write_file(
                out,
                "fig7a_alpha_leg.csv",
                &format!("{}{}", params_header(&p0), reduced::branch_to_csv(&leg1, Param::Alpha, Param::C)),
            )?;
            let p1 = Param::C.set(&Param::Alpha.set(&p0, 0.2), leg1.last().unwrap().free);
            let leg2 = reduced::continue_branch(Param::Gamma1, (0.25, 7.0 / 12.0), &p1, Param::C, Orientation::Invasion)?;
            write_file(
                out,
                "fig7b_gamma1_leg.csv",
                &format!("{}{}", params_header(&p1), reduced::branch_to_csv(&leg2, Param::Gamma1, Param::C)),
            )?;
        }
        "fig8" => {
            let p = model::set_a();
            let grid: Vec<f64> = (0..=60).map(|i| 0.3 * i as f64 / 60.0).collect();
            let branch = layer::layer_bifurcation_branch(&grid, &p, ShockDirection::GammaMinus);
            write_file(
                out,
                "fig8a_delta_w.csv",
                &format!("{}{}", params_header(&p), layer::branch_to_csv(&branch)),
            )?;
            let dm = layer::delta_m(&p, ShockDirection::GammaMinus)?;
            let mut csv = params_header(&p);
            csv.push_str("a,c,kind\n");
            let c_m = reduced::singular_het_solve(
                2.0,
                &p,
                Orientation::Invasion,
                &SolveOptions { c_bracket: (0.05, 0.4), ..Default::default() },
            )?
            .wavespeed;
            let a_m = dm / c_m;
            for i in 0..=40 {
                let a = 1.3 * a_m * i as f64 / 40.0;
                if let Ok(w) = reduced::singular_het_solve(
                    a,
                    &p,
                    Orientation::Invasion,
                    &SolveOptions { c_bracket: (0.05, 0.4), ..Default::default() },
                ) {
                    let kind = match w.shock.kind {
                        layer::ShockKind::EqualArea => "equal-area",
                        layer::ShockKind::Interpolated => "interpolated",
                        layer::ShockKind::Viscous => "viscous",
                    };
                    csv.push_str(&format!("{a:.16e},{:.16e},{kind}\n", w.wavespeed));
                }
            }
            write_file(out, "fig8b_a_c.csv", &csv)?;
        }
        "fig9" => {
            let (pa, wave) = build_wave(&model::set_a(), 0.5182, 1e-4)?;
            write_file(out, "fig9_wave.csv", &wave.to_csv(&pa))?;
        }
        "fig10" => {
            let p = model::nonmonotone_set();
            let alphas: Vec<f64> = (0..=14).map(|i| 0.05 + 0.07 * i as f64 / 14.0).collect();
            let pts = reduced::fs_to_s_branch(&alphas, &p, (0.02, 0.4));
            let mut csv = params_header(&p);
            csv.push_str("alpha,c\n");
            for q in &pts {
                if let Some(c) = q.c {
                    csv.push_str(&format!("{:.16e},{c:.16e}\n", q.alpha));
                }
            }
            write_file(out, "fig10_fs_to_s.csv", &csv)?;
            let (a3, c3, al3) = reduced::codim3_point(&p, (0.066, 0.138))?;
            write_file(
                out,
                "fig10_codim3.csv",
                &format!("a,c,alpha\n{a3:.16e},{c3:.16e},{al3:.16e}\n"),
            )?;
        }
        "fig11" => {
            let p = model::nonmonotone_set();
            let (c_t, a_t) = reduced::detect_tangency(&p, 0.5, (0.08, 0.125))?;
            write_file(out, "fig11_tangency.csv", &format!("c,alpha\n{c_t:.16e},{a_t:.16e}\n"))?;
            let wave = reduced::nonmonotone_het_solve(
                &p.with_alpha(0.115),
                0.5,
                &SolveOptions { c_bracket: (0.05, 0.18), scan_points: 60, ..Default::default() },
            )?;
            write_file(out, "fig11_nonmonotone_arcs.csv", &arcs_csv(&wave, &p.with_alpha(0.115)))?;
        }
        "fig12" => {
            let p = model::nonmonotone_set().with_alpha(0.068984).with_c(0.2).with_a(1.0);
            let crossing = reduced::canard_crossing(&p)?;
            let wave = reduced::canard_wave_solve(&p)?;
            write_file(out, "fig12_canard_arcs.csv", &arcs_csv(&wave, &p))?;
            write_file(
                out,
                "fig12_crossing.csv",
                &format!(
                    "u_dep,u_mid,v,w\n{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    crossing.u_dep, crossing.u_mid, crossing.v, crossing.w
                ),
            )?;
        }
        "fig13" => {
            let (pa, wave) = build_wave(&model::set_a(), 0.5182, 1e-4)?;
            let ctx = EvansContext::new(&wave, &pa);
            let contour = spectral::semicircle_contour(1e5, 1e-3, 720);
            let (n, samples) = spectral::winding_number(&ctx, &contour)?;
            let mut csv = params_header(&pa);
            csv.push_str(&format!("# winding = {n}\n"));
            csv.push_str(&spectral::samples_to_csv(&samples));
            write_file(out, "fig13_evans_contour.csv", &csv)?;
        }
        _ => return Err(anyhow!("unknown figure id {id}")),
    }
    let _ = Complex64::new(0.0, 0.0);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    match run(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            // configuration errors exit 1; numerical failures exit 2
            let msg = e.to_string();
            eprintln!("error: {msg}");
            let config_issue = e.downcast_ref::<model::ModelError>().is_some()
                || msg.contains("parameter invariant")
                || msg.contains("parsing config")
                || msg.contains("reading config");
            if config_issue {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
