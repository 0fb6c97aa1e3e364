//! Batch front end: `subwave <verb> [options]`.

mod output;
mod verify;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use subwave::abnormal::{integrate_characteristic, min_singular_length, DirectionPolicy, SingularBudget};
use subwave::cones::{cone_at, ConeRep, HullCone, CONE_TOL, DEFAULT_NZ};
use subwave::geodesics::{integrate_normal, shoot, ShootConfig};
use subwave::rays::{reach_set, ReachConfig};
use subwave::wavekernel::{predict, simulate, DetectorConfig, PredictBudget, ScenarioRecord};
use subwave::{CotangentPoint, Error, ExtendedPoint, SubRiemannianStructure};

use output::{fmt, Output};

#[derive(Parser)]
#[command(name = "subwave", version, about = "Propagation of singularities for sub-Laplacians")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone)]
struct Common {
    /// Built-in structure: heisenberg, martinet, quasicontact, euclidean3.
    #[arg(long, conflicts_with = "structure")]
    preset: Option<String>,
    /// Structure definition file (TOML).
    #[arg(long)]
    structure: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (overrides SUBWAVE_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
    /// Directory for output files; tables go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the structure definition in use to this file.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Cone membership table for sampled tangent vectors at a point of M.
    Cones {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: String,
        #[arg(long)]
        xi: String,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        tau: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t: f64,
        #[arg(long, default_value_t = 32)]
        samples: usize,
        #[arg(long, default_value_t = CONE_TOL)]
        tol_cone: f64,
    },
    /// Length spectrum between two points (with --y) or one normal geodesic (with --xi).
    Geodesics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: Option<String>,
        #[arg(long)]
        xi: Option<String>,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        time: f64,
        #[arg(long, default_value_t = 3.0)]
        t_max: f64,
        #[arg(long, default_value_t = 64)]
        starts: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol_residual: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol_len: f64,
    },
    /// Minimal singular length between two points (with --y) or one characteristic (with --xi).
    Abnormal {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: Option<String>,
        #[arg(long)]
        xi: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        time: f64,
        #[arg(long, default_value_t = 3.0)]
        t_max: f64,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        #[arg(long, default_value_t = 16)]
        covectors: usize,
        #[arg(long, default_value_t = 1e-3)]
        tol_hit: f64,
    },
    /// Sampled reachable set of rays ending at (x, ξ) with the given τ.
    Reach {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: String,
        #[arg(long)]
        xi: String,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        tau: f64,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        t_min: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t_max: f64,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        #[arg(long, default_value_t = 5)]
        dirs: usize,
        #[arg(long, default_value_t = 1e-2)]
        grid_res: f64,
        #[arg(long, default_value_t = 200_000)]
        max_points: usize,
    },
    /// Predicted singular times of t ↦ K_G(t, x, y).
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long, default_value_t = 3.0)]
        t_max: f64,
        #[arg(long, default_value_t = 64)]
        starts: usize,
        #[arg(long, default_value_t = 16)]
        covectors: usize,
    },
    /// Finite-difference wave simulation described by a scenario file.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: PathBuf,
        /// Detection window; defaults to twice the source width.
        #[arg(long)]
        window: Option<f64>,
        #[arg(long, default_value_t = 6.0)]
        mad_factor: f64,
    },
    /// Cross-representation cone checks and the speed identity on random points of Σ_(2).
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 200)]
        queries: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol_identity: f64,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Parse(String),
    Domain(String),
    Budget(String),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) | Error::InvalidArgument(_) => Failure::Parse(e.to_string()),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Parse(format!("i/o error: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn parse_vec(s: &str) -> Result<DVector<f64>, Failure> {
    let vals: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if !v.is_empty() => Ok(DVector::from_vec(v)),
        _ => Err(Failure::Parse(format!("expected comma-separated numbers, got `{s}`"))),
    }
}

fn check_dim(s: &SubRiemannianStructure, v: &DVector<f64>, name: &str) -> Result<(), Failure> {
    if v.len() == s.dim() {
        Ok(())
    } else {
        Err(Failure::Parse(format!("--{name} has {} entries, the structure has dimension {}", v.len(), s.dim())))
    }
}

fn load_structure(c: &Common) -> Result<SubRiemannianStructure, Failure> {
    let s = match (&c.preset, &c.structure) {
        (Some(name), None) => SubRiemannianStructure::preset(name)?,
        (None, Some(path)) => SubRiemannianStructure::from_toml(&fs::read_to_string(path)?)?,
        _ => return Err(Failure::Parse("give exactly one of --preset or --structure".into())),
    };
    Ok(s)
}

fn setup(c: &Common) -> Result<(), Failure> {
    let workers = match c.workers {
        Some(n) => Some(n),
        None => match std::env::var("SUBWAVE_WORKERS") {
            Ok(v) => Some(v.parse().map_err(|_| Failure::Parse(format!("SUBWAVE_WORKERS must be an integer, got `{v}`")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = workers {
        // ignore the error when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    Ok(())
}

fn dump(c: &Common, s: &SubRiemannianStructure) -> Outcome {
    if let Some(path) = &c.dump {
        fs::write(path, s.to_toml())?;
    }
    Ok(())
}

fn row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt).collect::<Vec<_>>().join("\t")
}

fn header(prefix: &str, n: usize) -> String {
    (0..n).map(|k| format!("{prefix}{k}")).collect::<Vec<_>>().join("\t")
}

fn run(cli: Cli) -> Outcome {
    match cli.verb {
        Verb::Cones { common, x, xi, tau, t, samples, tol_cone } => {
            setup(&common)?;
            let s = load_structure(&common)?;
            let (x, xi) = (parse_vec(&x)?, parse_vec(&xi)?);
            check_dim(&s, &x, "x")?;
            check_dim(&s, &xi, "xi")?;
            let m = ExtendedPoint::new(t, tau, CotangentPoint::new(x, xi));
            let cone = cone_at(&s, &m)?;
            let hull = cone.as_degenerate().map(|c| HullCone::from_fundamental(c, DEFAULT_NZ));
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
            let n = 2 * s.dim() + 2;
            let mut out = Output::new(&common.out);
            let mut table = format!("{}\tclosed_form\tf_hull\tdefect\n", header("v", n));
            let mut inside = 0;
            for k in 0..samples {
                let v = sample_tangent(&cone, &mut rng, k);
                let defect = cone.defect(&v);
                let closed = defect <= tol_cone;
                inside += closed as usize;
                let f = match &hull {
                    Some(h) => (h.contains(&v, 1e-8) as u8).to_string(),
                    None => "-".into(),
                };
                table.push_str(&format!("{}\t{}\t{f}\t{}\n", row(v.iter().cloned()), closed as u8, fmt(defect)));
            }
            dump(&common, &s)?;
            out.file("cones.tsv", &table)?;
            out.summary(&format!("regime {:?}: {inside} of {samples} sampled vectors in the cone", cone.regime()));
            Ok(out.finish()?)
        }
        Verb::Geodesics { common, x, y, xi, time, t_max, starts, dt, tol_residual, tol_len } => {
            setup(&common)?;
            let s = load_structure(&common)?;
            let x = parse_vec(&x)?;
            check_dim(&s, &x, "x")?;
            let mut out = Output::new(&common.out);
            match (y, xi) {
                (Some(y), None) => {
                    let y = parse_vec(&y)?;
                    check_dim(&s, &y, "y")?;
                    let cfg = ShootConfig { dt, tol_residual, tol_len, seed: common.seed, ..Default::default() };
                    let spec = shoot(&s, &x, &y, t_max, starts, &cfg)?;
                    let mut table = format!("length\thits\tresidual\t{}\n", header("xi", s.dim()));
                    for e in &spec.entries {
                        table.push_str(&format!(
                            "{}\t{}\t{}\t{}\n",
                            fmt(e.length),
                            e.hits,
                            fmt(e.residual),
                            row(e.covector.iter().cloned())
                        ));
                    }
                    dump(&common, &s)?;
                    out.file("geodesics.tsv", &table)?;
                    out.summary(&format!(
                        "{} distinct lengths <= {t_max} from {} starts ({} converged, seed {})",
                        spec.entries.len(),
                        spec.budget.n_starts,
                        spec.budget.converged,
                        spec.budget.seed
                    ));
                }
                (None, Some(xi)) => {
                    let xi = parse_vec(&xi)?;
                    check_dim(&s, &xi, "xi")?;
                    let arc = integrate_normal(&s, &CotangentPoint::new(x, xi), time, dt)?;
                    let d = s.dim();
                    let mut table = format!("t\t{}\t{}\n", header("x", d), header("xi", d));
                    for (t, p) in &arc.samples {
                        table.push_str(&format!("{}\t{}\n", fmt(*t), row(p.to_vector().iter().cloned())));
                    }
                    dump(&common, &s)?;
                    out.file("geodesic.tsv", &table)?;
                    out.summary(&format!(
                        "{} samples, length {}, energy drift {}",
                        arc.samples.len(),
                        fmt(arc.length),
                        fmt(arc.max_energy_drift(&s))
                    ));
                }
                _ => return Err(Failure::Parse("give exactly one of --y or --xi".into())),
            }
            Ok(out.finish()?)
        }
        Verb::Abnormal { common, x, y, xi, time, t_max, dt, covectors, tol_hit } => {
            setup(&common)?;
            let s = load_structure(&common)?;
            let x = parse_vec(&x)?;
            check_dim(&s, &x, "x")?;
            let mut out = Output::new(&common.out);
            match (y, xi) {
                (Some(y), None) => {
                    let y = parse_vec(&y)?;
                    check_dim(&s, &y, "y")?;
                    let budget = SingularBudget { t_max, dt, n_covectors: covectors, tol_hit };
                    let r = min_singular_length(&s, &x, &y, &budget)?;
                    let rec = SingularRecord::new(&r);
                    dump(&common, &s)?;
                    out.file("singular.toml", &toml::to_string(&rec).expect("records serialize"))?;
                    out.summary(&match r.length {
                        Some(l) => format!("T_s = {}", fmt(l)),
                        None => format!("T_s = +inf: {}", r.certificate.statement()),
                    });
                }
                (None, Some(xi)) => {
                    let xi = parse_vec(&xi)?;
                    check_dim(&s, &xi, "xi")?;
                    let c = integrate_characteristic(&s, &CotangentPoint::new(x, xi), time, dt, &DirectionPolicy::default())?;
                    let d = s.dim();
                    let mut table = format!("t\t{}\t{}\n", header("x", d), header("xi", d));
                    for (t, p) in &c.samples {
                        table.push_str(&format!("{}\t{}\n", fmt(*t), row(p.to_vector().iter().cloned())));
                    }
                    dump(&common, &s)?;
                    out.file("characteristic.tsv", &table)?;
                    out.summary(&format!(
                        "{} samples, length {}{}",
                        c.samples.len(),
                        fmt(c.length()),
                        if c.collapsed { ", radical collapsed" } else { "" }
                    ));
                }
                _ => return Err(Failure::Parse("give exactly one of --y or --xi".into())),
            }
            Ok(out.finish()?)
        }
        Verb::Reach { common, x, xi, tau, t_min, t_max, dt, dirs, grid_res, max_points } => {
            setup(&common)?;
            let s = load_structure(&common)?;
            let (x, xi) = (parse_vec(&x)?, parse_vec(&xi)?);
            check_dim(&s, &x, "x")?;
            check_dim(&s, &xi, "xi")?;
            let cfg = ReachConfig { dt, n_dirs: dirs, grid_res, max_points, ..Default::default() };
            let r = reach_set(&s, &[(CotangentPoint::new(x, xi), tau)], (t_min, t_max), &cfg)?;
            let d = s.dim();
            let mut table = format!("t\t{}\t{}\tray\tsample\n", header("x", d), header("xi", d));
            for cp in &r.cloud {
                table.push_str(&format!("{}\t{}\t{}\t{}\n", fmt(cp.t), row(cp.pt.to_vector().iter().cloned()), cp.ray, cp.sample));
            }
            dump(&common, &s)?;
            out_and_budget(&common, "reach.tsv", &table, r.cloud.len(), r.segments.len(), r.exhausted)
        }
        Verb::Predict { common, x, y, t_max, starts, covectors } => {
            setup(&common)?;
            let s = load_structure(&common)?;
            let (x, y) = (parse_vec(&x)?, parse_vec(&y)?);
            check_dim(&s, &x, "x")?;
            check_dim(&s, &y, "y")?;
            let budget = PredictBudget {
                n_starts: starts,
                shoot: ShootConfig { seed: common.seed, ..Default::default() },
                singular: SingularBudget { n_covectors: covectors, ..Default::default() },
            };
            let p = predict(&s, &x, &y, t_max, &budget)?;
            let rec = PredictionRecord {
                structure: s.name().to_string(),
                x: p.x.iter().cloned().collect(),
                y: p.y.iter().cloned().collect(),
                ts: SingularRecord::new(&p.singular),
                validity: p.validity,
                lengths: p.lengths.lengths(),
                predicted_times: p.predicted_times.clone(),
                shoot_starts: p.lengths.budget.n_starts,
                shoot_converged: p.lengths.budget.converged,
                seed: common.seed,
            };
            dump(&common, &s)?;
            let mut out = Output::new(&common.out);
            out.file("prediction.toml", &toml::to_string(&rec).expect("records serialize"))?;
            out.summary(&format!(
                "T_s = {}; {} predicted times in (-{}, {})",
                if p.singular.length.is_some() { fmt(p.ts()) } else { "+inf".into() },
                p.predicted_times.len(),
                fmt(p.validity),
                fmt(p.validity)
            ));
            Ok(out.finish()?)
        }
        Verb::Simulate { common, scenario, window, mad_factor } => {
            setup(&common)?;
            let text = fs::read_to_string(&scenario)?;
            let rec = ScenarioRecord::from_toml(&text)?;
            let s = match (&common.preset, &common.structure) {
                (None, None) => rec.structure()?,
                _ => load_structure(&common)?,
            };
            let sc = rec.scenario()?;
            let r = simulate(&s, &sc)?;
            let window = window.unwrap_or_else(|| r.default_window());
            let cfg = DetectorConfig { mad_factor, ..Default::default() };
            let mut series = format!("t\t{}\n", header("probe", r.series.len()));
            for (n, t) in r.times.iter().enumerate() {
                series.push_str(&format!("{}\t{}\n", fmt(*t), row(r.series.iter().map(|v| v[n]))));
            }
            let mut arrivals = String::from("probe\ttime\tprominence\n");
            let mut count = 0;
            for (k, ser) in r.series.iter().enumerate() {
                for a in subwave::wavekernel::detect_singularities(ser, r.dt, window, &cfg) {
                    arrivals.push_str(&format!("{k}\t{}\t{}\n", fmt(a.time), fmt(a.prominence)));
                    count += 1;
                }
            }
            dump(&common, &s)?;
            let mut out = Output::new(&common.out);
            out.file("series.tsv", &series)?;
            out.file("arrivals.tsv", &arrivals)?;
            out.summary(&format!(
                "{} steps of dt = {}, energy drift {}, {count} arrivals detected (window {})",
                r.times.len() - 1,
                fmt(r.dt),
                fmt(r.energy_drift),
                fmt(window)
            ));
            Ok(out.finish()?)
        }
        Verb::Verify { common, points, queries, tol_identity } => {
            setup(&common)?;
            let s = load_structure(&common)?;
            let report = verify::run(&s, points, queries, tol_identity, common.seed)?;
            dump(&common, &s)?;
            let mut out = Output::new(&common.out);
            out.file("verify.tsv", &report.table)?;
            out.summary(&report.summary);
            out.finish()?;
            if report.passed {
                Ok(())
            } else {
                Err(Failure::Verify(report.summary))
            }
        }
    }
}

fn out_and_budget(common: &Common, name: &str, table: &str, points: usize, rays: usize, exhausted: bool) -> Outcome {
    let mut out = Output::new(&common.out);
    out.file(name, table)?;
    out.summary(&format!("{points} cloud points from {rays} ray segments{}", if exhausted { " (budget exhausted)" } else { "" }));
    out.finish()?;
    if exhausted {
        Err(Failure::Budget("max_points reached; partial cloud written".into()))
    } else {
        Ok(())
    }
}

/// Sample tangent vectors near the cone: mostly cone elements plus perturbed ones.
fn sample_tangent(cone: &ConeRep, rng: &mut ChaCha8Rng, k: usize) -> DVector<f64> {
    let n = match cone {
        ConeRep::HalfLine(h) => h.direction.len(),
        ConeRep::Degenerate(c) => 2 * c.dim() + 2,
    };
    let mut base = match cone {
        ConeRep::HalfLine(h) => h.direction.normalize() * rng.random_range(0.0..2.0),
        ConeRep::Degenerate(c) => {
            let mut v = DVector::zeros(n);
            v[0] = 1.0;
            let p = &c.perp_basis;
            if p.ncols() > 0 {
                let coef = DVector::from_fn(p.ncols(), |_, _| rng.random_range(-1.0..1.0));
                let b = p * coef;
                let sp = c.speed_sq(&b).sqrt();
                if sp > 0.0 && sp.is_finite() {
                    let target = rng.random_range(0.0..1.5);
                    v.rows_mut(2, n - 2).copy_from(&(b * (target / sp)));
                }
            }
            v
        }
    };
    if k % 2 == 1 {
        base += DVector::from_fn(n, |_, _| rng.random_range(-0.1..0.1));
    }
    base
}

#[derive(Serialize)]
struct SingularRecord {
    /// Absent when no singular curve was found within the budget.
    length: Option<f64>,
    infinite: bool,
    covector: Option<Vec<f64>>,
    /// Budget statement backing an infinite value.
    certificate: Option<String>,
    curves_traced: usize,
}

impl SingularRecord {
    fn new(r: &subwave::abnormal::SingularLength) -> Self {
        Self {
            length: r.length,
            infinite: r.length.is_none(),
            covector: r.covector.as_ref().map(|c| c.iter().cloned().collect()),
            certificate: r.length.is_none().then(|| r.certificate.statement()),
            curves_traced: r.certificate.curves_traced,
        }
    }
}

#[derive(Serialize)]
struct PredictionRecord {
    structure: String,
    x: Vec<f64>,
    y: Vec<f64>,
    validity: f64,
    lengths: Vec<f64>,
    predicted_times: Vec<f64>,
    shoot_starts: usize,
    shoot_converged: usize,
    seed: u64,
    ts: SingularRecord,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Verify(m) => (1, m),
                Failure::Parse(m) => (2, m),
                Failure::Domain(m) => (3, m),
                Failure::Budget(m) => (4, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
