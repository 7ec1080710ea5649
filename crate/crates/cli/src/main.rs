use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde_json::json;

use franks_core::factorization::decompose_near_identity_with;
use franks_core::flow::{poincare_map, PoincareOptions, DEFAULT_STEP};
use franks_core::flowbox::{build_flowbox_chart, CoordinateLeafChart, Section};
use franks_core::hamiltonian::{FieldDescriptor, Hamiltonian};
use franks_core::io::{
    coordinate_names, parse_point, trajectory_csv, FactorizationJson, MatrixJson, PerturbedHamiltonianJson,
    PerturbedMapJson,
};
use franks_core::norms::ball_samples;
use franks_core::realization::{
    realize_continuous, realize_discrete, AffinePoissonMap, IdentityMap, KFlowMap, PoissonMap, RealizeOptions,
};
use franks_core::report::VerificationReport;
use franks_core::suites::{check_field, flowbox_checks, run_suite, trial_rng, verify_perturbed_hamiltonian, verify_perturbed_map, SuiteConfig};
use franks_core::poisson::PoissonLinearMap;
use franks_core::FranksError;

#[derive(Parser)]
#[command(name = "franks", version, about = "Realize prescribed derivatives by small Poisson perturbations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Suite configuration JSON; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the main output here instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseMap {
    Identity,
    KFlow,
    Linear,
}

#[derive(Subcommand)]
enum Command {
    /// Factor a near-identity symplectic matrix into conjugated plane rotations.
    Decompose {
        #[arg(long)]
        target: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate a Hamiltonian flow and write the trajectory as CSV.
    Flow {
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long)]
        x0: PathBuf,
        #[arg(long)]
        time: f64,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
        /// Keep every k-th step.
        #[arg(long, default_value_t = 1)]
        every: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Return map to {x1 = section} and its transversal derivative.
    Poincare {
        #[arg(long)]
        hamiltonian: PathBuf,
        /// Start point; the origin if omitted.
        #[arg(long)]
        x0: Option<PathBuf>,
        #[arg(long)]
        section: f64,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
        #[arg(long, default_value_t = 10.0)]
        t_max: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Perturb a Poisson map near a point so its derivative picks up the target.
    RealizeMap {
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, value_enum, default_value_t = BaseMap::Identity)]
        base: BaseMap,
        /// Matrix JSON for `--base linear`.
        #[arg(long)]
        base_matrix: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        kflow_alpha: f64,
        /// Perturbation point; the origin if omitted.
        #[arg(long)]
        point: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Build a Hamiltonian whose return map derivative is the target.
    RealizeFlow {
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Flowbox chart around a regular point; report plus optional sample table.
    Flowbox {
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long)]
        base: PathBuf,
        /// Section normal; the x1 direction if omitted.
        #[arg(long)]
        normal: Option<PathBuf>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        /// Write a CSV of sample points and their chart images.
        #[arg(long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Gradient, Hessian and support checks for a field descriptor.
    Check {
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run a verification suite: factorization, generators, flows,
    /// realize-discrete, realize-continuous, flowbox or all.
    RunSuite {
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    /// Bad input: exit 2.
    Usage(String),
    /// The computation ran but failed or a check did not pass: exit 1.
    Fail(String),
}

impl From<FranksError> for Failure {
    fn from(e: FranksError) -> Self {
        match e {
            FranksError::Config(_) | FranksError::UnknownSuite(_) | FranksError::DimensionMismatch { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Fail(e.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_point(path: &Path) -> Result<DVector<f64>, Failure> {
    parse_point(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(common: &Common, text: &str) -> Result<(), Failure> {
    match &common.out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(common: &Common, value: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("values serialize");
    text.push('\n');
    emit(common, &text)
}

fn config(common: &Common) -> Result<SuiteConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => SuiteConfig::from_json(&read(p)?).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => SuiteConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn field(path: &Path) -> Result<(FieldDescriptor, Arc<dyn Hamiltonian>), Failure> {
    let desc: FieldDescriptor = read_json(path)?;
    let h = desc.build().map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok((desc, h))
}

fn report_summary(report: &VerificationReport) {
    eprint!("{report}");
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Decompose { target, common } => {
            let cfg = config(&common)?;
            let m: MatrixJson = read_json(&target)?;
            let a = m.symplectic()?;
            let f = decompose_near_identity_with(&a, &cfg.decompose)?;
            emit_json(&common, &serde_json::to_value(FactorizationJson::from(&f)).expect("serializes"))?;
            Ok(true)
        }
        Command::Flow {
            hamiltonian,
            x0,
            time,
            step,
            every,
            common,
        } => {
            let (_, h) = field(&hamiltonian)?;
            let x0 = read_point(&x0)?;
            emit(&common, &trajectory_csv(h.as_ref(), &x0, time, step, every)?)?;
            Ok(true)
        }
        Command::Poincare {
            hamiltonian,
            x0,
            section,
            step,
            t_max,
            common,
        } => {
            let (_, h) = field(&hamiltonian)?;
            let x0 = match x0 {
                Some(p) => read_point(&p)?,
                None => DVector::zeros(h.space().dim()),
            };
            let opts = PoincareOptions {
                step,
                t_max,
                ..PoincareOptions::default()
            };
            let res = poincare_map(h.as_ref(), &x0, section, &opts)?;
            let rows: Vec<Vec<f64>> = res.jacobian.row_iter().map(|r| r.iter().copied().collect()).collect();
            emit_json(
                &common,
                &json!({
                    "hit": res.hit.as_slice(),
                    "tau": res.tau,
                    "section_residual": res.section_residual,
                    "jacobian": rows,
                }),
            )?;
            Ok(true)
        }
        Command::RealizeMap {
            target,
            rho,
            base,
            base_matrix,
            kflow_alpha,
            point,
            common,
        } => {
            let cfg = config(&common)?;
            let m: MatrixJson = read_json(&target)?;
            let space = m.space()?;
            let a = m.symplectic()?;
            let f: Arc<dyn PoissonMap> = match base {
                BaseMap::Identity => Arc::new(IdentityMap(space)),
                BaseMap::KFlow => Arc::new(KFlowMap {
                    space,
                    alpha: kflow_alpha,
                    i: 1,
                }),
                BaseMap::Linear => {
                    let path = base_matrix.ok_or_else(|| Failure::Usage("--base linear needs --base-matrix".into()))?;
                    let b: MatrixJson = read_json(&path)?;
                    if b.space()? != space {
                        return Err(Failure::Usage("base matrix and target have different (d, n)".into()));
                    }
                    let linear = PoissonLinearMap::new(b.matrix()?, space, 1e-10)?;
                    Arc::new(AffinePoissonMap {
                        linear,
                        offset: DVector::zeros(space.dim()),
                    })
                }
            };
            let p = match point {
                Some(path) => read_point(&path)?,
                None => DVector::zeros(space.dim()),
            };
            let opts = RealizeOptions {
                chart: None,
                decompose: cfg.decompose,
            };
            let g = realize_discrete(f, None, &p, &a, rho, &opts)?;
            let report = verify_perturbed_map(&g, &cfg);
            report_summary(&report);
            emit_json(&common, &json!({ "map": PerturbedMapJson::from(&g), "report": report }))?;
            Ok(report.pass)
        }
        Command::RealizeFlow { target, rho, common } => {
            let cfg = config(&common)?;
            let m: MatrixJson = read_json(&target)?;
            let a = m.symplectic()?;
            let h = realize_continuous(&a, rho, m.n, &cfg.decompose)?;
            let report = verify_perturbed_hamiltonian(&h, &cfg);
            report_summary(&report);
            emit_json(
                &common,
                &json!({ "hamiltonian": PerturbedHamiltonianJson::from(&h), "report": report }),
            )?;
            Ok(report.pass)
        }
        Command::Flowbox {
            hamiltonian,
            base,
            normal,
            radius,
            samples,
            table,
            common,
        } => {
            let mut cfg = config(&common)?;
            if let Some(r) = radius {
                cfg.flowbox.radius = r;
            }
            if let Some(s) = samples {
                cfg.flowbox.samples = s;
            }
            let (_, h) = field(&hamiltonian)?;
            let x = read_point(&base)?;
            let section = match normal {
                Some(path) => Section {
                    point: x.clone(),
                    normal: read_point(&path)?,
                },
                None => Section::coordinate(x.clone()),
            };
            let chart = build_flowbox_chart(h.clone(), &x, section, Box::new(CoordinateLeafChart), cfg.flowbox.chart)?;
            let mut report = VerificationReport::new("flowbox");
            if let Err(e) = flowbox_checks(&cfg, "chart", &chart, 810, &mut report) {
                report.push_error("chart/construction", &e);
            }
            report.set_env("seed", cfg.seed);
            report.set_env("radius", cfg.flowbox.radius);
            if let Some(path) = table {
                let space = h.space();
                let names = coordinate_names(&space);
                let mut csv = names.join(",");
                for n in &names {
                    csv.push_str(&format!(",g_{n}"));
                }
                csv.push_str(",H,G\n");
                let mut rng = trial_rng(cfg.seed, 811, 0);
                for m in ball_samples(&x, cfg.flowbox.radius, cfg.flowbox.samples, &mut rng) {
                    let y = chart.forward(&m)?;
                    let cells: Vec<String> = m
                        .iter()
                        .chain(y.iter())
                        .map(f64::to_string)
                        .chain([h.value(&m).to_string(), chart.g_value(&m)?.to_string()])
                        .collect();
                    csv.push_str(&cells.join(","));
                    csv.push('\n');
                }
                fs::write(&path, csv).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            }
            report_summary(&report);
            emit(&common, &(report.to_json() + "\n"))?;
            Ok(report.pass)
        }
        Command::Check {
            hamiltonian,
            samples,
            tol,
            common,
        } => {
            let cfg = config(&common)?;
            let desc: FieldDescriptor = read_json(&hamiltonian)?;
            let report = check_field(&desc, cfg.seed, samples, tol);
            report_summary(&report);
            emit(&common, &(report.to_json() + "\n"))?;
            Ok(report.pass)
        }
        Command::RunSuite { name, common } => {
            let cfg = config(&common)?;
            let report = run_suite(&name, &cfg)?;
            report_summary(&report);
            emit(&common, &(report.to_json() + "\n"))?;
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Fail(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
