//! One function per subcommand. Each parses and validates its flags, calls the
//! library, and returns an [`Artifact`]; nothing is written here.

use std::path::Path;
use std::sync::Arc;

use heavytail::estimate::{calibrate, choose_grouping, estimate_alpha, hill_estimate, Grouping};
use heavytail::gradnoise::{
    load_csv, load_idx, measure_run, synth_dataset, Activation, Dataset, Loss, MeasureConfig, Mlp, SynthSpec,
};
use heavytail::meta::{exit_law_check, exit_times, generator, occupation, stationary, ExitConfig, ExitMode, Landscape1D};
use heavytail::sde::{
    epsilon_from_sigma, flat_valley_experiment, levy_path, make_product_valley, simulate, CriticalPointPotential,
    DriftMode, Potential, Quadratic, SdeConfig, Trajectory,
};
use heavytail::stable::{sample, StableParams};
use serde_json::{json, Map, Value};

use crate::args::{parse_list, RunConfig, UsageError};
use crate::output::{Artifact, Cell};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(heavytail::Error),
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<heavytail::Error> for CliError {
    fn from(e: heavytail::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CmdResult = Result<Artifact, CliError>;

pub fn dispatch(cfg: &RunConfig) -> CmdResult {
    match cfg.subcommand.as_str() {
        "sample" => cmd_sample(cfg),
        "estimate" => cmd_estimate(cfg),
        "calibrate" => cmd_calibrate(cfg),
        "simulate" => cmd_simulate(cfg),
        "levy-path" => cmd_levy_path(cfg),
        "exit-times" => cmd_exit_times(cfg),
        "occupation" => cmd_occupation(cfg),
        "generator" => cmd_generator(cfg),
        "flat-valley" => cmd_flat_valley(cfg),
        "measure" => cmd_measure(cfg),
        other => Err(CliError::Usage(format!("unknown subcommand `{other}`"))),
    }
}

/// Output format each subcommand uses when `--format` is absent.
pub fn default_format(sub: &str) -> &'static str {
    match sub {
        "estimate" | "generator" => "json",
        _ => "csv",
    }
}

fn reals(xs: &[f64]) -> Vec<Cell> {
    xs.iter().map(|&x| Cell::Real(x)).collect()
}

fn cmd_sample(cfg: &RunConfig) -> CmdResult {
    let params = StableParams::new(cfg.required("alpha")?, cfg.or("sigma", 1.0)?)?;
    let n: usize = cfg.required("n")?;
    let batch = sample(params, n, cfg.seed()?)?;
    Ok(Artifact::Table {
        header: None,
        rows: batch.values().iter().map(|&x| vec![Cell::Real(x)]).collect(),
    })
}

/// Reals separated by whitespace or commas; lines starting with `#` are skipped.
fn read_reals(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        if !line.trim_start().starts_with('#') {
            for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                let at = offset + (tok.as_ptr() as usize - line.as_ptr() as usize) as u64;
                out.push(tok.parse().map_err(|_| heavytail::Error::Format {
                    offset: at,
                    reason: format!("`{tok}` is not a number"),
                })?);
            }
        }
        offset += line.len() as u64;
    }
    Ok(out)
}

fn cmd_estimate(cfg: &RunConfig) -> CmdResult {
    let path: String = cfg.required("in")?;
    let k1: Option<usize> = cfg.get("k1")?;
    let k2: Option<usize> = cfg.get("k2")?;
    let hill_k: Option<usize> = cfg.get("hill-k")?;
    let x = read_reals(Path::new(&path))?;
    let grouping = match (k1, k2) {
        (Some(a), Some(b)) => Grouping::new(a, b)?,
        (None, None) => choose_grouping(x.len())?,
        _ => return Err(CliError::Usage("give both `--k1` and `--k2`, or neither".into())),
    };
    let est = estimate_alpha(&x, &grouping)?;
    let mut m = Map::new();
    m.insert("alpha_hat".into(), json!(est.alpha_hat));
    m.insert("inv_alpha_hat".into(), json!(est.inv_alpha_hat));
    m.insert("k".into(), json!(grouping.total()));
    m.insert("k1".into(), json!(grouping.group_size()));
    m.insert("k2".into(), json!(grouping.group_count()));
    m.insert("dropped".into(), json!(est.dropped));
    m.insert("out_of_range".into(), json!(est.out_of_range));
    if let Some(k) = hill_k {
        m.insert("hill_alpha".into(), json!(hill_estimate(&x, k)?));
    }
    Ok(Artifact::Json(m))
}

fn cmd_calibrate(cfg: &RunConfig) -> CmdResult {
    let alphas = cfg.list("alphas")?.map_or_else(|| parse_list("0.02:2.0:100").map_err(UsageError), Ok)?;
    let rows = calibrate(
        &alphas,
        cfg.or("k1", 100)?,
        cfg.or("k2", 1000)?,
        cfg.or("reps", 100)?,
        cfg.seed()?,
    )?;
    Ok(Artifact::table(
        &["alpha", "mean_alpha_hat", "std_alpha_hat", "mae"],
        rows.iter()
            .map(|r| reals(&[r.alpha, r.mean_alpha_hat, r.std_alpha_hat, r.mae]))
            .collect(),
    ))
}

fn drift(cfg: &RunConfig) -> Result<DriftMode, CliError> {
    match cfg.raw("drift").unwrap_or("stabilized") {
        "stabilized" => Ok(DriftMode::Stabilized),
        "explicit" => Ok(DriftMode::Explicit),
        other => Err(CliError::Usage(format!("`--drift` must be stabilized or explicit, got `{other}`"))),
    }
}

/// `double-well:M1,M2`, `quadratic:DIM`, `product-valley` or
/// `critical-points:C1,C2,...`, with the default starting point.
fn parse_potential(spec: &str) -> Result<(Arc<dyn Potential>, Option<Vec<f64>>), CliError> {
    let (name, arg) = spec.split_once(':').map_or((spec, None), |(a, b)| (a, Some(b)));
    let nums = |a: Option<&str>| -> Result<Vec<f64>, CliError> {
        let a = a.ok_or_else(|| CliError::Usage(format!("potential `{name}` needs arguments")))?;
        parse_list(a).map_err(|e| CliError::Usage(format!("`--potential`: {e}")))
    };
    match name {
        "double-well" => {
            let m = arg.map_or(Ok(vec![-1.0, 2.0]), |a| nums(Some(a)))?;
            if m.len() != 2 {
                return Err(CliError::Usage("double-well takes two minima M1,M2".into()));
            }
            let p = heavytail::sde::make_double_well(m[0], m[1])?;
            Ok((Arc::new(p), Some(vec![m[0]])))
        }
        "critical-points" => {
            let pts = nums(arg)?;
            let p = CriticalPointPotential::new(&pts)?;
            Ok((Arc::new(p), Some(vec![pts[0]])))
        }
        "quadratic" => {
            let dim: usize = arg
                .unwrap_or("1")
                .parse()
                .map_err(|_| CliError::Usage("quadratic takes an integer dimension".into()))?;
            if dim == 0 {
                return Err(heavytail::Error::Domain {
                    field: "potential",
                    reason: "dimension must be at least 1".into(),
                }
                .into());
            }
            Ok((Arc::new(Quadratic { dim }), Some(vec![0.0; dim])))
        }
        "product-valley" => Ok((Arc::new(make_product_valley()), None)),
        _ => Err(CliError::Usage(format!(
            "unknown potential `{name}` (double-well, critical-points, quadratic, product-valley)"
        ))),
    }
}

fn trajectory_table(traj: &Trajectory, prefix: &str) -> Artifact {
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.dim()).map(|i| format!("{prefix}{i}")));
    let rows = traj
        .times()
        .iter()
        .zip(traj.states())
        .map(|(t, w)| {
            let mut r = vec![Cell::Real(*t)];
            r.extend(reals(w));
            r
        })
        .collect();
    Artifact::Table {
        header: Some(header),
        rows,
    }
}

fn cmd_simulate(cfg: &RunConfig) -> CmdResult {
    let (potential, default_w0) = parse_potential(cfg.raw("potential").unwrap_or("double-well:-1,2"))?;
    let alpha: f64 = cfg.required("alpha")?;
    let eta: f64 = cfg.or("eta", 1e-3)?;
    let epsilon = match (cfg.get::<f64>("epsilon")?, cfg.get::<f64>("sigma")?) {
        (Some(e), None) => e,
        (None, Some(s)) => epsilon_from_sigma(s, eta, alpha),
        (None, None) => return Err(CliError::Usage("missing required flag `--epsilon` (or `--sigma`)".into())),
        (Some(_), Some(_)) => return Err(CliError::Usage("give `--epsilon` or `--sigma`, not both".into())),
    };
    let w0 = match (cfg.list("w0")?, default_w0) {
        (Some(w), _) | (None, Some(w)) => w,
        (None, None) => return Err(CliError::Usage("this potential needs `--w0`".into())),
    };
    let mut sde = SdeConfig::new(potential, alpha, epsilon, eta, cfg.required("steps")?, w0, cfg.seed()?);
    sde.thinning = cfg.get("thin")?;
    sde.drift = drift(cfg)?;
    Ok(trajectory_table(&simulate(&sde)?, "w"))
}

fn cmd_levy_path(cfg: &RunConfig) -> CmdResult {
    let traj = levy_path(
        cfg.required("alpha")?,
        cfg.or("dim", 1)?,
        cfg.required("horizon")?,
        cfg.required("dt")?,
        cfg.seed()?,
    )?;
    Ok(trajectory_table(&traj, "x"))
}

fn landscape(cfg: &RunConfig) -> Result<Landscape1D, CliError> {
    Ok(Landscape1D::new(cfg.required_list("minima")?, cfg.required_list("saddles")?)?)
}

fn cmd_exit_times(cfg: &RunConfig) -> CmdResult {
    let land = landscape(cfg)?;
    let alpha: f64 = cfg.required("alpha")?;
    let mut ec = ExitConfig::new(land.clone(), alpha, cfg.required("epsilon")?, cfg.or("reps", 100)?, cfg.seed()?);
    ec.eta = cfg.or("eta", ec.eta)?;
    ec.delta = cfg.get("delta")?;
    ec.source = cfg.or("source", 0)?;
    ec.max_steps = cfg.or("max-steps", ec.max_steps)?;
    ec.drift = drift(cfg)?;
    ec.mode = match cfg.raw("mode").unwrap_or("transition") {
        "transition" => ExitMode::Transition,
        "first-exit" => ExitMode::FirstExit,
        other => return Err(CliError::Usage(format!("`--mode` must be transition or first-exit, got `{other}`"))),
    };
    let stats = exit_times(&ec)?;
    let scale = stats.epsilon.powf(stats.alpha);
    let rows: Vec<Vec<Cell>> = stats
        .samples
        .iter()
        .enumerate()
        .map(|(r, s)| {
            vec![
                Cell::Int(r as u64),
                Cell::Real(s.time),
                Cell::Real(s.time * scale),
                s.destination.map_or(Cell::Text(String::new()), |d| Cell::Int(d as u64)),
                Cell::Int(s.censored as u64),
            ]
        })
        .collect();
    if cfg.raw("format") == Some("json") {
        let q = generator(&land, alpha)?;
        let mut m = Map::new();
        m.insert("delta".into(), json!(stats.delta));
        m.insert("mean_time".into(), json!(stats.mean_time()));
        m.insert("mean_time_lower_bound".into(), json!(stats.mean_time_lower_bound()));
        m.insert("censored".into(), json!(stats.censored_count()));
        m.insert("samples".into(), serde_json::to_value(&stats.samples).expect("serializable"));
        m.insert(
            "exit_law".into(),
            exit_law_check(&stats, &q).map_or(Value::Null, |r| serde_json::to_value(r).expect("serializable")),
        );
        return Ok(Artifact::Json(m));
    }
    Ok(Artifact::table(&["replica", "time", "scaled_time", "destination", "censored"], rows))
}

fn cmd_occupation(cfg: &RunConfig) -> CmdResult {
    let land = landscape(cfg)?;
    let alpha: f64 = cfg.required("alpha")?;
    let pi = stationary(&generator(&land, alpha)?)?.pi;
    let frac = occupation(
        &land,
        alpha,
        cfg.required("epsilon")?,
        cfg.or("eta", 1e-3)?,
        cfg.required("steps")?,
        cfg.or("start", 0)?,
        cfg.seed()?,
    )?;
    Ok(Artifact::table(
        &["valley", "fraction", "pi"],
        frac.iter()
            .zip(&pi)
            .enumerate()
            .map(|(i, (f, p))| vec![Cell::Int(i as u64), Cell::Real(*f), Cell::Real(*p)])
            .collect(),
    ))
}

fn cmd_generator(cfg: &RunConfig) -> CmdResult {
    let land = landscape(cfg)?;
    let q = generator(&land, cfg.required("alpha")?)?;
    let st = stationary(&q)?;
    let mut m = Map::new();
    m.insert("alpha".into(), json!(q.alpha()));
    m.insert("minima".into(), json!(land.minima()));
    m.insert("saddles".into(), json!(land.saddles()));
    m.insert("q".into(), json!(q.rows()));
    m.insert("pi".into(), json!(st.pi));
    m.insert("residual".into(), json!(st.residual));
    Ok(Artifact::Json(m))
}

fn cmd_flat_valley(cfg: &RunConfig) -> CmdResult {
    let alphas = cfg.list("alphas")?.unwrap_or_else(|| vec![0.5, 1.0, 1.5, 2.0]);
    let rows = flat_valley_experiment(
        &alphas,
        cfg.or("epsilon", 0.01)?,
        cfg.or("eta", 0.01)?,
        cfg.or("steps", 10_000)?,
        cfg.or("inits", 500)?,
        cfg.seed()?,
    )?;
    Ok(Artifact::table(
        &[
            "alpha",
            "width_mean",
            "width_median",
            "width_q1",
            "width_q3",
            "curvature_mean",
            "curvature_median",
            "curvature_q1",
            "curvature_q3",
        ],
        rows.iter()
            .map(|r| {
                let (w, c) = (r.width, r.curvature);
                reals(&[r.alpha, w.mean, w.median, w.q1, w.q3, c.mean, c.median, c.q1, c.q3])
            })
            .collect(),
    ))
}

fn dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let sources = ["data", "idx-images", "csv"].iter().filter(|k| cfg.raw(k).is_some()).count();
    if sources > 1 {
        return Err(CliError::Usage("give only one of `--data`, `--idx-images`/`--idx-labels`, `--csv`".into()));
    }
    let data = if let Some(img) = cfg.raw("idx-images") {
        let lab: String = cfg.required("idx-labels")?;
        load_idx(Path::new(img), Path::new(&lab))?
    } else if let Some(path) = cfg.raw("csv") {
        load_csv(Path::new(path))?
    } else {
        let spec: SynthSpec = cfg.raw("data").unwrap_or("blobs").parse()?;
        let seed = cfg.or("data-seed", cfg.seed()?)?;
        synth_dataset(cfg.or("n", 10_000)?, cfg.or("d", 20)?, cfg.or("classes", 10)?, spec, seed)?
    };
    match cfg.get::<usize>("subsample")? {
        Some(n) => Ok(data.subsample(n, cfg.seed()?)?),
        None => Ok(data),
    }
}

fn cmd_measure(cfg: &RunConfig) -> CmdResult {
    let hidden: Vec<usize> = match cfg.raw("hidden").unwrap_or("none") {
        "none" | "" => vec![],
        h => h
            .split(',')
            .map(|x| x.trim().parse().map_err(|_| CliError::Usage(format!("bad layer width `{x}`"))))
            .collect::<Result<_, _>>()?,
    };
    let activation = match cfg.raw("activation").unwrap_or("relu") {
        "relu" => Activation::Relu,
        "tanh" => Activation::Tanh,
        other => return Err(CliError::Usage(format!("`--activation` must be relu or tanh, got `{other}`"))),
    };
    let loss = match cfg.raw("loss").unwrap_or("nll") {
        "nll" => Loss::Nll,
        "hinge" => Loss::Hinge,
        other => return Err(CliError::Usage(format!("`--loss` must be nll or hinge, got `{other}`"))),
    };
    let mc = MeasureConfig {
        b: cfg.or("b", 500)?,
        eta: cfg.or("eta", 0.1)?,
        iterations: cfg.or("iterations", 1000)?,
        log_every: cfg.or("log-every", 100)?,
        seed: cfg.seed()?,
    };
    let data = dataset(cfg)?;
    let classes = data.num_classes().max(2);
    let model = Mlp::new(data.dim(), hidden, classes, activation, loss)?;
    let rows = measure_run(&model, &data, &mc)?;
    Ok(Artifact::table(
        &["iteration", "loss", "accuracy", "alpha_hat", "k1", "k2"],
        rows.iter()
            .map(|r| {
                vec![
                    Cell::Int(r.iteration),
                    Cell::Real(r.loss),
                    Cell::Real(r.accuracy),
                    Cell::Real(r.alpha_hat),
                    Cell::Int(r.k1 as u64),
                    Cell::Int(r.k2 as u64),
                ]
            })
            .collect(),
    ))
}
