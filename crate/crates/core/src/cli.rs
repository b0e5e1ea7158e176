//! Batch harness behind the `qtraj` binary.
//!
//! A run config is line-oriented `key = value` text. Top-level keys set the
//! protocol and the integration grid; a `[<protocol>]` section holds the
//! model parameters. `#` starts a comment.
//!
//! ```text
//! protocol = ensemble
//! duration = 4
//! dt = 0.001
//! n_trajectories = 2000
//! master_seed = 7
//!
//! [ensemble]
//! gamma_d = 1
//! eta = 0.4
//! ```
//!
//! Every output file is produced in memory in trajectory order and written
//! from one thread, so the bytes on disk do not depend on `--jobs`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};

use crate::analysis::{bloch_vector, max_abs_gap, phase_error_stats, survival_fit, wigner, GridSpec};
use crate::error::Error;
use crate::feedback::{
    analytic_half_parity_fidelity, kerr_cat_stabilization, kerr_eigen_residual, mean_canonical_tv, phase_ensemble,
    psi_plus, run_half_parity, run_rabi, zeno_blockade, zeno_retention, AdaptivePhaseConfig, BlockadeConfig,
    KerrCatSetup, PhaseReceiver, RabiConfig, ZenoDragConfig,
};
use crate::hilbert::{cat_state, coherent_state, pauli, Axis, CatParity, DensityMatrix, SpaceShape, C64};
use crate::sme::{
    lindblad_evolve, run_ensemble, simulate_trajectory, trajectory_seed, EnsembleMean, Integrator, LindbladModel,
    MeasurementChannel, SimOptions, TrajectoryRecord,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    Trajectory,
    Ensemble,
    Rabi,
    HalfParity,
    Phase,
    ZenoDrag,
    ZenoBlockade,
    KerrCat,
    Wigner,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Trajectory => "trajectory",
            Protocol::Ensemble => "ensemble",
            Protocol::Rabi => "rabi",
            Protocol::HalfParity => "halfparity",
            Protocol::Phase => "phase",
            Protocol::ZenoDrag => "zeno-drag",
            Protocol::ZenoBlockade => "zeno-blockade",
            Protocol::KerrCat => "kerrcat",
            Protocol::Wigner => "wigner",
        }
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "trajectory" => Protocol::Trajectory,
            "ensemble" => Protocol::Ensemble,
            "rabi" => Protocol::Rabi,
            "halfparity" => Protocol::HalfParity,
            "phase" => Protocol::Phase,
            "zeno-drag" => Protocol::ZenoDrag,
            "zeno-blockade" => Protocol::ZenoBlockade,
            "kerrcat" => Protocol::KerrCat,
            "wigner" => Protocol::Wigner,
            _ => return Err(format!("unknown protocol `{s}`")),
        })
    }
}

/// Config problem; `line` is 1-based, 0 when no line applies.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line, message: message.into() }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "{}", self.message)
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Numerical(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Numerical(e)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub duration: Option<f64>,
    pub dt: Option<f64>,
    pub n_trajectories: Option<usize>,
    pub master_seed: u64,
    pub thinning: Option<usize>,
    pub out: Option<PathBuf>,
    pub write_records: bool,
    /// Keys of the protocol section, in file order.
    pub params: Vec<Entry>,
    section_line: usize,
}

fn parse_value<T: FromStr>(e: &Entry) -> Result<T, ConfigError> {
    e.value.parse().map_err(|_| ConfigError::at(e.line, format!("cannot parse `{}` for `{}`", e.value, e.key)))
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut top: Vec<Entry> = Vec::new();
    let mut params: Vec<Entry> = Vec::new();
    let mut section: Option<(String, usize)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(name) = s.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line, "unterminated section header"))?
                .trim();
            if section.is_some() {
                return Err(ConfigError::at(line, "only one section is allowed"));
            }
            section = Some((name.to_string(), line));
            continue;
        }
        let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::at(line, "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::at(line, "empty key"));
        }
        let bucket = if section.is_some() { &mut params } else { &mut top };
        if let Some(prev) = bucket.iter().find(|e| e.key == k) {
            return Err(ConfigError::at(line, format!("duplicate key `{k}` (first on line {})", prev.line)));
        }
        bucket.push(Entry { key: k.to_string(), value: v.to_string(), line });
    }
    let proto_entry =
        top.iter().find(|e| e.key == "protocol").ok_or_else(|| ConfigError::at(0, "missing `protocol` key"))?;
    let protocol: Protocol = proto_entry.value.parse().map_err(|m: String| ConfigError::at(proto_entry.line, m))?;
    let mut section_line = 0;
    if let Some((name, line)) = &section {
        if name != protocol.name() {
            return Err(ConfigError::at(*line, format!("section [{name}] does not match protocol `{}`", protocol.name())));
        }
        section_line = *line;
    }
    let mut cfg = RunConfig {
        protocol,
        duration: None,
        dt: None,
        n_trajectories: None,
        master_seed: 0,
        thinning: None,
        out: None,
        write_records: true,
        params,
        section_line,
    };
    for e in &top {
        match e.key.as_str() {
            "protocol" => {}
            "duration" => cfg.duration = Some(parse_value(e)?),
            "dt" => cfg.dt = Some(parse_value(e)?),
            "n_trajectories" => cfg.n_trajectories = Some(parse_value(e)?),
            "master_seed" => cfg.master_seed = parse_value(e)?,
            "thinning" => cfg.thinning = Some(parse_value(e)?),
            "out" => cfg.out = Some(PathBuf::from(&e.value)),
            "write_records" => cfg.write_records = parse_value(e)?,
            other => return Err(ConfigError::at(e.line, format!("unknown key `{other}`"))),
        }
    }
    Ok(cfg)
}

impl RunConfig {
    /// Normalized config text; re-running it reproduces the outputs.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "protocol = {}", self.protocol.name());
        if let Some(x) = self.duration {
            let _ = writeln!(s, "duration = {x}");
        }
        if let Some(x) = self.dt {
            let _ = writeln!(s, "dt = {x}");
        }
        if let Some(x) = self.n_trajectories {
            let _ = writeln!(s, "n_trajectories = {x}");
        }
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        if let Some(x) = self.thinning {
            let _ = writeln!(s, "thinning = {x}");
        }
        let _ = writeln!(s, "write_records = {}", self.write_records);
        let _ = writeln!(s, "\n[{}]", self.protocol.name());
        for e in &self.params {
            let _ = writeln!(s, "{} = {}", e.key, e.value);
        }
        s
    }
}

/// Tracks which section keys a protocol consumed.
struct Params<'a> {
    entries: &'a [Entry],
    used: Vec<bool>,
}

impl<'a> Params<'a> {
    fn new(entries: &'a [Entry]) -> Self {
        Params { entries, used: vec![false; entries.len()] }
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<(T, usize)>, ConfigError> {
        match self.entries.iter().position(|e| e.key == key) {
            Some(i) => {
                self.used[i] = true;
                Ok(Some((parse_value(&self.entries[i])?, self.entries[i].line)))
            }
            None => Ok(None),
        }
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.take(key)?.map(|(v, _)| v).unwrap_or(default))
    }

    fn finish(self) -> Result<(), ConfigError> {
        for (e, used) in self.entries.iter().zip(&self.used) {
            if !used {
                return Err(ConfigError::at(e.line, format!("unknown key `{}` for this protocol", e.key)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Grid {
    duration: f64,
    dt: f64,
    n: usize,
    thinning: usize,
}

fn grid(cfg: &RunConfig, duration: f64, dt: f64, n: usize, thinning: usize) -> Result<Grid, ConfigError> {
    let g = Grid {
        duration: cfg.duration.unwrap_or(duration),
        dt: cfg.dt.unwrap_or(dt),
        n: cfg.n_trajectories.unwrap_or(n),
        thinning: cfg.thinning.unwrap_or(thinning),
    };
    if !(g.duration > 0.0) || !g.duration.is_finite() {
        return Err(ConfigError::at(0, format!("duration = {} must be positive", g.duration)));
    }
    if !(g.dt > 0.0) || !g.dt.is_finite() || g.dt > g.duration {
        return Err(ConfigError::at(0, format!("dt = {} must be positive and at most the duration", g.dt)));
    }
    if g.n == 0 || g.thinning == 0 {
        return Err(ConfigError::at(0, "n_trajectories and thinning must be at least 1"));
    }
    if g.duration / g.dt > 1e7 {
        return Err(ConfigError::at(0, "more than 10^7 steps per trajectory"));
    }
    Ok(g)
}

#[derive(Clone, Debug)]
struct QubitSpec {
    gamma_d: f64,
    eta: f64,
    phi: f64,
    omega_r: f64,
    initial: DensityMatrix,
    integrator: Integrator,
}

impl QubitSpec {
    fn model(&self) -> crate::error::Result<LindbladModel> {
        let h = pauli(Axis::X).scale(C64::new(0.5 * self.omega_r, 0.0));
        let m = LindbladModel::new(h)?;
        if self.gamma_d > 0.0 {
            m.with_channel(MeasurementChannel::qubit_dephasing(self.gamma_d, self.eta, self.phi)?)
        } else {
            Ok(m)
        }
    }
}

fn qubit_spec(p: &mut Params<'_>, section_line: usize) -> Result<QubitSpec, ConfigError> {
    let initial_name: String = p.get("initial", "+x".to_string())?;
    let (x, y, z) = match initial_name.as_str() {
        "e" | "+z" => (0.0, 0.0, 1.0),
        "g" | "-z" => (0.0, 0.0, -1.0),
        "+x" => (1.0, 0.0, 0.0),
        "-x" => (-1.0, 0.0, 0.0),
        "+y" => (0.0, 1.0, 0.0),
        "-y" => (0.0, -1.0, 0.0),
        other => return Err(ConfigError::at(section_line, format!("unknown initial state `{other}`"))),
    };
    let integrator = match p.get("integrator", "povm".to_string())?.as_str() {
        "povm" => Integrator::Povm,
        "ito" => Integrator::Ito,
        other => return Err(ConfigError::at(section_line, format!("unknown integrator `{other}`"))),
    };
    let spec = QubitSpec {
        gamma_d: p.get("gamma_d", 1.0)?,
        eta: p.get("eta", 1.0)?,
        phi: p.get("phi", 0.0)?,
        omega_r: p.get("omega_r", 0.0)?,
        initial: DensityMatrix::from_bloch(x, y, z).expect("pure state"),
        integrator,
    };
    if !(spec.gamma_d >= 0.0) || !(0.0..=1.0).contains(&spec.eta) || !spec.phi.is_finite() || !spec.omega_r.is_finite() {
        return Err(ConfigError::at(section_line, "need gamma_d >= 0, eta in [0, 1], finite phi and omega_r"));
    }
    spec.model().map_err(|e| ConfigError::at(section_line, e.to_string()))?;
    Ok(spec)
}

#[derive(Clone, Debug)]
enum Plan {
    Trajectory(Grid, QubitSpec),
    Ensemble(Grid, QubitSpec),
    Rabi(Grid, RabiConfig),
    HalfParity(Grid, f64, f64),
    Phase { n: usize, cfg: AdaptivePhaseConfig, theta: f64, grid_points: usize },
    ZenoDrag { n: usize, cfg: ZenoDragConfig },
    ZenoBlockade { cfg: BlockadeConfig, wigner_every: usize, extent: f64, points: usize },
    KerrCat { setup: KerrCatSetup, start: KerrStart, extent: f64, points: usize },
    Wigner { state: DensityMatrix, n_max: usize, extent: f64, points: usize },
}

#[derive(Clone, Copy, Debug)]
enum KerrStart {
    Vacuum,
    PlusAlpha,
}

fn lib_check(line: usize, r: crate::error::Result<()>) -> Result<(), ConfigError> {
    r.map_err(|e| ConfigError::at(line, e.to_string()))
}

/// Resolves and validates every parameter of the protocol.
fn plan(cfg: &RunConfig) -> Result<Plan, ConfigError> {
    let mut p = Params::new(&cfg.params);
    let sl = cfg.section_line;
    let plan = match cfg.protocol {
        Protocol::Trajectory => {
            let g = grid(cfg, 4.0, 1e-3, 1, 10)?;
            Plan::Trajectory(g, qubit_spec(&mut p, sl)?)
        }
        Protocol::Ensemble => {
            let g = grid(cfg, 4.0, 1e-3, 100, 10)?;
            Plan::Ensemble(g, qubit_spec(&mut p, sl)?)
        }
        Protocol::Rabi => {
            let d = RabiConfig::default();
            let r = RabiConfig {
                omega_r: p.get("omega_r", d.omega_r)?,
                gamma: p.get("gamma", d.gamma)?,
                eta: p.get("eta", d.eta)?,
                gain: p.get("gain", d.gain)?,
                window_periods: p.get("window_periods", d.window_periods)?,
            };
            lib_check(sl, r.validate())?;
            Plan::Rabi(grid(cfg, 40.0, 2e-3, 200, 10)?, r)
        }
        Protocol::HalfParity => {
            let gamma: f64 = p.get("gamma", 1.0)?;
            let eta: f64 = p.get("eta", 1.0)?;
            lib_check(sl, crate::feedback::half_parity_model(gamma, eta).map(|_| ()))?;
            let g = grid(cfg, 10.0 / gamma, 1e-3, 1, 10)?;
            Plan::HalfParity(g, gamma, eta)
        }
        Protocol::Phase => {
            let d = AdaptivePhaseConfig::default();
            let receiver: PhaseReceiver = match p.take::<String>("receiver")? {
                Some((s, line)) => s.parse().map_err(|_| ConfigError::at(line, format!("unknown receiver `{s}`")))?,
                None => d.receiver,
            };
            let c = AdaptivePhaseConfig {
                eta: p.get("eta", d.eta)?,
                ds: p.get("ds", d.ds)?,
                s_max: p.get("s_max", d.s_max)?,
                delay_steps: p.get("delay_steps", d.delay_steps)?,
                receiver,
                store: false,
            };
            lib_check(sl, c.validate())?;
            let theta: f64 = p.get("theta", 0.7)?;
            let grid_points: usize = p.get("grid_points", 256)?;
            if !theta.is_finite() || grid_points < 8 {
                return Err(ConfigError::at(sl, "theta must be finite and grid_points at least 8"));
            }
            let n = cfg.n_trajectories.unwrap_or(200);
            if n < 100 {
                return Err(ConfigError::at(0, format!("phase statistics need n_trajectories >= 100, got {n}")));
            }
            Plan::Phase { n, cfg: c, theta, grid_points }
        }
        Protocol::ZenoDrag => {
            let nu: f64 = p.get("nu", 0.04)?;
            let gamma_d: f64 = p.get("gamma_d", 1.0)?;
            let eta: f64 = p.get("eta", 1.0)?;
            let points: usize = p.get("points", 9)?;
            if points < 5 {
                return Err(ConfigError::at(sl, "points must be at least 5"));
            }
            let default_duration = if nu > 0.0 { gamma_d / (nu * nu) } else { 10.0 / gamma_d.max(1e-12) };
            let duration = cfg.duration.unwrap_or(default_duration);
            let mut z = ZenoDragConfig::new(nu, gamma_d, eta, duration).map_err(|e| ConfigError::at(sl, e.to_string()))?;
            z.checkpoints = (0..points).map(|k| duration * k as f64 / (points - 1) as f64).collect();
            lib_check(sl, z.validate())?;
            Plan::ZenoDrag { n: cfg.n_trajectories.unwrap_or(1000).max(1), cfg: z }
        }
        Protocol::ZenoBlockade => {
            let d = BlockadeConfig::default();
            let b = BlockadeConfig {
                n_block: p.get("n_block", d.n_block)?,
                omega_r: p.get("omega_r", d.omega_r)?,
                gamma: p.get("gamma", d.gamma)?,
                epsilon: p.get("epsilon", d.epsilon)?,
                kappa: p.get("kappa", d.kappa)?,
                n_max: p.get("n_max", d.n_max)?,
                duration: cfg.duration.unwrap_or(d.duration),
                sample_dt: cfg.dt.unwrap_or(d.sample_dt),
            };
            lib_check(sl, b.validate())?;
            Plan::ZenoBlockade {
                cfg: b,
                wigner_every: p.get("wigner_every", 4)?,
                extent: p.get("wigner_extent", 3.0)?,
                points: p.get("wigner_points", 41)?,
            }
        }
        Protocol::KerrCat => {
            let s = KerrCatSetup {
                k: p.get("k", 1.0)?,
                eps2: p.get("eps2", 4.0)?,
                kappa2: p.get("kappa2", 1.0)?,
                kappa1: p.get("kappa1", 0.0)?,
                n_max: p.get("n_max", 20)?,
                duration: cfg.duration.unwrap_or(10.0),
                sample_dt: cfg.dt.unwrap_or(0.25),
            };
            let start = match p.get("initial", "vacuum".to_string())?.as_str() {
                "vacuum" => KerrStart::Vacuum,
                "plus-alpha" => KerrStart::PlusAlpha,
                other => return Err(ConfigError::at(sl, format!("unknown initial state `{other}`"))),
            };
            lib_check(sl, crate::feedback::kerr_cat_model(&s).map(|_| ()))?;
            Plan::KerrCat { setup: s, start, extent: p.get("wigner_extent", 3.5)?, points: p.get("wigner_points", 61)? }
        }
        Protocol::Wigner => {
            let n_max: usize = p.get("n_max", 20)?;
            let alpha = C64::new(p.get("alpha_re", 0.0)?, p.get("alpha_im", 0.0)?);
            let name: String = p.get("state", "vacuum".to_string())?;
            let fock_n: usize = p.get("fock_n", 0)?;
            let build = || -> crate::error::Result<DensityMatrix> {
                Ok(match name.as_str() {
                    "vacuum" => DensityMatrix::basis(SpaceShape::oscillator(n_max)?, 0)?,
                    "fock" => DensityMatrix::basis(SpaceShape::oscillator(n_max)?, fock_n)?,
                    "coherent" => coherent_state(alpha, n_max)?.to_density(),
                    "cat-even" => cat_state(alpha, CatParity::Even, n_max)?.to_density(),
                    "cat-odd" => cat_state(alpha, CatParity::Odd, n_max)?.to_density(),
                    other => return Err(Error::InvalidParameter(format!("unknown state `{other}`"))),
                })
            };
            let state = build().map_err(|e| ConfigError::at(sl, e.to_string()))?;
            Plan::Wigner { state, n_max, extent: p.get("extent", 3.0)?, points: p.get("points", 61)? }
        }
    };
    if let Plan::ZenoBlockade { extent, points, wigner_every, .. } = &plan {
        check_grid(sl, *extent, *points)?;
        if *wigner_every == 0 {
            return Err(ConfigError::at(sl, "wigner_every must be at least 1"));
        }
    }
    if let Plan::KerrCat { extent, points, .. } | Plan::Wigner { extent, points, .. } = &plan {
        check_grid(sl, *extent, *points)?;
    }
    p.finish()?;
    Ok(plan)
}

fn check_grid(line: usize, extent: f64, points: usize) -> Result<(), ConfigError> {
    if !(extent > 0.0) || points < 2 || points > 1001 {
        return Err(ConfigError::at(line, "phase-space grid needs extent > 0 and 2..=1001 points"));
    }
    Ok(())
}

/// Everything a run produces, before it touches the disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    /// Relative path and contents, in write order.
    pub files: Vec<(String, String)>,
    pub summary: Vec<(String, String)>,
    pub n_trajectories: usize,
}

impl Artifacts {
    fn file(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    fn stat(&mut self, key: &str, value: impl std::fmt::Display) {
        self.summary.push((key.to_string(), value.to_string()));
    }
}

fn csv_row(s: &mut String, vals: &[f64]) {
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v:?}");
    }
    s.push('\n');
}

fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        csv_row(&mut s, &r);
    }
    s
}

/// Record file of one trajectory: block means of `V` and block sums of `dW`
/// over `thinning` steps, stamped with the block end time.
pub fn record_csv(rec: &TrajectoryRecord, thinning: usize) -> String {
    let nch = rec.records.len();
    let mut header = vec!["t_us".to_string()];
    for c in 0..nch {
        header.push(format!("V{c}"));
        header.push(format!("dW{c}"));
    }
    let mut s = header.join(",");
    s.push('\n');
    let n = rec.times.len();
    let thinning = thinning.max(1);
    let mut start = 0;
    while start < n {
        let end = (start + thinning).min(n);
        let mut row = vec![rec.times[end - 1]];
        for c in 0..nch {
            let v: f64 = rec.records[c][start..end].iter().sum::<f64>() / (end - start) as f64;
            let dw: f64 = rec.increments.get(c).map(|x| x[start..end].iter().sum()).unwrap_or(f64::NAN);
            row.push(v);
            row.push(dw);
        }
        csv_row(&mut s, &row);
        start = end;
    }
    s
}

fn bloch_rows(times: &[f64], states: &[DensityMatrix]) -> crate::error::Result<Vec<Vec<f64>>> {
    times
        .iter()
        .zip(states)
        .map(|(&t, r)| bloch_vector(r).map(|b| vec![t, b.x, b.y, b.z]))
        .collect()
}

fn seeds_csv(master_seed: u64, n: usize) -> String {
    let mut s = String::from("trajectory,seed\n");
    for i in 0..n as u64 {
        let _ = writeln!(s, "{i},{}", trajectory_seed(master_seed, i));
    }
    s
}

fn record_name(i: usize) -> String {
    format!("records/traj_{i:05}.csv")
}

fn execute(plan: &Plan, master_seed: u64, jobs: usize, write_records: bool) -> crate::error::Result<Artifacts> {
    let mut art = Artifacts::default();
    match plan {
        Plan::Trajectory(g, q) | Plan::Ensemble(g, q) => {
            let model = q.model()?;
            let opts = SimOptions { thinning: g.thinning, store_records: true, integrator: q.integrator };
            let has_record = !model.channels().is_empty();
            let out = run_ensemble(g.n, master_seed, jobs, |_, mut s| {
                let rec = simulate_trajectory(&model, &q.initial, g.duration, g.dt, &mut s, None, &opts)?;
                let file = (write_records && has_record).then(|| record_csv(&rec, g.thinning));
                Ok((file, rec.state_times, rec.states))
            })?;
            let mut acc = EnsembleMean::new();
            for (_, times, states) in &out {
                acc.add_states(times, states)?;
            }
            let mean = acc.mean()?;
            let rows = bloch_rows(acc.times(), &mean)?;
            if matches!(plan, Plan::Trajectory(..)) {
                let first = bloch_rows(&out[0].1, &out[0].2)?;
                art.file("bloch.csv", csv(&["t_us", "x", "y", "z"], first));
                let last = rows.last().expect("nonempty");
                art.stat("final_x", last[1]);
                art.stat("final_y", last[2]);
                art.stat("final_z", last[3]);
            } else {
                let exact = lindblad_evolve(&model, &q.initial, g.duration, g.dt, g.thinning)?;
                let mut table = Vec::with_capacity(rows.len());
                let (mut gx, mut gz) = (Vec::new(), Vec::new());
                for (row, (_, r)) in rows.iter().zip(&exact) {
                    let b = bloch_vector(r)?;
                    table.push(vec![row[0], row[1], row[2], row[3], b.x, b.y, b.z]);
                    gx.push((row[1], b.x));
                    gz.push((row[3], b.z));
                }
                let (ax, bx): (Vec<f64>, Vec<f64>) = gx.into_iter().unzip();
                let (az, bz): (Vec<f64>, Vec<f64>) = gz.into_iter().unzip();
                art.file(
                    "ensemble.csv",
                    csv(&["t_us", "x", "y", "z", "lindblad_x", "lindblad_y", "lindblad_z"], table),
                );
                art.stat("max_gap_x", max_abs_gap(&ax, &bx)?);
                art.stat("max_gap_z", max_abs_gap(&az, &bz)?);
            }
            for (i, (file, _, _)) in out.into_iter().enumerate() {
                if let Some(f) = file {
                    art.file(record_name(i), f);
                }
            }
            art.n_trajectories = g.n;
        }
        Plan::Rabi(g, r) => {
            let out = run_ensemble(g.n, master_seed, jobs, |_, mut s| {
                let rec = run_rabi(r, g.duration, g.dt, &mut s, g.thinning)?;
                let file = write_records.then(|| record_csv(&rec, g.thinning));
                Ok((file, rec.state_times, rec.states))
            })?;
            let mut acc = EnsembleMean::new();
            for (_, times, states) in &out {
                acc.add_states(times, states)?;
            }
            let mean = acc.mean()?;
            let rows = bloch_rows(acc.times(), &mean)?;
            let ens = crate::feedback::RabiEnsemble {
                times: acc.times().to_vec(),
                mean_z: rows.iter().map(|r| r[3]).collect(),
            };
            let late = (g.duration - 5.0).max(0.0);
            art.stat("late_amplitude", ens.amplitude(r.omega_r, late, g.duration));
            art.stat("unstabilized_decay_rate", r.decay_rate());
            art.file("ensemble.csv", csv(&["t_us", "x", "y", "z"], rows));
            for (i, (file, _, _)) in out.into_iter().enumerate() {
                if let Some(f) = file {
                    art.file(record_name(i), f);
                }
            }
            art.n_trajectories = g.n;
        }
        Plan::HalfParity(g, gamma, eta) => {
            let target = psi_plus().to_density();
            let fid = |r: &DensityMatrix| crate::analysis::fidelity(r, &target);
            let out = run_ensemble(g.n, master_seed, jobs, |_, mut s| {
                let rec = run_half_parity(*gamma, *eta, g.duration, g.dt, &mut s, 1)?;
                let file = (write_records && *eta > 0.0).then(|| record_csv(&rec, g.thinning));
                Ok((file, rec.state_times, rec.states))
            })?;
            let (times, states) = (&out[0].1, &out[0].2);
            let mut table = Vec::new();
            for (k, (t, r)) in times.iter().zip(states).enumerate() {
                if k % g.thinning == 0 || k + 1 == times.len() {
                    table.push(vec![*t, gamma * t, fid(r)?, analytic_half_parity_fidelity(*gamma, *t)]);
                }
            }
            art.file("fidelity.csv", csv(&["t_us", "gamma_t", "fidelity", "analytic"], table));
            let mut points = Vec::new();
            for gt in [0.0, 2.0 * std::f64::consts::LN_2, 10.0] {
                let t = gt / gamma;
                if t <= g.duration + 1e-12 {
                    let k = ((t / g.dt).round() as usize).min(states.len() - 1);
                    points.push(vec![gt, fid(&states[k])?, analytic_half_parity_fidelity(*gamma, t)]);
                }
            }
            art.file("fidelity_points.csv", csv(&["gamma_t", "fidelity", "analytic"], points));
            let mut to_first = 0.0f64;
            for (_, _, st) in &out[1..] {
                for (k, r) in st.iter().enumerate() {
                    if k % g.thinning == 0 || k + 1 == st.len() {
                        to_first = to_first.max(r.trace_distance(&states[k])?);
                    }
                }
            }
            let mut pairwise = 0.0f64;
            for i in 0..out.len() {
                for j in i + 1..out.len() {
                    pairwise = pairwise.max(out[i].2.last().unwrap().trace_distance(out[j].2.last().unwrap())?);
                }
            }
            art.stat("final_fidelity", fid(states.last().expect("nonempty"))?);
            art.stat("max_trace_distance_to_first", to_first);
            art.stat("max_pairwise_final_trace_distance", pairwise);
            for (i, (file, _, _)) in out.into_iter().enumerate() {
                if let Some(f) = file {
                    art.file(record_name(i), f);
                }
            }
            art.n_trajectories = g.n;
        }
        Plan::Phase { n, cfg, theta, grid_points } => {
            let runs = phase_ensemble(cfg, *theta, *n, master_seed, jobs)?;
            let est: Vec<f64> = runs.iter().map(|r| r.estimate.theta).collect();
            let table = runs.iter().enumerate().map(|(i, r)| vec![i as f64, r.theta_true, r.estimate.theta, r.estimate.sharpness]);
            art.file("estimates.csv", csv(&["run", "theta_true", "theta_hat", "sharpness"], table));
            let stats = phase_error_stats(&est, *theta)?;
            art.stat("circular_variance", stats.circular_variance);
            art.stat("mean_error", stats.mean_error);
            art.stat("mean_canonical_tv", mean_canonical_tv(&runs, *grid_points)?);
            art.n_trajectories = *n;
        }
        Plan::ZenoDrag { n, cfg } => {
            let r = zeno_retention(cfg, *n, master_seed, jobs)?;
            let table = cfg.checkpoints.iter().zip(&r).map(|(&t, &x)| vec![t, x, 0.5 * (1.0 + x)]);
            art.file("survival.csv", csv(&["t_us", "R", "S"], table));
            art.stat("predicted_rate", cfg.escape_rate());
            art.stat("regime_ok", cfg.regime_ok());
            match survival_fit(&cfg.checkpoints, &r) {
                Ok(f) => {
                    art.stat("fitted_rate", f.rate);
                    art.stat("fit_ci_low", f.ci_low);
                    art.stat("fit_ci_high", f.ci_high);
                }
                Err(e) => art.stat("fit_failed", e.to_string().replace('\n', " ")),
            }
            art.n_trajectories = *n;
        }
        Plan::ZenoBlockade { cfg, wigner_every, extent, points } => {
            let run = zeno_blockade(cfg)?;
            let spec = GridSpec::square(*extent, *points);
            let above = run.weight_at_or_above(cfg.n_block);
            let mut fock_header = vec!["t_us".to_string()];
            fock_header.extend((0..=cfg.n_max).map(|k| format!("p{k}")));
            let mut fock = fock_header.join(",");
            fock.push('\n');
            let mut table = Vec::new();
            let (mut w_min, mut t_min) = (f64::INFINITY, 0.0);
            for (k, (t, r)) in run.times.iter().zip(&run.cavity).enumerate() {
                let mut row = vec![*t];
                row.extend((0..=cfg.n_max).map(|j| r.population(j)));
                csv_row(&mut fock, &row);
                let w = if k % wigner_every == 0 { wigner(r, &spec)?.min() } else { f64::NAN };
                if w < w_min {
                    w_min = w;
                    t_min = *t;
                }
                table.push(vec![*t, above[k], w]);
            }
            art.file("fock.csv", fock);
            art.file("blockade.csv", csv(&["t_us", "weight_at_or_above_n", "wigner_min"], table));
            art.file("wigner.csv", wigner_csv(run.cavity.last().expect("nonempty"), &spec)?);
            art.stat("max_weight_at_or_above_n", above.iter().cloned().fold(0.0, f64::max));
            art.stat("min_wigner", w_min);
            art.stat("t_min_wigner", t_min);
        }
        Plan::KerrCat { setup, start, extent, points } => {
            let rho0 = match start {
                KerrStart::Vacuum => None,
                KerrStart::PlusAlpha => Some(coherent_state(C64::new(setup.alpha()?, 0.0), setup.n_max)?.to_density()),
            };
            let run = kerr_cat_stabilization(setup, rho0.as_ref())?;
            let table = (0..run.times.len()).map(|k| vec![run.times[k], run.parity[k], run.cat_weight[k], run.well[k]]);
            art.file("kerrcat.csv", csv(&["t_us", "parity", "cat_weight", "well"], table));
            art.file("wigner.csv", wigner_csv(run.states.last().expect("nonempty"), &GridSpec::square(*extent, *points))?);
            let alpha = setup.alpha()?;
            art.stat("alpha", alpha);
            art.stat("final_cat_weight", run.cat_weight.last().expect("nonempty"));
            art.stat("final_parity", run.parity.last().expect("nonempty"));
            art.stat("eigen_residual", kerr_eigen_residual(setup.k, setup.eps2, setup.n_max)?);
            if setup.kappa1 > 0.0 {
                art.stat("predicted_parity_rate", 2.0 * setup.kappa1 * alpha * alpha);
                match crate::feedback::decay_rate(&run.times, &run.parity, 0.25 * setup.duration, 1e-3) {
                    Ok(r) => art.stat("parity_decay_rate", r),
                    Err(e) => art.stat("fit_failed", e.to_string()),
                }
            }
        }
        Plan::Wigner { state, n_max, extent, points } => {
            let spec = GridSpec::square(*extent, *points);
            let w = wigner(state, &spec)?;
            art.file("wigner.csv", wigner_csv(state, &spec)?);
            art.stat("n_max", n_max);
            art.stat("center", crate::analysis::wigner_point(state, C64::new(0.0, 0.0))?);
            art.stat("min", w.min());
            art.stat("max", w.max());
            art.stat("integral", w.integral());
            art.stat("truncation_warning", w.truncation_warning);
        }
    }
    Ok(art)
}

fn wigner_csv(rho: &DensityMatrix, spec: &GridSpec) -> crate::error::Result<String> {
    let w = wigner(rho, spec)?;
    let mut rows = Vec::with_capacity(w.re.len() * w.im.len());
    for (i, &x) in w.re.iter().enumerate() {
        for (j, &y) in w.im.iter().enumerate() {
            rows.push(vec![x, y, w.values[(i, j)]]);
        }
    }
    Ok(csv(&["re", "im", "w"], rows))
}

/// Runs a parsed config. `seed` and `out` override the config values.
pub fn run_config(cfg: &RunConfig, jobs: usize) -> Result<(Artifacts, String), CliError> {
    let plan = plan(cfg)?;
    let mut art = execute(&plan, cfg.master_seed, jobs, cfg.write_records)?;
    if art.n_trajectories > 0 {
        art.file("seeds.csv", seeds_csv(cfg.master_seed, art.n_trajectories));
    }
    let echo = cfg.echo();
    let mut manifest = String::new();
    let _ = writeln!(manifest, "qtraj_version = {VERSION}");
    let _ = writeln!(manifest, "protocol = {}", cfg.protocol.name());
    let _ = writeln!(manifest, "master_seed = {}", cfg.master_seed);
    let _ = writeln!(manifest, "n_trajectories = {}", art.n_trajectories);
    let _ = writeln!(manifest, "seed_derivation = master_seed ^ splitmix64(index)");
    for line in echo.lines().filter(|l| l.contains('=')) {
        let (k, v) = line.split_once('=').expect("checked");
        let _ = writeln!(manifest, "config.{} = {}", k.trim(), v.trim());
    }
    for (k, v) in &art.summary {
        let _ = writeln!(manifest, "summary.{k} = {v}");
    }
    art.file("config.cfg", echo);
    let names: Vec<&str> = art.files.iter().map(|(n, _)| n.as_str()).collect();
    let _ = writeln!(manifest, "files = {}", names.join(";"));
    Ok((art, manifest))
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Writes the artifacts and, last, `manifest.txt`.
pub fn write_run(dir: &Path, art: &Artifacts, manifest: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (name, contents) in &art.files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        write_atomic(&path, contents)?;
    }
    write_atomic(&dir.join("manifest.txt"), manifest)
}

/// Reads a `key = value` manifest.
pub fn read_manifest(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Io(format!("{}:{}: expected `key = value`", path.display(), i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn parse_csv(text: &str) -> Result<Table, String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().ok_or("empty file")?.split(',').map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let row = l
            .split(',')
            .map(|x| x.parse::<f64>().map_err(|_| format!("row {}: bad number `{x}`", i + 2)))
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != header.len() {
            return Err(format!("row {}: {} fields, header has {}", i + 2, row.len(), header.len()));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn read_csv(path: &Path) -> Result<Table, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_csv(&text).map_err(|m| CliError::Io(format!("{}: {m}", path.display())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Bloch,
    Record,
    Fidelity,
    WignerSlice,
    Survival,
    PhaseHist,
}

impl FromStr for Quantity {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "bloch" => Quantity::Bloch,
            "record" => Quantity::Record,
            "fidelity" => Quantity::Fidelity,
            "wigner-slice" => Quantity::WignerSlice,
            "survival" => Quantity::Survival,
            "phase-hist" => Quantity::PhaseHist,
            _ => return Err(format!("unknown quantity `{s}`")),
        })
    }
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Bloch => "bloch",
            Quantity::Record => "record",
            Quantity::Fidelity => "fidelity",
            Quantity::WignerSlice => "wigner-slice",
            Quantity::Survival => "survival",
            Quantity::PhaseHist => "phase-hist",
        }
    }
}

fn pick(table: &Table, cols: &[&str], src: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let idx = cols
        .iter()
        .map(|c| {
            table
                .header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| CliError::Io(format!("{}: no column `{c}`", src.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(table.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect())
}

/// Builds plot data for `quantity` from a run directory.
pub fn emit_plot_data(run_dir: &Path, quantity: Quantity) -> Result<String, CliError> {
    let first_existing = |names: &[&str]| -> Result<PathBuf, CliError> {
        names
            .iter()
            .map(|n| run_dir.join(n))
            .find(|p| p.exists())
            .ok_or_else(|| CliError::Io(format!("{}: run has no data for `{}`", run_dir.display(), quantity.name())))
    };
    Ok(match quantity {
        Quantity::Bloch => {
            let src = first_existing(&["bloch.csv", "ensemble.csv"])?;
            csv(&["t_us", "x", "y", "z"], pick(&read_csv(&src)?, &["t_us", "x", "y", "z"], &src)?)
        }
        Quantity::Record => {
            let src = first_existing(&["records/traj_00000.csv"])?;
            csv(&["t_us", "V"], pick(&read_csv(&src)?, &["t_us", "V0"], &src)?)
        }
        Quantity::Fidelity => {
            let src = first_existing(&["fidelity.csv"])?;
            csv(&["t_us", "fidelity", "analytic"], pick(&read_csv(&src)?, &["t_us", "fidelity", "analytic"], &src)?)
        }
        Quantity::Survival => {
            let src = first_existing(&["survival.csv"])?;
            csv(&["t_us", "R"], pick(&read_csv(&src)?, &["t_us", "R"], &src)?)
        }
        Quantity::WignerSlice => {
            let src = first_existing(&["wigner.csv"])?;
            let rows = pick(&read_csv(&src)?, &["re", "im", "w"], &src)?;
            let im0 = rows.iter().map(|r| r[1]).fold(f64::INFINITY, |a, b| if b.abs() < a.abs() { b } else { a });
            csv(&["re", "w"], rows.into_iter().filter(|r| r[1] == im0).map(|r| vec![r[0], r[2]]))
        }
        Quantity::PhaseHist => {
            let src = first_existing(&["estimates.csv"])?;
            let rows = pick(&read_csv(&src)?, &["theta_true", "theta_hat"], &src)?;
            let bins = 32;
            let width = 2.0 * PI / bins as f64;
            let mut counts = vec![0usize; bins];
            for r in &rows {
                let d = (r[1] - r[0] + PI).rem_euclid(2.0 * PI);
                counts[((d / width) as usize).min(bins - 1)] += 1;
            }
            let n = rows.len().max(1) as f64;
            csv(
                &["phase", "density"],
                counts.iter().enumerate().map(|(k, &c)| vec![-PI + (k as f64 + 0.5) * width, c as f64 / (n * width)]),
            )
        }
    })
}

#[derive(Parser, Debug)]
#[command(name = "qtraj", version, about = "Quantum trajectory and feedback simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a config and write its artifacts.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses all cores.
        #[arg(long, env = "QTRAJ_JOBS", default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write `plot_<quantity>.csv` into a run directory.
    Emit {
        run_dir: PathBuf,
        #[arg(long)]
        quantity: String,
    },
}

/// `qtraj run`; returns the output directory.
pub fn cmd_run(config: &Path, seed: Option<u64>, jobs: usize, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let text = fs::read_to_string(config).map_err(|e| CliError::Config(ConfigError::at(0, format!("{}: {e}", config.display()))))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("run-{}-{}", cfg.protocol.name(), cfg.master_seed)));
    let (art, manifest) = run_config(&cfg, jobs)?;
    write_run(&dir, &art, &manifest)?;
    Ok(dir)
}

/// `qtraj emit`; returns the written file.
pub fn cmd_emit(run_dir: &Path, quantity: &str) -> Result<PathBuf, CliError> {
    let q: Quantity = quantity.parse().map_err(|m: String| CliError::Config(ConfigError::at(0, m)))?;
    let data = emit_plot_data(run_dir, q)?;
    let path = run_dir.join(format!("plot_{}.csv", q.name()));
    write_atomic(&path, &data)?;
    Ok(path)
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let started = std::time::Instant::now();
    let res = match &cli.command {
        Command::Run { config, seed, jobs, out } => cmd_run(config, *seed, *jobs, out.as_deref()),
        Command::Emit { run_dir, quantity } => cmd_emit(run_dir, quantity),
    };
    match res {
        Ok(path) => {
            println!("{}", path.display());
            eprintln!("wall-clock {:.3} s", started.elapsed().as_secs_f64());
            0
        }
        Err(e) => {
            match (&e, &cli.command) {
                (CliError::Config(c), Command::Run { config, .. }) if c.line > 0 => {
                    eprintln!("{}:{}: {}", config.display(), c.line, c.message)
                }
                _ => eprintln!("qtraj: {e}"),
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_reports_lines() {
        let e = parse_config("protocol = ensemble\n\n[ensemble]\ngamma_d = x\n").unwrap();
        let err = plan(&e).unwrap_err();
        assert_eq!(err.line, 4);
        let err = parse_config("protocol = rabi\nbogus = 1\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_config("protocol = rabi\n[ensemble]\n").unwrap_err();
        assert_eq!(err.line, 2);
        let cfg = parse_config("protocol = rabi\n[rabi]\ngain = 3\n").unwrap();
        assert_eq!(plan(&cfg).unwrap_err().line, 2);
        let cfg = parse_config("protocol = rabi\n[rabi]\nfoo = 3\n").unwrap();
        assert_eq!(plan(&cfg).unwrap_err().line, 3);
    }

    #[test]
    fn echo_round_trips() {
        let text = "protocol = trajectory # comment\nduration = 0.5\nmaster_seed = 9\n[trajectory]\neta = 0.5\n";
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&cfg.echo()).unwrap();
        assert_eq!(again.echo(), cfg.echo());
        let kv = |c: &RunConfig| c.params.iter().map(|e| (e.key.clone(), e.value.clone())).collect::<Vec<_>>();
        assert_eq!(kv(&again), kv(&cfg));
        assert_eq!(again.master_seed, 9);
    }

    #[test]
    fn record_blocks() {
        let rec = TrajectoryRecord {
            dt: 0.1,
            times: vec![0.1, 0.2, 0.3],
            records: vec![vec![1.0, 3.0, 5.0]],
            increments: vec![vec![0.5, 0.25, 0.125]],
            controller_log: vec![],
            states: vec![],
            state_times: vec![],
            master_seed: None,
            trajectory_index: None,
        };
        let t = parse_csv(&record_csv(&rec, 2)).unwrap();
        assert_eq!(t.header, vec!["t_us", "V0", "dW0"]);
        assert_eq!(t.rows, vec![vec![0.2, 2.0, 0.75], vec![0.3, 5.0, 0.125]]);
    }

    #[test]
    fn csv_floats_round_trip() {
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE];
        let t = parse_csv(&csv(&["a", "b", "c", "d", "e"], [vals.to_vec()])).unwrap();
        assert_eq!(t.rows[0], vals.to_vec());
    }

    #[test]
    fn unknown_quantity() {
        assert!("heatmap".parse::<Quantity>().is_err());
        assert_eq!("wigner-slice".parse::<Quantity>().unwrap(), Quantity::WignerSlice);
    }
}
