//! Experiment files: parsing, default resolution and construction of the
//! pipeline inputs.
//!
//! The format is TOML with five sections. `[model]`, `[state]` and
//! `[protocol]` are required, `[analysis]` and `[sweep]` are optional. The
//! full key reference is in `book/src/experiments.md`.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{output, CliError};
use crate::dynamics::{EvolutionSpec, PulseSpec};
use crate::linalg::{pauli, ComplexMatrix, HilbertStructure, C64};
use crate::models::{
    nv_collective_hamiltonian, nv_dissipators, nv_pairwise_hamiltonian, toy_hamiltonian, DissipatorChannel,
    NvCavityParams, ToyModelParams, MAX_NV_SPINS,
};
use crate::protocol::{Axis, PrepsyConfig, StateVector, TimeGrid};
use crate::spectral::Analysis;
use crate::states::{build_fano, decompose, gibbs_state, DensityMatrix, FanoTwoQubit};

/// Grid length used when a count is not given.
pub const DEFAULT_COUNT: usize = 64;

/// Parameters a `[sweep]` may vary.
pub const SWEEP_PARAMETERS: [&str; 7] =
    ["state.c_x", "state.c_y", "state.c_z", "state.beta", "model.xi", "model.gamma", "protocol.pulse_angle"];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    model: Option<RawModel>,
    state: Option<RawState>,
    protocol: Option<RawProtocol>,
    analysis: Option<RawAnalysis>,
    sweep: Option<RawSweep>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: String,
    lambda: Option<[f64; 3]>,
    lambda_matrix: Option<[[f64; 3]; 3]>,
    omega_s: Option<f64>,
    omega_e: Option<f64>,
    n_spins: Option<usize>,
    xi: Option<f64>,
    g: Option<f64>,
    delta: Option<f64>,
    omega_raman: Option<f64>,
    gamma: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    kind: String,
    c: Option<[f64; 3]>,
    u: Option<[f64; 3]>,
    v: Option<[f64; 3]>,
    beta: Option<f64>,
    product: Option<bool>,
    path: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    projections: Vec<VectorSpec>,
    standard: VectorSpec,
    observable: VectorSpec,
    pulse: Option<String>,
    pulse_matrix: Option<Vec<Vec<[f64; 2]>>>,
    pulse_angle: Option<f64>,
    count: Option<usize>,
    spacing: Option<f64>,
    t1_count: Option<usize>,
    t1_spacing: Option<f64>,
    t2_count: Option<usize>,
    t2_spacing: Option<f64>,
    dt: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    window: Option<String>,
    zero_pad: Option<usize>,
    peak_threshold: Option<f64>,
    calibrate: Option<bool>,
    calibration_beta: Option<f64>,
    probe: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: String,
    values: Vec<f64>,
}

/// A system state given by axis name or by amplitudes `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Named(String),
    Explicit(Vec<[f64; 2]>),
}

impl VectorSpec {
    pub fn resolve(&self) -> Result<StateVector, String> {
        match self {
            VectorSpec::Named(name) => name.parse::<Axis>().map(StateVector::axis).map_err(|e| e.to_string()),
            VectorSpec::Explicit(amps) => {
                let v: Vec<C64> = amps.iter().map(|[re, im]| C64::new(*re, *im)).collect();
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(format!("explicit vector has norm {norm}, expected 1"));
                }
                StateVector::normalized(v, format!("{amps:?}")).map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Toy { omega_s: f64, omega_e: f64, lambda: [[f64; 3]; 3] },
    NvPairwise(NvSpec),
    NvCollective(NvSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NvSpec {
    pub n_spins: usize,
    pub xi: f64,
    pub g: f64,
    pub delta: f64,
    pub omega_raman: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateSpec {
    Fano { c: [f64; 3], u: [f64; 3], v: [f64; 3] },
    Gibbs { beta: f64, product: bool },
    Matrix { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolSpec {
    pub projections: Vec<VectorSpec>,
    pub standard: VectorSpec,
    pub observable: VectorSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulse: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulse_matrix: Option<Vec<Vec<[f64; 2]>>>,
    pub pulse_angle: f64,
    pub t1_count: usize,
    pub t1_spacing: f64,
    pub t2_count: usize,
    pub t2_spacing: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisSpec {
    pub window: String,
    pub zero_pad: usize,
    pub peak_threshold: f64,
    pub calibrate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_beta: Option<f64>,
    pub probe: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// A fully resolved experiment: every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentFile {
    pub model: ModelSpec,
    pub state: StateSpec,
    pub protocol: ProtocolSpec,
    pub analysis: AnalysisSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

/// Everything a single pipeline run needs.
pub struct Prepared {
    pub state: DensityMatrix,
    pub config: PrepsyConfig,
    /// Frequency-unit Hamiltonian of the full system.
    pub hamiltonian: ComplexMatrix,
    pub analysis: Analysis,
    pub warnings: Vec<String>,
}

/// Line of `key` inside `[section]`, 1-based.
fn locate(source: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    for (k, line) in source.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.split(']').next()) {
            current = name.trim().to_string();
            if key.is_none() && current == section {
                return Some(k + 1);
            }
            continue;
        }
        if let Some(key) = key {
            if current == section {
                if let Some(rest) = t.strip_prefix(key) {
                    if rest.trim_start().starts_with('=') {
                        return Some(k + 1);
                    }
                }
            }
        }
    }
    None
}

struct Ctx<'a> {
    path: &'a Path,
    source: &'a str,
}

impl Ctx<'_> {
    fn err(&self, section: &str, key: Option<&str>, message: impl Into<String>, hint: impl Into<String>) -> CliError {
        let line = locate(self.source, section, key).or_else(|| locate(self.source, section, None));
        let at = match (line, key) {
            (Some(l), Some(k)) => format!("line {l}, [{section}] {k}"),
            (Some(l), None) => format!("line {l}, [{section}]"),
            (None, Some(k)) => format!("[{section}] {k}"),
            (None, None) => format!("[{section}]"),
        };
        CliError::Config {
            path: self.path.to_path_buf(),
            message: format!("{at}: {}\n  hint: {}", message.into(), hint.into()),
        }
    }
}

/// Reads and resolves an experiment file.
pub fn parse_experiment(path: &Path) -> Result<ExperimentFile, CliError> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config { path: path.to_path_buf(), message: format!("cannot read file: {e}") })?;
    parse_experiment_str(&source, path)
}

/// Parses experiment text. `path` is used for messages and to resolve
/// relative matrix files.
pub fn parse_experiment_str(source: &str, path: &Path) -> Result<ExperimentFile, CliError> {
    let raw: RawExperiment = toml::from_str(source).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: format!(
            "{e}  hint: check the key against the experiment file reference; keys are lowercase with underscores"
        ),
    })?;
    let cx = Ctx { path, source };
    let missing = |name: &str, example: &str| CliError::Config {
        path: path.to_path_buf(),
        message: format!("missing section [{name}]\n  hint: add it, for example\n    [{name}]\n    {example}"),
    };
    let model = resolve_model(&cx, raw.model.ok_or_else(|| missing("model", "kind = \"toy\""))?)?;
    let state = resolve_state(
        &cx,
        raw.state.ok_or_else(|| missing("state", "kind = \"fano\"\n    c = [-0.8, 0.0, 0.0]"))?,
        &model,
    )?;
    let protocol = resolve_protocol(
        &cx,
        raw.protocol.ok_or_else(|| {
            missing("protocol", "projections = [\"+x\", \"-x\"]\n    standard = \"+z\"\n    observable = \"+x\"")
        })?,
        &model,
    )?;
    let analysis = resolve_analysis(&cx, raw.analysis, &model)?;
    let sweep = match raw.sweep {
        None => None,
        Some(s) => Some(resolve_sweep(&cx, s, &model, &state)?),
    };
    let exp = ExperimentFile { model, state, protocol, analysis, sweep };
    // Catch remaining physical inconsistencies (non-positive states and the
    // like) at parse time, with the section they come from.
    exp.prepare().map_err(|e| match e {
        CliError::Run(inner) => CliError::Config {
            path: path.to_path_buf(),
            message: format!("{inner}\n  hint: check the [model] and [state] values"),
        },
        other => other,
    })?;
    Ok(exp)
}

fn resolve_model(cx: &Ctx, m: RawModel) -> Result<ModelSpec, CliError> {
    let toy_only = [
        ("lambda", m.lambda.is_some()),
        ("lambda_matrix", m.lambda_matrix.is_some()),
        ("omega_s", m.omega_s.is_some()),
        ("omega_e", m.omega_e.is_some()),
    ];
    let nv_only = [
        ("n_spins", m.n_spins.is_some()),
        ("xi", m.xi.is_some()),
        ("g", m.g.is_some()),
        ("delta", m.delta.is_some()),
        ("omega_raman", m.omega_raman.is_some()),
        ("gamma", m.gamma.is_some()),
    ];
    let reject = |keys: &[(&str, bool)], kind: &str| -> Result<(), CliError> {
        if let Some((k, _)) = keys.iter().find(|(_, set)| *set) {
            return Err(cx.err(
                "model",
                Some(k),
                format!("key does not apply to model kind '{kind}'"),
                "remove it or change kind",
            ));
        }
        Ok(())
    };
    match m.kind.as_str() {
        "toy" => {
            reject(&nv_only, "toy")?;
            let lambda = match (m.lambda, m.lambda_matrix) {
                (Some(_), Some(_)) => {
                    return Err(cx.err(
                        "model",
                        Some("lambda_matrix"),
                        "both lambda and lambda_matrix are set",
                        "keep only one",
                    ))
                }
                (Some([a, b, c]), None) => [[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]],
                (None, Some(l)) => l,
                (None, None) => {
                    return Err(cx.err("model", None, "toy model needs couplings", "add lambda = [lxx, lyy, lzz]"))
                }
            };
            let spec = ModelSpec::Toy { omega_s: m.omega_s.unwrap_or(0.0), omega_e: m.omega_e.unwrap_or(0.0), lambda };
            if let ModelSpec::Toy { omega_s, omega_e, lambda } = &spec {
                ToyModelParams { omega_s: *omega_s, omega_e: *omega_e, lambda: *lambda }
                    .validate()
                    .map_err(|e| cx.err("model", Some("lambda"), e.to_string(), "use finite values"))?;
            }
            Ok(spec)
        }
        "nv-pairwise" | "nv-collective" => {
            reject(&toy_only, &m.kind)?;
            let n_spins = m.n_spins.ok_or_else(|| cx.err("model", None, "n_spins is required", "add n_spins = 6"))?;
            if !(2..=MAX_NV_SPINS).contains(&n_spins) {
                return Err(cx.err(
                    "model",
                    Some("n_spins"),
                    format!("n_spins = {n_spins} is out of range"),
                    format!("use 2..={MAX_NV_SPINS}"),
                ));
            }
            let xi = m.xi.ok_or_else(|| cx.err("model", None, "xi is required", "add xi = 0.001"))?;
            let gamma = m.gamma.unwrap_or(0.0);
            if !(gamma >= 0.0 && gamma.is_finite()) {
                return Err(cx.err(
                    "model",
                    Some("gamma"),
                    format!("decay rate {gamma} is negative"),
                    "use gamma >= 0",
                ));
            }
            let nv = NvSpec {
                n_spins,
                xi,
                g: m.g.unwrap_or(1.0),
                delta: m.delta.unwrap_or(10.0),
                omega_raman: m.omega_raman.unwrap_or(0.01),
                gamma,
            };
            nv.params().validate().map_err(|e| cx.err("model", None, e.to_string(), "check the NV parameters"))?;
            Ok(if m.kind == "nv-pairwise" { ModelSpec::NvPairwise(nv) } else { ModelSpec::NvCollective(nv) })
        }
        other => Err(cx.err(
            "model",
            Some("kind"),
            format!("unknown model kind '{other}'"),
            "use toy, nv-pairwise or nv-collective",
        )),
    }
}

fn resolve_state(cx: &Ctx, s: RawState, model: &ModelSpec) -> Result<StateSpec, CliError> {
    let only = |allowed: &[&str]| -> Result<(), CliError> {
        let set = [
            ("c", s.c.is_some()),
            ("u", s.u.is_some()),
            ("v", s.v.is_some()),
            ("beta", s.beta.is_some()),
            ("product", s.product.is_some()),
            ("path", s.path.is_some()),
        ];
        if let Some((k, _)) = set.iter().find(|(k, on)| *on && !allowed.contains(k)) {
            return Err(cx.err(
                "state",
                Some(k),
                format!("key does not apply to state kind '{}'", s.kind),
                "remove it or change kind",
            ));
        }
        Ok(())
    };
    match s.kind.as_str() {
        "fano" => {
            only(&["c", "u", "v"])?;
            if !matches!(model, ModelSpec::Toy { .. }) {
                return Err(cx.err(
                    "state",
                    Some("kind"),
                    "Fano states describe two qubits",
                    "use kind = \"gibbs\" or \"matrix\" for NV models",
                ));
            }
            let c = s.c.ok_or_else(|| cx.err("state", None, "fano state needs c", "add c = [cx, cy, cz]"))?;
            Ok(StateSpec::Fano { c, u: s.u.unwrap_or([0.0; 3]), v: s.v.unwrap_or([0.0; 3]) })
        }
        "gibbs" => {
            only(&["beta", "product"])?;
            let beta = s.beta.ok_or_else(|| cx.err("state", None, "gibbs state needs beta", "add beta = 1.0"))?;
            if !(beta >= 0.0 && beta.is_finite()) {
                return Err(cx.err(
                    "state",
                    Some("beta"),
                    format!("beta = {beta} is invalid"),
                    "use a finite beta >= 0",
                ));
            }
            Ok(StateSpec::Gibbs { beta, product: s.product.unwrap_or(false) })
        }
        "matrix" => {
            only(&["path"])?;
            let p =
                s.path.ok_or_else(|| cx.err("state", None, "matrix state needs path", "add path = \"state.csv\""))?;
            let base = cx.path.parent().unwrap_or(Path::new("."));
            Ok(StateSpec::Matrix { path: if p.is_absolute() { p } else { base.join(p) } })
        }
        other => {
            Err(cx.err("state", Some("kind"), format!("unknown state kind '{other}'"), "use fano, gibbs or matrix"))
        }
    }
}

fn resolve_protocol(cx: &Ctx, p: RawProtocol, model: &ModelSpec) -> Result<ProtocolSpec, CliError> {
    if p.projections.len() < 2 {
        return Err(cx.err(
            "protocol",
            Some("projections"),
            "at least two projections are needed",
            "for example projections = [\"+x\", \"-x\"]",
        ));
    }
    let check = |v: &VectorSpec, key: &str| {
        v.resolve()
            .map(|_| ())
            .map_err(|e| cx.err("protocol", Some(key), e, "use +x, -x, +y, -y, +z, -z or [[re, im], [re, im]]"))
    };
    for v in &p.projections {
        check(v, "projections")?;
    }
    check(&p.standard, "standard")?;
    check(&p.observable, "observable")?;
    match (&p.pulse, &p.pulse_matrix) {
        (Some(_), Some(_)) => {
            return Err(cx.err(
                "protocol",
                Some("pulse_matrix"),
                "both pulse and pulse_matrix are set",
                "keep only one",
            ))
        }
        (Some(name), None) if !matches!(name.as_str(), "x" | "y" | "z") => {
            return Err(cx.err(
                "protocol",
                Some("pulse"),
                format!("unknown pulse generator '{name}'"),
                "use x, y or z (Pauli operators)",
            ))
        }
        _ => {}
    }
    let pulse = if p.pulse.is_none() && p.pulse_matrix.is_none() { Some("z".to_string()) } else { p.pulse };
    for (key, shared, specific) in [("t1_count", p.count, p.t1_count), ("t2_count", p.count, p.t2_count)] {
        if shared.is_some() && specific.is_some() {
            return Err(cx.err("protocol", Some(key), "both count and a per-axis count are set", "keep only one"));
        }
    }
    for (key, shared, specific) in [("t1_spacing", p.spacing, p.t1_spacing), ("t2_spacing", p.spacing, p.t2_spacing)] {
        if shared.is_some() && specific.is_some() {
            return Err(cx.err("protocol", Some(key), "both spacing and a per-axis spacing are set", "keep only one"));
        }
    }
    let t1_count = p.t1_count.or(p.count).unwrap_or(DEFAULT_COUNT);
    let t2_count = p.t2_count.or(p.count).unwrap_or(DEFAULT_COUNT);
    let default_spacing = || -> Result<f64, CliError> {
        let (h, _, _) =
            model.build().map_err(|e| cx.err("model", None, e.to_string(), "check the model parameters"))?;
        TimeGrid::resolving(&h, t1_count)
            .map(|g| g.spacing)
            .map_err(|e| cx.err("protocol", None, e.to_string(), "set spacing explicitly"))
    };
    let t1_spacing = match p.t1_spacing.or(p.spacing) {
        Some(s) => s,
        None => default_spacing()?,
    };
    let t2_spacing = match p.t2_spacing.or(p.spacing) {
        Some(s) => s,
        None => default_spacing()?,
    };
    for (key, n, s) in [("t1_count", t1_count, t1_spacing), ("t2_count", t2_count, t2_spacing)] {
        TimeGrid::new(n, s)
            .map_err(|e| cx.err("protocol", Some(key), e.to_string(), "counts must be >= 1 and spacings > 0"))?;
        if n < crate::spectral::MIN_GRID {
            return Err(cx.err(
                "protocol",
                Some(key),
                format!("{n} samples are too few for a spectrum"),
                format!("use at least {}", crate::spectral::MIN_GRID),
            ));
        }
    }
    let pulse_angle = p.pulse_angle.unwrap_or(FRAC_PI_2);
    if !pulse_angle.is_finite() {
        return Err(cx.err("protocol", Some("pulse_angle"), "pulse angle is not finite", "use an angle in radians"));
    }
    Ok(ProtocolSpec {
        projections: p.projections,
        standard: p.standard,
        observable: p.observable,
        pulse,
        pulse_matrix: p.pulse_matrix,
        pulse_angle,
        t1_count,
        t1_spacing,
        t2_count,
        t2_spacing,
        dt: p.dt,
    })
}

fn resolve_analysis(cx: &Ctx, a: Option<RawAnalysis>, model: &ModelSpec) -> Result<AnalysisSpec, CliError> {
    let a = a.unwrap_or(RawAnalysis {
        window: None,
        zero_pad: None,
        peak_threshold: None,
        calibrate: None,
        calibration_beta: None,
        probe: None,
    });
    let defaults = Analysis::default();
    let window = a.window.unwrap_or_else(|| defaults.window.to_string());
    window
        .parse::<crate::spectral::Window>()
        .map_err(|e| cx.err("analysis", Some("window"), e.to_string(), "use none or hann"))?;
    let spec = AnalysisSpec {
        window,
        zero_pad: a.zero_pad.unwrap_or(defaults.zero_pad),
        peak_threshold: a.peak_threshold.unwrap_or(defaults.peak_threshold),
        calibrate: a.calibrate.unwrap_or(false),
        calibration_beta: a.calibration_beta,
        probe: a.probe.unwrap_or_else(|| "xx".into()),
    };
    spec.analysis()
        .validate()
        .map_err(|e| cx.err("analysis", None, e.to_string(), "zero_pad in 1..=16, peak_threshold in (0, 1)"))?;
    parse_probe(&spec.probe)
        .map_err(|e| cx.err("analysis", Some("probe"), e, "use two letters from x, y, z, e.g. probe = \"xx\""))?;
    if spec.calibrate {
        if !matches!(model, ModelSpec::Toy { .. }) {
            return Err(cx.err(
                "analysis",
                Some("calibrate"),
                "calibration reads a two-qubit correlation tensor",
                "calibrate only toy models",
            ));
        }
        match spec.calibration_beta {
            Some(b) if b > 0.0 && b.is_finite() => {}
            Some(b) => {
                return Err(cx.err(
                    "analysis",
                    Some("calibration_beta"),
                    format!("calibration_beta = {b} is invalid"),
                    "use a finite value > 0",
                ))
            }
            None => {
                return Err(cx.err(
                    "analysis",
                    Some("calibrate"),
                    "calibration needs a thermal beta",
                    "add calibration_beta = 0.125",
                ))
            }
        }
    } else if spec.calibration_beta.is_some() {
        return Err(cx.err(
            "analysis",
            Some("calibration_beta"),
            "calibration_beta is set but calibrate is off",
            "set calibrate = true or remove it",
        ));
    }
    Ok(spec)
}

fn resolve_sweep(cx: &Ctx, s: RawSweep, model: &ModelSpec, state: &StateSpec) -> Result<SweepSpec, CliError> {
    if !SWEEP_PARAMETERS.contains(&s.parameter.as_str()) {
        return Err(cx.err(
            "sweep",
            Some("parameter"),
            format!("cannot sweep '{}'", s.parameter),
            format!("use one of {}", SWEEP_PARAMETERS.join(", ")),
        ));
    }
    if s.values.is_empty() || s.values.iter().any(|v| !v.is_finite()) {
        return Err(cx.err(
            "sweep",
            Some("values"),
            "values must be a non-empty list of finite numbers",
            "for example values = [-0.8, 0.0, 0.8]",
        ));
    }
    let applies = match s.parameter.as_str() {
        "state.c_x" | "state.c_y" | "state.c_z" => matches!(state, StateSpec::Fano { .. }),
        "state.beta" => matches!(state, StateSpec::Gibbs { .. }),
        "model.xi" | "model.gamma" => !matches!(model, ModelSpec::Toy { .. }),
        _ => true,
    };
    if !applies {
        return Err(cx.err(
            "sweep",
            Some("parameter"),
            format!("'{}' does not exist for this model and state", s.parameter),
            "sweep a parameter of the configured kinds",
        ));
    }
    Ok(SweepSpec { parameter: s.parameter, values: s.values })
}

/// `"xy"` to `(0, 1)`.
pub fn parse_probe(s: &str) -> Result<(usize, usize), String> {
    let idx = |c: char| match c {
        'x' => Ok(0),
        'y' => Ok(1),
        'z' => Ok(2),
        other => Err(format!("'{other}' is not an axis")),
    };
    let chars: Vec<char> = s.trim().chars().collect();
    if chars.len() != 2 {
        return Err(format!("probe '{s}' must have two letters"));
    }
    Ok((idx(chars[0])?, idx(chars[1])?))
}

impl NvSpec {
    pub fn params(&self) -> NvCavityParams {
        let mut p = NvCavityParams::uniform(self.n_spins, self.xi).with_decay(self.gamma);
        p.g = vec![self.g; self.n_spins];
        p.delta = self.delta;
        p.omega_raman = vec![self.omega_raman; self.n_spins];
        p.theta = self.g * self.g / self.delta;
        p
    }
}

impl ModelSpec {
    /// Frequency-unit Hamiltonian, dissipators and system-environment split.
    pub fn build(&self) -> crate::Result<(ComplexMatrix, Vec<DissipatorChannel>, HilbertStructure)> {
        match self {
            ModelSpec::Toy { omega_s, omega_e, lambda } => {
                let p = ToyModelParams { omega_s: *omega_s, omega_e: *omega_e, lambda: *lambda };
                p.validate()?;
                Ok((toy_hamiltonian(&p), Vec::new(), HilbertStructure::qubits(2)))
            }
            ModelSpec::NvPairwise(nv) | ModelSpec::NvCollective(nv) => {
                let p = nv.params();
                let h = match self {
                    ModelSpec::NvPairwise(_) => nv_pairwise_hamiltonian(&p)?,
                    _ => nv_collective_hamiltonian(nv.n_spins, nv.xi)?,
                };
                let channels = nv_dissipators(&p, &HilbertStructure::qubits(nv.n_spins), false)?;
                // The first NV is the probed system, the others its environment.
                Ok((h, channels, HilbertStructure::bipartite(2, 1 << (nv.n_spins - 1))))
            }
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        match self {
            ModelSpec::Toy { .. } => Vec::new(),
            ModelSpec::NvPairwise(nv) | ModelSpec::NvCollective(nv) => nv.params().adiabatic_warnings(),
        }
    }
}

impl AnalysisSpec {
    pub fn analysis(&self) -> Analysis {
        Analysis {
            window: self.window.parse().unwrap_or_default(),
            zero_pad: self.zero_pad,
            peak_threshold: self.peak_threshold,
        }
    }
}

impl ProtocolSpec {
    fn pulse_generator(&self) -> Result<ComplexMatrix, String> {
        if let Some(rows) = &self.pulse_matrix {
            let rows: Vec<Vec<C64>> =
                rows.iter().map(|r| r.iter().map(|[re, im]| C64::new(*re, *im)).collect()).collect();
            if rows.len() != 2 || rows.iter().any(|r| r.len() != 2) {
                return Err("pulse_matrix must be 2x2".into());
            }
            return Ok(ComplexMatrix::from_rows(&rows));
        }
        Ok(match self.pulse.as_deref().unwrap_or("z") {
            "x" => pauli::x(),
            "y" => pauli::y(),
            _ => pauli::z(),
        })
    }

    pub fn config(&self, hamiltonian: &ComplexMatrix, channels: Vec<DissipatorChannel>) -> crate::Result<PrepsyConfig> {
        let vec = |v: &VectorSpec| v.resolve().map_err(crate::Error::InvalidParameters);
        let spacing = self.t1_spacing.min(self.t2_spacing);
        let evolution = match self.dt {
            Some(dt) => EvolutionSpec::from_frequency_hamiltonian(hamiltonian, channels, dt)?,
            None => EvolutionSpec::for_sampling(hamiltonian, channels, spacing)?,
        };
        let config = PrepsyConfig {
            projections: self.projections.iter().map(vec).collect::<crate::Result<_>>()?,
            standard_state: vec(&self.standard)?,
            pulse: PulseSpec::new(self.pulse_generator().map_err(crate::Error::InvalidParameters)?, self.pulse_angle)?,
            observable: vec(&self.observable)?,
            t1: TimeGrid::new(self.t1_count, self.t1_spacing)?,
            t2: TimeGrid::new(self.t2_count, self.t2_spacing)?,
            evolution,
        };
        config.validate()?;
        Ok(config)
    }
}

impl StateSpec {
    pub fn build(&self, hamiltonian: &ComplexMatrix, structure: &HilbertStructure) -> crate::Result<DensityMatrix> {
        match self {
            StateSpec::Fano { c, u, v } => {
                let t = [[c[0], 0.0, 0.0], [0.0, c[1], 0.0], [0.0, 0.0, c[2]]];
                build_fano(&FanoTwoQubit { u: *u, v: *v, t })
            }
            StateSpec::Gibbs { beta, product } => {
                let g = gibbs_state(hamiltonian, *beta, structure.clone())?;
                if *product {
                    Ok(decompose(&g)?.product())
                } else {
                    Ok(g)
                }
            }
            StateSpec::Matrix { path } => {
                let m = output::read_matrix_csv(path, structure.dim())
                    .map_err(|e| crate::Error::InvalidState(format!("{}: {e}", path.display())))?;
                DensityMatrix::new(m, structure.clone())
            }
        }
    }
}

impl ExperimentFile {
    /// Builds the state, pipeline configuration and analysis settings.
    pub fn prepare(&self) -> Result<Prepared, CliError> {
        let (hamiltonian, channels, structure) = self.model.build()?;
        let state = self.state.build(&hamiltonian, &structure)?;
        let config = self.protocol.config(&hamiltonian, channels)?;
        Ok(Prepared { state, config, hamiltonian, analysis: self.analysis.analysis(), warnings: self.model.warnings() })
    }

    /// Copy with the sweep parameter set to `value` and the sweep removed.
    pub fn with_parameter(&self, parameter: &str, value: f64) -> Result<ExperimentFile, CliError> {
        let mut e = self.clone();
        e.sweep = None;
        let bad = || CliError::Config {
            path: PathBuf::from("<sweep>"),
            message: format!("parameter '{parameter}' does not apply to this experiment"),
        };
        match (parameter, &mut e.state, &mut e.model) {
            ("state.c_x", StateSpec::Fano { c, .. }, _) => c[0] = value,
            ("state.c_y", StateSpec::Fano { c, .. }, _) => c[1] = value,
            ("state.c_z", StateSpec::Fano { c, .. }, _) => c[2] = value,
            ("state.beta", StateSpec::Gibbs { beta, .. }, _) => *beta = value,
            ("model.xi", _, ModelSpec::NvPairwise(nv) | ModelSpec::NvCollective(nv)) => nv.xi = value,
            ("model.gamma", _, ModelSpec::NvPairwise(nv) | ModelSpec::NvCollective(nv)) => nv.gamma = value,
            ("protocol.pulse_angle", _, _) => e.protocol.pulse_angle = value,
            _ => return Err(bad()),
        }
        Ok(e)
    }

    /// Resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_else(|e| format!("# cannot render configuration: {e}\n"))
    }
}
