//! The `pauli-shuffle` command-line driver.
//!
//! Subcommands: `estimate` (Monte Carlo), `cost` (per-channel budget
//! analysis), `oracle` (exact dense check), `classify` / `census` /
//! `cross-section` (stabilizer-polytope analysis), `choi` (Choi-state costs).
//!
//! Exit codes: `0` success, `1` validation or parse failure, `2` numerical
//! failure (solver breakdown, sample budget overflow). All JSON reports
//! embed the tool version plus the seed and mode when applicable.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::Value;

use pauli_shuffle::bloch::{bloch_from_dense, dense_from_bloch, BlochVector, DenseOperator};
use pauli_shuffle::channel::build_named;
use pauli_shuffle::circuit::{parse_circuit, NamedState};
use pauli_shuffle::magic::{
    census, cross_section, enumerate_stabilizer_states, family_state, Classification, Family,
    StateClass, CLASSIFY_TOL,
};
use pauli_shuffle::oracle::{choi_state, circuit_expectation};
use pauli_shuffle::sampler::{
    cost_report, estimate, hoeffding_samples, recommended_mode, BudgetSpec, CostReport, Mode,
};
use pauli_shuffle::Error;

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Raster window for `cross-section`, chosen to cover all three classes and
/// the invalid fringe of every family.
const SECTION_WINDOW: (f64, f64) = (-0.35, 0.35);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command.run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[derive(Parser)]
#[command(name = "pauli-shuffle", version, about = "Quasiprobability estimation of noisy quantum circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo estimate of the circuit's observable expectation.
    Estimate(EstimateArgs),
    /// Per-channel sampling costs, range bounds, and Hoeffding budgets.
    Cost(CostArgs),
    /// Exact dense-matrix expectation (slow; the cross-check reference).
    Oracle(OracleArgs),
    /// Classify a state file as stabilizer mixture, bound, or magic.
    Classify(ClassifyArgs),
    /// Class fractions over random densities.
    Census(CensusArgs),
    /// CSV raster of a two-parameter state family.
    CrossSection(CrossSectionArgs),
    /// Choi-state cost of every channel in a circuit.
    Choi(ChoiArgs),
}

// ---------------------------------------------------------------------------
// Failure plumbing
// ---------------------------------------------------------------------------

/// A terminal failure carrying its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Failure {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match e {
            Error::Solver(_) | Error::Budget(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::validation(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Failure {
        Failure::validation(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

// ---------------------------------------------------------------------------
// Report envelope
// ---------------------------------------------------------------------------

/// Common wrapper around every JSON report.
#[derive(Serialize)]
struct Report<T: Serialize> {
    version: &'static str,
    command: &'static str,
    seed: Option<u64>,
    mode: Option<Mode>,
    report: T,
}

impl<T: Serialize> Report<T> {
    fn new(command: &'static str, seed: Option<u64>, mode: Option<Mode>, report: T) -> Report<T> {
        Report {
            version: VERSION,
            command,
            seed,
            mode,
            report,
        }
    }

    fn emit(&self, out: Option<&Path>) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_text(out, &text)
    }
}

fn write_text(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, format!("{text}\n"))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn load_circuit(path: &Path) -> CliResult<pauli_shuffle::circuit::Circuit> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    Ok(parse_circuit(&text)?)
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Forward,
    Backward,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Forward => Mode::Forward,
            ModeArg::Backward => Mode::Backward,
        }
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse::<Family>().map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct EstimateArgs {
    /// Circuit JSON file.
    circuit: PathBuf,
    /// Propagation direction; defaults to the smaller analytic range bound.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Fixed sample count (conflicts with --epsilon/--delta).
    #[arg(long)]
    samples: Option<usize>,
    /// Additive error target for a Hoeffding budget (needs --delta).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Failure probability for a Hoeffding budget (needs --epsilon).
    #[arg(long)]
    delta: Option<f64>,
    /// RNG seed; identical seeds reproduce reports bit for bit.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fuse adjacent channels on overlapping targets before sampling.
    #[arg(long)]
    precompose: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl EstimateArgs {
    fn run(&self) -> CliResult<()> {
        let circuit = load_circuit(&self.circuit)?;
        let budget = match (self.samples, self.epsilon, self.delta) {
            (Some(n), None, None) => BudgetSpec::Fixed(n),
            (None, Some(epsilon), Some(delta)) => BudgetSpec::Accuracy { epsilon, delta },
            (None, None, None) => {
                return Err(Failure::validation(
                    "choose a budget: --samples N or --epsilon F --delta F",
                ))
            }
            _ => {
                return Err(Failure::validation(
                    "set exactly one budget: --samples alone, or --epsilon with --delta",
                ))
            }
        };
        let mode = match self.mode {
            Some(m) => m.into(),
            None => recommended_mode(&circuit)?,
        };
        let report = estimate(&circuit, mode, budget, self.seed, self.precompose)?;
        Report::new("estimate", Some(self.seed), Some(mode), report).emit(self.out.as_deref())
    }
}

// ---------------------------------------------------------------------------
// cost
// ---------------------------------------------------------------------------

#[derive(Args)]
struct CostArgs {
    /// Circuit JSON file.
    circuit: PathBuf,
    /// Fuse adjacent channels before costing.
    #[arg(long)]
    precompose: bool,
    /// With --delta: also report the Hoeffding sample counts.
    #[arg(long)]
    epsilon: Option<f64>,
    /// With --epsilon: also report the Hoeffding sample counts.
    #[arg(long)]
    delta: Option<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// [`CostReport`] plus optional sample counts for a requested accuracy.
#[derive(Serialize)]
struct CostOutput {
    #[serde(flatten)]
    cost: CostReport,
    hoeffding_forward: Option<usize>,
    hoeffding_backward: Option<usize>,
}

impl CostArgs {
    fn run(&self) -> CliResult<()> {
        let circuit = load_circuit(&self.circuit)?;
        let cost = cost_report(&circuit, self.precompose)?;
        let (hoeffding_forward, hoeffding_backward) = match (self.epsilon, self.delta) {
            (Some(epsilon), Some(delta)) => (
                Some(hoeffding_samples(cost.forward_range_bound, epsilon, delta)?),
                Some(hoeffding_samples(cost.backward_range_bound, epsilon, delta)?),
            ),
            (None, None) => (None, None),
            _ => {
                return Err(Failure::validation(
                    "--epsilon and --delta must be given together",
                ))
            }
        };
        let mode = cost.recommended_mode;
        let output = CostOutput {
            cost,
            hoeffding_forward,
            hoeffding_backward,
        };
        Report::new("cost", None, Some(mode), output).emit(self.out.as_deref())
    }
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

#[derive(Args)]
struct OracleArgs {
    /// Circuit JSON file.
    circuit: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct OracleOutput {
    value: f64,
}

impl OracleArgs {
    fn run(&self) -> CliResult<()> {
        let circuit = load_circuit(&self.circuit)?;
        let value = circuit_expectation(&circuit)?;
        Report::new("oracle", None, None, OracleOutput { value }).emit(self.out.as_deref())
    }
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ClassifyArgs {
    /// State JSON file: {"named": NAME}, {"family": F, "x": X, "y": Y},
    /// or {"matrix": [[..re, im pairs..]]}.
    state: PathBuf,
    /// Run the robustness program even when the D > 1 shortcut applies.
    #[arg(long)]
    full_lp: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ClassifyArgs {
    fn run(&self) -> CliResult<()> {
        let text = fs::read_to_string(&self.state)
            .map_err(|e| Failure::validation(format!("{}: {e}", self.state.display())))?;
        let value: Value = serde_json::from_str(&text)?;
        let v = state_from_json(&value)?;

        // family points may lie outside the state body
        let dense = dense_from_bloch(&v)?;
        let min_eig = dense
            .eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, &e| m.min(e));
        let classification = if min_eig < -1e-9 {
            Classification {
                label: StateClass::Invalid,
                d_value: v.d_measure(),
                r_value: None,
                tolerance: CLASSIFY_TOL,
            }
        } else {
            let set = enumerate_stabilizer_states(v.num_qubits())?;
            set.classify(&v, CLASSIFY_TOL, self.full_lp)?
        };
        Report::new("classify", None, None, classification).emit(self.out.as_deref())
    }
}

/// Decode the state-file schema into a Bloch vector.
fn state_from_json(value: &Value) -> CliResult<BlochVector> {
    if let Some(name) = value.get("named") {
        let name = name
            .as_str()
            .ok_or_else(|| Failure::validation("\"named\" must be a string"))?;
        let named = NamedState::from_name(name)
            .ok_or_else(|| Failure::validation(format!("unknown state name '{name}'")))?;
        return Ok(named.bloch());
    }
    if let Some(fam) = value.get("family") {
        let fam = fam
            .as_str()
            .ok_or_else(|| Failure::validation("\"family\" must be \"a\", \"b\", or \"c\""))?;
        let family = parse_family(fam).map_err(Failure::validation)?;
        let x = field_f64(value, "x")?;
        let y = field_f64(value, "y")?;
        return Ok(family_state(family, x, y));
    }
    if let Some(matrix) = value.get("matrix") {
        let m = dense_matrix_from_json(matrix)?;
        let op = DenseOperator::new(m)?;
        op.validate_density(1e-9)?;
        return Ok(bloch_from_dense(&op)?);
    }
    Err(Failure::validation(
        "state file needs \"named\", \"family\", or \"matrix\"",
    ))
}

fn field_f64(value: &Value, key: &str) -> CliResult<f64> {
    value
        .get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Failure::validation(format!("missing numeric field \"{key}\"")))
}

/// Square matrix of `[re, im]` pairs with power-of-two dimension.
fn dense_matrix_from_json(value: &Value) -> CliResult<DMatrix<Complex64>> {
    let rows = value
        .as_array()
        .ok_or_else(|| Failure::validation("\"matrix\" must be an array of rows"))?;
    let dim = rows.len();
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Failure::validation(format!(
            "matrix dimension {dim} is not a power of two"
        )));
    }
    let mut m = DMatrix::zeros(dim, dim);
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .filter(|r| r.len() == dim)
            .ok_or_else(|| Failure::validation(format!("row {i} must have {dim} entries")))?;
        for (j, entry) in row.iter().enumerate() {
            let pair = entry
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| Failure::validation(format!("entry ({i},{j}) must be [re, im]")))?;
            let re = pair[0]
                .as_f64()
                .ok_or_else(|| Failure::validation(format!("entry ({i},{j}) re is not a number")))?;
            let im = pair[1]
                .as_f64()
                .ok_or_else(|| Failure::validation(format!("entry ({i},{j}) im is not a number")))?;
            m[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// census
// ---------------------------------------------------------------------------

#[derive(Args)]
struct CensusArgs {
    /// Register width of the sampled densities.
    #[arg(long)]
    qubits: usize,
    /// Number of Hilbert-Schmidt draws.
    #[arg(long)]
    count: usize,
    /// RNG seed; draw i uses stream i, independent of worker count.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CensusArgs {
    fn run(&self) -> CliResult<()> {
        let report = census(self.qubits, self.count, self.seed)?;
        Report::new("census", Some(self.seed), None, report).emit(self.out.as_deref())
    }
}

// ---------------------------------------------------------------------------
// cross-section
// ---------------------------------------------------------------------------

#[derive(Args)]
struct CrossSectionArgs {
    /// Family to rasterize: a, b, or c.
    #[arg(long, value_parser = parse_family)]
    plane: Family,
    /// Grid points per axis over the fixed window.
    #[arg(long, default_value_t = 61)]
    resolution: usize,
    /// Classify every point with the robustness program.
    #[arg(long)]
    full_lp: bool,
    /// Write the CSV raster here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CrossSectionArgs {
    fn run(&self) -> CliResult<()> {
        let section = cross_section(
            self.plane,
            SECTION_WINDOW,
            SECTION_WINDOW,
            self.resolution,
            self.full_lp,
        )?;
        let header = format!(
            "# pauli-shuffle {VERSION} cross-section plane={} resolution={} full_lp={}",
            serde_json::to_value(self.plane)?.as_str().unwrap_or("?"),
            self.resolution,
            self.full_lp,
        );
        let csv = section.to_csv();
        write_text(self.out.as_deref(), &format!("{header}\n{}", csv.trim_end()))
    }
}

// ---------------------------------------------------------------------------
// choi
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ChoiArgs {
    /// Circuit JSON file.
    circuit: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ChoiLine {
    name: String,
    channel_cost: f64,
    choi_cost: f64,
    /// `D` of the dense Choi state; equals `choi_cost` up to float error.
    choi_d: f64,
}

#[derive(Serialize)]
struct ChoiOutput {
    channels: Vec<ChoiLine>,
}

impl ChoiArgs {
    fn run(&self) -> CliResult<()> {
        let circuit = load_circuit(&self.circuit)?;
        let mut channels = Vec::with_capacity(circuit.ops.len());
        for step in &circuit.ops {
            let tm = build_named(&step.channel)?;
            let choi_d = choi_state(&step.channel)?.bloch()?.d_measure();
            channels.push(ChoiLine {
                name: step.channel.name(),
                channel_cost: tm.channel_cost(),
                choi_cost: tm.choi_cost(),
                choi_d,
            });
        }
        Report::new("choi", None, None, ChoiOutput { channels }).emit(self.out.as_deref())
    }
}

impl Command {
    fn run(&self) -> CliResult<()> {
        match self {
            Command::Estimate(a) => a.run(),
            Command::Cost(a) => a.run(),
            Command::Oracle(a) => a.run(),
            Command::Classify(a) => a.run(),
            Command::Census(a) => a.run(),
            Command::CrossSection(a) => a.run(),
            Command::Choi(a) => a.run(),
        }
    }
}
