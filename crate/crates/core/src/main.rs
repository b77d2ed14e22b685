use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use quadinfra::ideals::{principal_cycle, ExperimentParams, ReducedIdeal, UnitFunction};
use quadinfra::lattice::{dual_basis, RealLattice};
use quadinfra::numfield::{make_field, QuadraticField, DEFAULT_PRECISION};
use quadinfra::oracle::{cf_regulator, make_synthetic, nonprincipal_ideal};
use quadinfra::pip::{run_pip, PipInstance, Verdict, DEFAULT_PIP_TRIALS};
use quadinfra::qsim::{collapse, qft_spectrum};
use quadinfra::unitgroup::{empirical_success, run_unit_group, run_unit_group_field, success_bound, trial_rng, RunConfig};
use quadinfra::Error;

#[derive(Parser)]
#[command(name = "quadinfra", version, about = "Unit-group and principal-ideal experiments over real quadratic orders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each may also come from `--config`.
#[derive(Args, Clone, Default)]
struct Common {
    /// Squarefree D ≥ 2 of the order ℤ[√D].
    #[arg(long)]
    d: Option<u64>,
    /// log₂ of the domain size q.
    #[arg(long)]
    log2q: Option<u32>,
    /// Scale N (power of two).
    #[arg(long)]
    n: Option<u64>,
    /// Zero-fill factor.
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Working precision in bits.
    #[arg(long)]
    precision: Option<u32>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv.
    #[arg(long)]
    format: Option<String>,
    /// key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Recover the regulator and fundamental unit.
    Units(Common),
    /// Decide principality of a reduced ideal.
    Pip {
        #[command(flatten)]
        common: Common,
        /// Reduced ideal as P,Q; the unit ideal when absent.
        #[arg(long)]
        ideal: Option<String>,
    },
    /// Exact QFT spectrum of one collapsed f_N state.
    Spectrum(Common),
    /// Tabulate f_N over a range of inputs.
    ProbeF {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        start: Option<i64>,
        #[arg(long)]
        count: Option<u64>,
    },
    /// Classical ground truth.
    Oracle {
        #[command(subcommand)]
        query: OracleQuery,
    },
    /// Hidden-lattice experiment on a planted rank-2 lattice.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Basis vectors as "a,b;c,d".
        #[arg(long)]
        basis: Option<String>,
        /// Displacement shells merged into one label.
        #[arg(long)]
        bucket: Option<u64>,
    },
}

#[derive(Subcommand)]
enum OracleQuery {
    /// Regulator from the continued-fraction period.
    Regulator(Common),
    /// Principal cycle as CSV rows (p, q_coeff, delta).
    Cycle(Common),
    /// Least reduced ideal off the principal cycle, or null.
    Nonprincipal(Common),
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Run(#[from] Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Run(e) => match e {
                Error::Inconclusive(_)
                | Error::RankDeficient(_)
                | Error::Singular
                | Error::RestartRequired
                | Error::PrecisionExhausted(_) => 3,
                _ => 2,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Merged flag and config-file values.
struct Settings {
    values: BTreeMap<String, String>,
    out: Option<PathBuf>,
}

impl Settings {
    fn new(common: &Common, extra: &[(&str, Option<String>)]) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        let mut out = None;
        if let Some(path) = &common.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("--config: cannot read {}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| CliError::Usage(format!("--config: line {} is not key=value", i + 1)))?;
                let key = key.trim().replace('_', "-");
                if key == "out" {
                    out = Some(PathBuf::from(value.trim()));
                } else {
                    values.insert(key, value.trim().to_string());
                }
            }
        }
        let mut set = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                values.insert(key.to_string(), v);
            }
        };
        set("d", common.d.map(|v| v.to_string()));
        set("log2q", common.log2q.map(|v| v.to_string()));
        set("n", common.n.map(|v| v.to_string()));
        set("k", common.k.map(|v| v.to_string()));
        set("trials", common.trials.map(|v| v.to_string()));
        set("seed", common.seed.map(|v| v.to_string()));
        set("precision", common.precision.map(|v| v.to_string()));
        set("workers", common.workers.map(|v| v.to_string()));
        set("format", common.format.clone());
        for (key, v) in extra {
            set(key, v.clone());
        }
        if common.out.is_some() {
            out = common.out.clone();
        }
        Ok(Settings { values, out })
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| CliError::Usage(format!("--{key}: invalid value {v:?}: {e}"))),
        }
    }

    fn required<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        let v = self
            .values
            .get(key)
            .ok_or_else(|| CliError::Usage(format!("--{key} is required")))?;
        v.parse().map_err(|e| CliError::Usage(format!("--{key}: invalid value {v:?}: {e}")))
    }

    fn field(&self) -> CliResult<QuadraticField> {
        make_field(self.required("d")?).map_err(|e| CliError::Usage(format!("--d: {e}")))
    }

    fn csv(&self, default_csv: bool) -> CliResult<bool> {
        let default = if default_csv { "csv" } else { "json" };
        match self.get("format", default.to_string())?.as_str() {
            "csv" => Ok(true),
            "json" => Ok(false),
            other => Err(CliError::Usage(format!("--format: expected json or csv, got {other:?}"))),
        }
    }

    fn params(&self, r: usize, log2q: u32, n: u64, k: u64) -> CliResult<ExperimentParams> {
        let log2q: u32 = self.get("log2q", log2q)?;
        if !(1..=40).contains(&log2q) {
            return Err(CliError::Usage(format!("--log2q: {log2q} outside 1..=40")));
        }
        let n: u64 = self.get("n", n)?;
        if !n.is_power_of_two() {
            return Err(CliError::Usage(format!("--n: {n} is not a power of two")));
        }
        let k: u64 = self.get("k", k)?;
        if k == 0 {
            return Err(CliError::Usage("--k: must be at least 1".into()));
        }
        let precision: u32 = self.get("precision", DEFAULT_PRECISION)?;
        ExperimentParams::new(r, n, 1 << log2q, k, precision)
            .map_err(|e| CliError::Usage(format!("--precision: {e}")))
    }

    fn run_config(&self, trials: usize) -> CliResult<RunConfig> {
        let trials: usize = self.get("trials", trials)?;
        if trials == 0 {
            return Err(CliError::Usage("--trials: must be positive".into()));
        }
        let workers: usize = self.get("workers", 1)?;
        if workers == 0 {
            return Err(CliError::Usage("--workers: must be positive".into()));
        }
        Ok(RunConfig {
            trials,
            seed: self.get("seed", 0)?,
            workers,
        })
    }

    fn emit(&self, text: &str) -> CliResult<()> {
        match &self.out {
            Some(path) => std::fs::write(path, text)?,
            None => {
                let mut stdout = std::io::stdout().lock();
                match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                    other => other?,
                }
            }
        }
        Ok(())
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

/// One header line and one row from a flat JSON object.
fn to_csv_row<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("plain data serializes");
    let mut keys = Vec::new();
    let mut cells = Vec::new();
    flatten("", &v, &mut keys, &mut cells);
    format!("{}\n{}\n", keys.join(","), cells.join(","))
}

fn flatten(prefix: &str, v: &serde_json::Value, keys: &mut Vec<String>, cells: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, inner) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}_{k}") };
                flatten(&key, inner, keys, cells);
            }
        }
        serde_json::Value::Null => {
            keys.push(prefix.to_string());
            cells.push(String::new());
        }
        serde_json::Value::String(s) => {
            keys.push(prefix.to_string());
            cells.push(s.clone());
        }
        other => {
            keys.push(prefix.to_string());
            cells.push(other.to_string());
        }
    }
}

#[derive(Serialize)]
struct UnitJson {
    x: i128,
    y: i128,
}

#[derive(Serialize)]
struct UnitsJson {
    d: u64,
    n_param: u64,
    q: u64,
    k: u64,
    trials: usize,
    restarts: usize,
    accepted: usize,
    regulator: f64,
    unit: UnitJson,
    success_rate: f64,
    seed: u64,
}

#[derive(Serialize)]
struct IdealJson {
    p: i64,
    q_coeff: i64,
}

impl From<ReducedIdeal> for IdealJson {
    fn from(i: ReducedIdeal) -> Self {
        IdealJson { p: i.p, q_coeff: i.q }
    }
}

#[derive(Serialize)]
struct PipJson {
    d: u64,
    ideal: IdealJson,
    verdict: &'static str,
    theta: Option<f64>,
    samples: usize,
    coprime_attempts: usize,
    seed: u64,
}

#[derive(Serialize)]
struct SynthJson {
    n_param: u64,
    q: u64,
    k: u64,
    bucket: u64,
    trials: usize,
    restarts: usize,
    accepted: usize,
    planted_det: f64,
    recovered_det: f64,
    relative_error: f64,
    empirical_success: f64,
    success_bound: f64,
    seed: u64,
}

#[derive(Serialize)]
struct RegulatorJson {
    d: u64,
    regulator: f64,
}

#[derive(Serialize)]
struct NonprincipalJson {
    d: u64,
    ideal: Option<IdealJson>,
}

fn units(common: &Common) -> CliResult<()> {
    let s = Settings::new(common, &[])?;
    let field = s.field()?;
    let params = s.params(1, 16, 64, 3)?;
    let config = s.run_config(200)?;
    let csv = s.csv(false)?;
    let res = run_unit_group_field(&field, &params, &config)?;
    let unit = res.fundamental_unit.as_ref().expect("verified on success");
    let big = |x: &rug::Integer| {
        x.to_i128()
            .ok_or_else(|| CliError::Run(Error::InvalidParams("fundamental unit exceeds 128 bits".into())))
    };
    let out = UnitsJson {
        d: field.d(),
        n_param: params.n,
        q: params.q,
        k: params.k,
        trials: config.trials,
        restarts: res.stats.restarts,
        accepted: res.stats.accepted,
        regulator: res.regulator.expect("set on success"),
        unit: UnitJson {
            x: big(&unit.a)?,
            y: big(&unit.b)?,
        },
        success_rate: res.stats.success_rate,
        seed: config.seed,
    };
    s.emit(&if csv { to_csv_row(&out) } else { to_json(&out) })
}

fn parse_ideal(field: &QuadraticField, text: &str) -> CliResult<ReducedIdeal> {
    let bad = || CliError::Usage(format!("--ideal: expected P,Q, got {text:?}"));
    let (p, q) = text.split_once(',').ok_or_else(bad)?;
    let p: i64 = p.trim().parse().map_err(|_| bad())?;
    let q: i64 = q.trim().parse().map_err(|_| bad())?;
    ReducedIdeal::new(field, p, q).map_err(|e| CliError::Usage(format!("--ideal: {e}")))
}

fn pip(common: &Common, ideal: &Option<String>) -> CliResult<()> {
    let s = Settings::new(common, &[("ideal", ideal.clone())])?;
    let field = s.field()?;
    let params = s.params(2, 10, 64, 1)?;
    let unit_params = ExperimentParams::new(1, params.n, 1 << 16, 3, params.precision)?;
    let config = s.run_config(DEFAULT_PIP_TRIALS)?;
    let csv = s.csv(false)?;
    let ideal = match s.values.get("ideal") {
        Some(text) => parse_ideal(&field, text)?,
        None => ReducedIdeal::unit_ideal(&field),
    };
    let instance = PipInstance::new(field, ideal, params, unit_params)?;
    let res = run_pip(&instance, &config)?;
    let (verdict, theta) = match res.verdict {
        Verdict::Principal(t) => ("principal", Some(t)),
        Verdict::NotPrincipal => ("not_principal", None),
    };
    let out = PipJson {
        d: field.d(),
        ideal: ideal.into(),
        verdict,
        theta,
        samples: res.samples,
        coprime_attempts: res.coprime_attempts,
        seed: config.seed,
    };
    s.emit(&if csv { to_csv_row(&out) } else { to_json(&out) })
}

fn spectrum(common: &Common) -> CliResult<()> {
    let s = Settings::new(common, &[])?;
    let field = s.field()?;
    let params = s.params(1, 16, 64, 3)?;
    let config = s.run_config(200)?;
    if !s.csv(true)? {
        return Err(CliError::Usage("--format: spectrum output is csv only".into()));
    }
    if params.qk() > 1 << 24 {
        return Err(Error::DomainTooLarge(64 - (params.qk() - 1).leading_zeros()).into());
    }
    let f = UnitFunction::new(principal_cycle(&field, params.precision)?, params.n);
    // The first trial whose collapse passes the periodicity test.
    for trial in 0..config.trials {
        let mut rng = trial_rng(config.seed, trial);
        match collapse(&f, &params, &mut rng) {
            Ok(state) => {
                let dist = qft_spectrum::<f64>(&state, &params)?;
                return s.emit(&dist.to_csv());
            }
            Err(Error::RestartRequired) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::Inconclusive(format!("every collapse in {} trials required a restart", config.trials)).into())
}

fn probe_f(common: &Common, start: Option<i64>, count: Option<u64>) -> CliResult<()> {
    let s = Settings::new(
        common,
        &[("start", start.map(|v| v.to_string())), ("count", count.map(|v| v.to_string()))],
    )?;
    let field = s.field()?;
    let n: u64 = s.get("n", 64)?;
    if !n.is_power_of_two() {
        return Err(CliError::Usage(format!("--n: {n} is not a power of two")));
    }
    let precision: u32 = s.get("precision", DEFAULT_PRECISION)?;
    let start: i64 = s.get("start", 0)?;
    let count: u64 = s.get("count", 256)?;
    if count > 1 << 20 {
        return Err(CliError::Usage(format!("--count: {count} exceeds 2^20")));
    }
    let f = UnitFunction::new(principal_cycle(&field, precision)?, n);
    let rows: Vec<(i64, ReducedIdeal)> = (0..count as i64).map(|i| (start + i, f.eval(start + i))).collect();
    if s.csv(true)? {
        let mut out = String::from("v,p,q_coeff\n");
        for (v, i) in rows {
            out.push_str(&format!("{v},{},{}\n", i.p, i.q));
        }
        s.emit(&out)
    } else {
        #[derive(Serialize)]
        struct Row {
            v: i64,
            p: i64,
            q_coeff: i64,
        }
        let rows: Vec<Row> = rows
            .into_iter()
            .map(|(v, i)| Row { v, p: i.p, q_coeff: i.q })
            .collect();
        s.emit(&to_json(&rows))
    }
}

fn oracle(query: &OracleQuery) -> CliResult<()> {
    match query {
        OracleQuery::Regulator(common) => {
            let s = Settings::new(common, &[])?;
            let field = s.field()?;
            let precision: u32 = s.get("precision", DEFAULT_PRECISION)?;
            let r = cf_regulator(field.d(), precision)?.to_f64();
            match s.values.get("format").map(String::as_str) {
                Some("json") => s.emit(&to_json(&RegulatorJson { d: field.d(), regulator: r })),
                Some("csv") => s.emit(&format!("d,regulator\n{},{r:.17e}\n", field.d())),
                None => s.emit(&format!("{r:.6}\n")),
                Some(other) => Err(CliError::Usage(format!("--format: expected json or csv, got {other:?}"))),
            }
        }
        OracleQuery::Cycle(common) => {
            let s = Settings::new(common, &[])?;
            let field = s.field()?;
            let precision: u32 = s.get("precision", DEFAULT_PRECISION)?;
            if !s.csv(true)? {
                return Err(CliError::Usage("--format: cycle output is csv only".into()));
            }
            s.emit(&principal_cycle(&field, precision)?.to_csv())
        }
        OracleQuery::Nonprincipal(common) => {
            let s = Settings::new(common, &[])?;
            let field = s.field()?;
            let precision: u32 = s.get("precision", DEFAULT_PRECISION)?;
            let ideal = nonprincipal_ideal(field.d(), precision)?;
            let out = NonprincipalJson {
                d: field.d(),
                ideal: ideal.map(Into::into),
            };
            s.emit(&if s.csv(false)? { to_csv_row(&out) } else { to_json(&out) })
        }
    }
}

fn parse_basis(text: &str) -> CliResult<RealLattice<f64>> {
    let bad = |why: &str| CliError::Usage(format!("--basis: {why} in {text:?}"));
    let cols: Vec<Vec<f64>> = text
        .split(';')
        .map(|v| v.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("non-numeric entry"))?;
    if cols.is_empty() || cols.iter().any(|c| c.len() != cols.len()) {
        return Err(bad("expected a square basis"));
    }
    RealLattice::new(cols, DEFAULT_PRECISION).map_err(|e| CliError::Usage(format!("--basis: {e}")))
}

fn synth(common: &Common, basis: &Option<String>, bucket: Option<u64>) -> CliResult<()> {
    let s = Settings::new(
        common,
        &[("basis", basis.clone()), ("bucket", bucket.map(|v| v.to_string()))],
    )?;
    let planted = parse_basis(&s.get("basis", "0.9,0.2;0.3,1.2".to_string())?)?;
    let r = planted.rank();
    let params = s.params(r, 8, 64, 6)?;
    let bucket: u64 = s.get("bucket", 24)?;
    if bucket == 0 {
        return Err(CliError::Usage("--bucket: must be at least 1".into()));
    }
    let config = s.run_config(3000)?;
    let csv = s.csv(false)?;
    let oracle = make_synthetic(&planted, params.n, bucket, params.q)?;
    let res = run_unit_group(&oracle, &params, &config)?;
    let planted_det = planted.det().abs();
    let recovered_det = res.lattice.det().abs();
    let success = empirical_success(&oracle, &params, &dual_basis(oracle.scaled_lattice())?)?;
    let out = SynthJson {
        n_param: params.n,
        q: params.q,
        k: params.k,
        bucket,
        trials: config.trials,
        restarts: res.stats.restarts,
        accepted: res.stats.accepted,
        planted_det,
        recovered_det,
        relative_error: (recovered_det - planted_det).abs() / planted_det,
        empirical_success: success,
        success_bound: success_bound(r),
        seed: config.seed,
    };
    s.emit(&if csv { to_csv_row(&out) } else { to_json(&out) })
}

fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Units(common) => units(common),
        Command::Pip { common, ideal } => pip(common, ideal),
        Command::Spectrum(common) => spectrum(common),
        Command::ProbeF { common, start, count } => probe_f(common, *start, *count),
        Command::Oracle { query } => oracle(query),
        Command::Synth { common, basis, bucket } => synth(common, basis, *bucket),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
