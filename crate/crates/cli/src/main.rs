//! `auditgame` command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use auditgame::bounds::{bound_report, fine_for_tolerance};
use auditgame::casestudy::{
    cost_rows_to_csv, ftbp_preset, misreport_surface_preset, surface_rows_to_csv, sweep_costs,
    sweep_misreport_surface, SweepSpec,
};
use auditgame::cost::{compare, cost_at_budget, CostReport};
use auditgame::oracle::{nonexistence_probe, GridSpec};
use auditgame::scalar::parse_rational;
use auditgame::{
    budget_thresholds, parse_config, signaling_equilibrium, verify_equilibrium, BudgetAnalysis, GameConfig,
    GameError, NumericMode, Rational, Scalar,
};
use auditgame_ledger::ledger::read_json;
use auditgame_ledger::{
    audit_directory, scheme_by_name, sign_receipt, Challenge, Coin, CoinMetadata, Ledger, LedgerError, PublicKey,
    RawReceipt, Receipt, SecretKey,
};

#[derive(Parser)]
#[command(name = "auditgame", version, about = "Audit-game equilibria, bounds, cost sweeps and the receipt ledger")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// Game description (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Arithmetic backend; overrides the config's `mode`.
    #[arg(long, global = true)]
    mode: Option<NumericMode>,
    /// Grid resolution for verification and probes.
    #[arg(long, global = true, default_value_t = 100)]
    resolution: usize,
    /// Seed for every seeded random source (the toy signature scheme).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for sweeps; all available cores when omitted.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the config's audit budget.
    #[arg(long, global = true)]
    budget: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Clone, Default)]
struct GridArgs {
    /// Low-type shares: `a,b,c` or `start:step:end`.
    #[arg(long)]
    qmin_grid: Option<String>,
    #[arg(long)]
    c_grid: Option<String>,
    #[arg(long)]
    k_grid: Option<String>,
    /// Coalition sizes, comma separated.
    #[arg(long)]
    coalition: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium for the configured budget regime.
    Solve,
    /// Misreport-probability caps and the excess-payment cap.
    Bounds {
        /// Also report the smallest fine keeping excess at or below this value.
        #[arg(long)]
        max_excess: Option<String>,
    },
    /// Audit versus no-audit cost.
    Cost,
    /// Cost sweep over the case-study grid (CSV).
    Sweep(GridArgs),
    /// Largest equilibrium misreport probability over a (q_min, c, k) grid (CSV).
    Surface(GridArgs),
    /// Solve, then check best responses and unilateral deviations on a grid.
    Verify,
    /// Certify profitable deviations at every grid profile of a two-user game.
    Probe {
        /// Include one certificate per profile in the report.
        #[arg(long)]
        traces: bool,
    },
    /// Coin ledger operations.
    #[command(subcommand)]
    Ledger(LedgerCommand),
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Create a ledger directory (`--dir`) or a user key pair (`--key-out`).
    Keygen {
        #[arg(long, conflicts_with = "key_out")]
        dir: Option<PathBuf>,
        /// Writes the secret key here and the public key to `<path>.pub`.
        #[arg(long)]
        key_out: Option<PathBuf>,
        #[arg(long, default_value = "ed25519")]
        scheme: String,
    },
    /// Issue one coin to a recipient.
    Mint {
        #[arg(long)]
        dir: PathBuf,
        /// Recipient public key as hex, or a path to a `.pub` file.
        #[arg(long)]
        recipient: String,
        #[arg(long)]
        coin_id: u64,
        #[arg(long, default_value = "")]
        note: String,
        #[arg(long, default_value_t = 0)]
        valid_from: u64,
        #[arg(long, default_value_t = u64::MAX)]
        valid_until: u64,
    },
    /// Two-phase spending.
    #[command(subcommand)]
    Spend(SpendCommand),
    /// Re-verify every approved receipt in the log.
    AuditLog {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum SpendCommand {
    /// Ask the ledger for a challenge; writes a spend request.
    Begin {
        #[arg(long)]
        dir: PathBuf,
        /// Coin files (repeat the flag or separate with commas).
        #[arg(long, value_delimiter = ',', required = true)]
        coin: Vec<PathBuf>,
        #[arg(long)]
        goods: String,
        #[arg(long)]
        price: u64,
    },
    /// Sign a spend request with the user's own secret key.
    Sign {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        request: PathBuf,
    },
    /// Submit a signed receipt for approval.
    Finalize {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        receipt: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Game(GameError),
    Ledger(LedgerError),
    Usage(String),
    Io(std::io::Error),
    /// A check ran and failed; the report was already written.
    CheckFailed(String),
}

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        CliError::Game(e)
    }
}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> Self {
        CliError::Ledger(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Game(e) if e.is_regime() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Game(e) => write!(f, "{e}"),
            CliError::Ledger(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
            CliError::Io(e) => write!(f, "i/o: {e}"),
            CliError::CheckFailed(m) => f.write_str(m),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn emit(global: &GlobalArgs, text: &str) -> CliResult<()> {
    match &global.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_json(global: &GlobalArgs, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    text.push('\n');
    emit(global, &text)
}

struct Loaded {
    game: GameConfig<Rational>,
    mode: NumericMode,
}

fn load(global: &GlobalArgs) -> CliResult<Loaded> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("this command needs --config <file>".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let file = parse_config(&text)?;
    let mut game = file.game;
    if let Some(b) = &global.budget {
        game = game.with_budget(Some(parse_rational(b)?))?;
    }
    Ok(Loaded { game, mode: global.mode.or(file.mode).unwrap_or_default() })
}

/// Grid values from `a,b,c` or `start:step:end` (inclusive, exact).
fn parse_grid(text: &str) -> CliResult<Vec<Rational>> {
    let text = text.trim();
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Usage(format!("grid `{text}` must be start:step:end")));
        }
        let (start, step, end) = (parse_rational(parts[0])?, parse_rational(parts[1])?, parse_rational(parts[2])?);
        if step <= Rational::from_i64(0) {
            return Err(CliError::Usage(format!("grid `{text}` needs a positive step")));
        }
        let mut out = Vec::new();
        let mut x = start;
        while x <= end {
            out.push(x.clone());
            x = x + step.clone();
            if out.len() > 1_000_000 {
                return Err(CliError::Usage(format!("grid `{text}` has too many points")));
            }
        }
        Ok(out)
    } else {
        text.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_rational(s).map_err(CliError::from))
            .collect()
    }
}

fn parse_sizes(text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| CliError::Usage(format!("coalition size `{s}`: {e}"))))
        .collect()
}

fn sweep_spec(global: &GlobalArgs, grid: &GridArgs, preset: SweepSpec<Rational>) -> CliResult<(SweepSpec<Rational>, NumericMode)> {
    let mut spec = preset;
    let mut mode = global.mode.unwrap_or(NumericMode::Float);
    if global.config.is_some() {
        let loaded = load(global)?;
        spec.base = loaded.game;
        mode = global.mode.unwrap_or(loaded.mode);
    }
    if let Some(g) = &grid.qmin_grid {
        spec.q_min_grid = parse_grid(g)?;
    }
    if let Some(g) = &grid.c_grid {
        spec.c_grid = parse_grid(g)?;
    }
    if let Some(g) = &grid.k_grid {
        spec.k_grid = parse_grid(g)?;
    }
    if let Some(g) = &grid.coalition {
        spec.coalition_grid = parse_sizes(g)?;
    }
    spec.validate()?;
    for (c, k) in spec.pairs_with_fine_below_cost() {
        log::info!("grid pair c={} k={} has a fine below the audit cost", c.render(), k.render());
    }
    Ok((spec, mode))
}

fn analysis_json<T: Scalar>(a: &BudgetAnalysis<T>) -> Value {
    json!({
        "regime": a.regime.to_string(),
        "threshold_general": a.threshold_general.render(),
        "threshold_two_type": a.threshold_two_type.as_ref().map(|t| t.render()),
        "threshold_coalition": a.threshold_coalition.render(),
    })
}

fn solve_doc<T: Scalar>(game: &GameConfig<T>, format: Format) -> CliResult<String> {
    let result = signaling_equilibrium(game)?;
    if format == Format::Csv {
        let mut out = String::from("kind,truth,signal,value\n");
        let pi = result.strategy();
        for m in 0..game.num_types() {
            for s in 0..game.num_types() {
                out.push_str(&format!("strategy,{},{},{}\n", game.types()[m], game.types()[s], pi.prob(s, m).to_sig(15)));
            }
        }
        for s in 0..game.num_types() {
            out.push_str(&format!("audit,,{},{}\n", game.types()[s], result.audit().prob(s).to_sig(15)));
        }
        return Ok(out);
    }
    let mut doc = result.to_json(game);
    doc["mode"] = json!(T::MODE);
    doc["budget_analysis"] = analysis_json(&budget_thresholds(game));
    Ok(pretty(&doc))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

fn bounds_doc<T: Scalar>(game: &GameConfig<T>, format: Format, max_excess: Option<&str>) -> CliResult<String> {
    let eq = signaling_equilibrium(game).ok();
    let report = bound_report(game, eq.as_ref().map(|e| e.strategy()));
    if format == Format::Csv {
        return Ok(report.to_csv());
    }
    let mut caps = Vec::new();
    for (s, row) in report.caps.iter().enumerate() {
        for (m, cap) in row.iter().enumerate() {
            if let Some(cap) = cap {
                caps.push(json!({
                    "signal": report.labels[s],
                    "truth": report.labels[m],
                    "cap": cap.render(),
                    "vacuous": report.vacuous.contains(&(s, m)),
                    "binding": report.binding_pairs.contains(&(s, m)),
                }));
            }
        }
    }
    let mut doc = json!({
        "mode": T::MODE,
        "misreport_caps": caps,
        "excess_cap": report.excess_cap.render(),
        "equilibrium_excess": eq.as_ref().map(|e| e.excess.render()),
    });
    if let Some(x) = max_excess {
        let x = T::from_rational(&parse_rational(x)?);
        doc["fine_for_max_excess"] = json!(fine_for_tolerance(game, &x)?.render());
    }
    Ok(pretty(&doc))
}

fn cost_doc<T: Scalar>(game: &GameConfig<T>, format: Format) -> CliResult<String> {
    let report: CostReport<T> = if game.budget().is_some() && game.num_types() == 2 {
        cost_at_budget(game)?
    } else {
        compare(game)?
    };
    if format == Format::Csv {
        return Ok(format!(
            "cost_no_audit,cost_audit,budget,excess,dominates\n{},{},{},{},{}\n",
            report.cost_no_audit.to_sig(15),
            report.cost_audit.to_sig(15),
            report.budget_component.to_sig(15),
            report.excess_component.to_sig(15),
            report.dominance
        ));
    }
    Ok(pretty(&report.to_json()))
}

fn verify_doc<T: Scalar>(game: &GameConfig<T>, resolution: usize) -> CliResult<(String, bool)> {
    let result = signaling_equilibrium(game)?;
    let report = verify_equilibrium(&result, game, resolution)?;
    let doc = json!({
        "mode": T::MODE,
        "provenance": result.provenance.to_string(),
        "verification": report.to_json(),
    });
    Ok((pretty(&doc), report.passed))
}

fn with_mode<R>(
    loaded: &Loaded,
    exact: impl FnOnce(&GameConfig<Rational>) -> CliResult<R>,
    float: impl FnOnce(&GameConfig<f64>) -> CliResult<R>,
) -> CliResult<R> {
    match loaded.mode {
        NumericMode::Rational => exact(&loaded.game),
        NumericMode::Float => float(&loaded.game.to_float()),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    let format = g.format.unwrap_or(Format::Json);
    match &cli.command {
        Command::Solve => {
            let loaded = load(g)?;
            let text = with_mode(&loaded, |c| solve_doc(c, format), |c| solve_doc(c, format))?;
            emit(g, &text)
        }
        Command::Bounds { max_excess } => {
            let loaded = load(g)?;
            let format = g.format.unwrap_or(Format::Csv);
            let m = max_excess.as_deref();
            let text = with_mode(&loaded, |c| bounds_doc(c, format, m), |c| bounds_doc(c, format, m))?;
            emit(g, &text)
        }
        Command::Cost => {
            let loaded = load(g)?;
            let text = with_mode(&loaded, |c| cost_doc(c, format), |c| cost_doc(c, format))?;
            emit(g, &text)
        }
        Command::Sweep(grid) => {
            let (spec, mode) = sweep_spec(g, grid, ftbp_preset())?;
            let text = match mode {
                NumericMode::Rational => cost_rows_to_csv(&sweep_costs(&spec, g.workers)?, &spec.reference_line),
                NumericMode::Float => {
                    let spec = spec.map(|x| x.to_f64());
                    cost_rows_to_csv(&sweep_costs(&spec, g.workers)?, &spec.reference_line)
                }
            };
            emit(g, &text)
        }
        Command::Surface(grid) => {
            let (spec, mode) = sweep_spec(g, grid, misreport_surface_preset())?;
            let text = match mode {
                NumericMode::Rational => surface_rows_to_csv(&sweep_misreport_surface(&spec, g.workers)?),
                NumericMode::Float => {
                    surface_rows_to_csv(&sweep_misreport_surface(&spec.map(|x| x.to_f64()), g.workers)?)
                }
            };
            emit(g, &text)
        }
        Command::Verify => {
            let loaded = load(g)?;
            let r = g.resolution;
            let (text, passed) = with_mode(&loaded, |c| verify_doc(c, r), |c| verify_doc(c, r))?;
            emit(g, &text)?;
            if passed {
                Ok(())
            } else {
                Err(CliError::CheckFailed("verification failed: a deviation beats the grid slack".into()))
            }
        }
        Command::Probe { traces } => {
            let loaded = load(g)?;
            let report = nonexistence_probe(&loaded.game, &GridSpec::new(g.resolution)?)?;
            emit_json(g, &report.to_json(*traces))?;
            if report.failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::CheckFailed(format!(
                    "{} of {} profiles have no certified deviation",
                    report.failures.len(),
                    report.profiles_checked
                )))
            }
        }
        Command::Ledger(cmd) => run_ledger(g, cmd),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn recipient_key(text: &str) -> CliResult<PublicKey> {
    let path = Path::new(text);
    let hex = if path.exists() { read_text(path)? } else { text.to_string() };
    Ok(PublicKey::from_hex(&hex)?)
}

fn run_ledger(g: &GlobalArgs, cmd: &LedgerCommand) -> CliResult<()> {
    match cmd {
        LedgerCommand::Keygen { dir, key_out, scheme } => {
            let scheme: Arc<dyn auditgame_ledger::SignatureScheme> = scheme_by_name(scheme, g.seed)?.into();
            match (dir, key_out) {
                (Some(dir), None) => {
                    let ledger = Ledger::create(dir, scheme)?;
                    emit_json(g, &json!({ "dir": dir.display().to_string(), "scheme": ledger.scheme().name(), "admin_pk": ledger.admin_pk().to_hex() }))
                }
                (None, Some(path)) => {
                    let kp = scheme.keygen()?;
                    auditgame_ledger::ledger::write_secret_file(path, &kp.secret.to_hex())?;
                    let pub_path = PathBuf::from(format!("{}.pub", path.display()));
                    fs::write(&pub_path, format!("{}\n", kp.public.to_hex()))?;
                    emit_json(g, &json!({ "scheme": scheme.name(), "public_key": kp.public.to_hex(), "public_key_file": pub_path.display().to_string() }))
                }
                _ => Err(CliError::Usage("ledger keygen needs exactly one of --dir or --key-out".into())),
            }
        }
        LedgerCommand::Mint { dir, recipient, coin_id, note, valid_from, valid_until } => {
            let ledger = Ledger::open(dir, g.seed)?;
            let meta = CoinMetadata { coin_id: *coin_id, valid_from: *valid_from, valid_until: *valid_until, note: note.clone() };
            let coin = ledger.mint(&recipient_key(recipient)?, meta)?;
            emit_json(g, &serde_json::to_value(&coin).expect("coin json"))
        }
        LedgerCommand::Spend(SpendCommand::Begin { dir, coin, goods, price }) => {
            let ledger = Ledger::open(dir, g.seed)?;
            let coins: Vec<Coin> = coin.iter().map(|p| read_json(p)).collect::<Result<_, _>>()?;
            let owner = coins
                .first()
                .map(|c| c.owner_pk.clone())
                .ok_or_else(|| CliError::Usage("at least one --coin is required".into()))?;
            let raw = RawReceipt::new(goods.clone(), *price, owner, coins);
            let challenge = ledger.begin_spend(&raw)?;
            emit_json(g, &json!({ "scheme": ledger.scheme().name(), "raw": raw, "challenge": challenge }))
        }
        LedgerCommand::Spend(SpendCommand::Sign { key, request }) => {
            let req: Value = read_json(request)?;
            let bad = |m: &str| CliError::Usage(format!("{}: {m}", request.display()));
            let scheme = scheme_by_name(req["scheme"].as_str().ok_or_else(|| bad("missing scheme"))?, g.seed)?;
            let raw: RawReceipt = serde_json::from_value(req["raw"].clone()).map_err(|e| bad(&e.to_string()))?;
            let challenge: Challenge =
                serde_json::from_value(req["challenge"].clone()).map_err(|e| bad(&e.to_string()))?;
            let sk = SecretKey::from_hex(&read_text(key)?)?;
            let receipt = sign_receipt(scheme.as_ref(), &sk, raw, challenge)?;
            emit_json(g, &serde_json::to_value(&receipt).expect("receipt json"))
        }
        LedgerCommand::Spend(SpendCommand::Finalize { dir, receipt }) => {
            let ledger = Ledger::open(dir, g.seed)?;
            let receipt: Receipt = read_json(receipt)?;
            match ledger.finalize_spend(&receipt) {
                Ok(a) => emit_json(g, &json!({ "approved": true, "index": a.index, "receipt_digest": a.receipt_digest })),
                Err(LedgerError::Rejected(r)) => {
                    emit_json(g, &json!({ "approved": false, "reason": r.code(), "detail": r.to_string() }))?;
                    Err(CliError::CheckFailed(format!("spend rejected: {r}")))
                }
                Err(e) => Err(e.into()),
            }
        }
        LedgerCommand::AuditLog { dir } => {
            let report = audit_directory(dir)?;
            emit_json(g, &serde_json::to_value(&report).expect("report json"))?;
            if report.all_valid {
                Ok(())
            } else {
                Err(CliError::CheckFailed("some approved receipts fail re-verification".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
