//! Command-line pipeline: validate → compile both paths → link → bootload →
//! simulate / model-check / translate. One subcommand per stage; global
//! flags for board shape and timing, optionally preset from a `vigil.toml`
//! key=value file (flags win over the file).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checker::{self, Verdict, DEFAULT_STATE_CAP};
use crate::codegen::{compile_a, compile_b, link, MemoryLayoutConfig, ProgramImage};
use crate::kernel::{
    parse_program_with_io, resolve, to_source, CyclicProgram, ExprKind, IoConfig, Resolved,
    StmtKind, IO_ON,
};
use crate::relay;
use crate::statemachine as sm;
use crate::vm::{self, BoardConfig, RunStatus};

#[derive(Parser)]
#[command(
    name = "vigil",
    about = "Toolchain and dual-channel board simulator for cyclic safety programs",
    version
)]
struct Cli {
    /// Key=value configuration file; defaults to ./vigil.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Digital input capacity of the target board.
    #[arg(long, global = true)]
    io_inputs: Option<u8>,
    /// Digital output capacity of the target board.
    #[arg(long, global = true)]
    io_outputs: Option<u8>,
    /// Board cycle period in simulated milliseconds.
    #[arg(long, global = true)]
    cycle_ms: Option<u32>,
    /// Trace rendering for `sim`.
    #[arg(long, global = true, value_enum)]
    trace_format: Option<TraceFormat>,
    /// Worker threads for independent property runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TraceFormat {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a kernel program and print its diagnostic report.
    Check { source: PathBuf },
    /// Compile both paths and link the dual-binary image.
    Build(BuildArgs),
    /// Bootload an image and replay a scenario against it.
    Sim {
        image: PathBuf,
        scenario: PathBuf,
        /// Write the trace here instead of stdout.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Translate a relay-circuit netlist to kernel source.
    TranslateRelay {
        netlist: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Settling passes unrolled per cycle (default scales with the
        /// relay count, capped at 1024).
        #[arg(long)]
        max_iter: Option<u32>,
    },
    /// Translate cyclic state machines to kernel source.
    TranslateSm {
        machine: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Milliseconds per model time unit.
        #[arg(long, default_value_t = 100)]
        cycle_unit: u32,
        /// Constant valuations, name=value; repeatable.
        #[arg(long = "const", value_name = "NAME=VALUE")]
        consts: Vec<String>,
        /// Pin assignment file; sequential assignment when absent.
        #[arg(long)]
        pinmap: Option<PathBuf>,
    },
    /// Model-check a kernel program against a property file.
    Modelcheck {
        source: PathBuf,
        properties: PathBuf,
        #[arg(long, default_value_t = 50)]
        depth: u32,
        /// Cap on explored (state x input) pairs.
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        cap: usize,
        /// Directory for counterexample scenario files.
        #[arg(long, default_value = ".")]
        cex_dir: PathBuf,
    },
}

#[derive(Args)]
struct BuildArgs {
    source: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write human-readable assembly for both paths.
    #[arg(long)]
    emit_listing: bool,
    /// Also write an Intel-HEX-style text rendering (inspection only).
    #[arg(long)]
    emit_hex: bool,
    /// Test hook: rename a variable in the program fed to path B, provoking
    /// a linker symbol mismatch.
    #[arg(long, value_name = "OLD=NEW", hide = true)]
    rename_for_b: Option<String>,
}

#[derive(Debug, Clone, Copy)]
struct Settings {
    io: IoConfig,
    cycle_ms: u32,
    trace_json: bool,
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {}", message);
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, String> {
    let settings = load_settings(&cli)?;
    match cli.command {
        Command::Check { ref source } => cmd_check(source, settings),
        Command::Build(ref args) => cmd_build(args, settings),
        Command::Sim {
            ref image,
            ref scenario,
            ref trace,
        } => cmd_sim(image, scenario, trace.as_deref(), settings),
        Command::TranslateRelay {
            ref netlist,
            ref output,
            max_iter,
        } => cmd_translate_relay(netlist, output.as_deref(), max_iter, settings),
        Command::TranslateSm {
            ref machine,
            ref output,
            cycle_unit,
            ref consts,
            ref pinmap,
        } => cmd_translate_sm(
            machine,
            output.as_deref(),
            cycle_unit,
            consts,
            pinmap.as_deref(),
            settings,
        ),
        Command::Modelcheck {
            ref source,
            ref properties,
            depth,
            cap,
            ref cex_dir,
        } => cmd_modelcheck(source, properties, depth, cap, cex_dir, cli.jobs, settings),
    }
}

fn load_settings(cli: &Cli) -> Result<Settings, String> {
    let mut io = IoConfig::default();
    let mut cycle_ms = 5u32;
    let mut trace_json = false;
    let path = cli.config.clone().or_else(|| {
        Path::new("vigil.toml")
            .exists()
            .then(|| "vigil.toml".into())
    });
    if let Some(path) = path {
        let text = fs::read_to_string(&path)
            .map_err(|e| format!("E_IO cannot read {}: {}", path.display(), e))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                format!("{} line {}: expected key=value", path.display(), idx + 1)
            })?;
            let value = value.trim();
            match key.trim() {
                "io_inputs" => io.inputs = parse_cfg(value, &path, idx)?,
                "io_outputs" => io.outputs = parse_cfg(value, &path, idx)?,
                "cycle_ms" => cycle_ms = parse_cfg(value, &path, idx)?,
                "trace_format" => trace_json = value == "json",
                other => {
                    return Err(format!(
                        "{} line {}: unknown key '{}'",
                        path.display(),
                        idx + 1,
                        other
                    ))
                }
            }
        }
    }
    if let Some(v) = cli.io_inputs {
        io.inputs = v;
    }
    if let Some(v) = cli.io_outputs {
        io.outputs = v;
    }
    if let Some(v) = cli.cycle_ms {
        cycle_ms = v;
    }
    if let Some(f) = cli.trace_format {
        trace_json = f == TraceFormat::Json;
    }
    if cycle_ms == 0 {
        return Err("cycle period must be at least 1 ms".into());
    }
    Ok(Settings {
        io,
        cycle_ms,
        trace_json,
    })
}

fn parse_cfg<T: std::str::FromStr>(value: &str, path: &Path, idx: usize) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{} line {}: bad value '{}'", path.display(), idx + 1, value))
}

fn read_file(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("E_IO cannot read {}: {}", path.display(), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), String> {
    fs::write(path, bytes).map_err(|e| format!("E_IO cannot write {}: {}", path.display(), e))
}

fn load_program(path: &Path, io: IoConfig) -> Result<CyclicProgram, String> {
    let text = read_file(path)?;
    parse_program_with_io(&text, io).map_err(|e| e.to_string())
}

fn checked_resolve(program: &CyclicProgram) -> Result<Resolved, String> {
    resolve(program).map_err(|report| {
        let mut s = String::from("program rejected:\n");
        s.push_str(&report.to_lines());
        s
    })
}

fn cmd_check(source: &Path, settings: Settings) -> Result<i32, String> {
    let program = load_program(source, settings.io)?;
    let report = crate::kernel::validate(&program);
    if report.is_ok() {
        println!("ok: {} checks clean", source.display());
        Ok(0)
    } else {
        print!("{}", report.to_lines());
        Ok(1)
    }
}

fn cmd_build(args: &BuildArgs, settings: Settings) -> Result<i32, String> {
    let program = load_program(&args.source, settings.io)?;
    let resolved = checked_resolve(&program)?;
    let bin_a = compile_a(&resolved).map_err(|e| e.to_string())?;
    let program_b = match &args.rename_for_b {
        Some(spec) => {
            let (old, new) = spec
                .split_once('=')
                .ok_or_else(|| "expected --rename-for-b OLD=NEW".to_string())?;
            rename_variable(&program, old, new)
        }
        None => program.clone(),
    };
    let resolved_b = checked_resolve(&program_b)?;
    let bin_b = compile_b(&resolved_b).map_err(|e| e.to_string())?;
    let image = link(&bin_a, &bin_b, &MemoryLayoutConfig::default(), settings.io)
        .map_err(|e| e.to_string())?;
    write_file(&args.output, &image.to_bytes())?;
    if args.emit_listing {
        let stem = args.output.with_extension("");
        write_file(&stem.with_extension("a.lst"), bin_a.listing().as_bytes())?;
        write_file(&stem.with_extension("b.lst"), bin_b.listing().as_bytes())?;
    }
    if args.emit_hex {
        write_file(
            &args.output.with_extension("hex"),
            image.to_hex_text().as_bytes(),
        )?;
    }
    print!("{}", image);
    Ok(0)
}

fn cmd_sim(
    image_path: &Path,
    scenario_path: &Path,
    trace_path: Option<&Path>,
    settings: Settings,
) -> Result<i32, String> {
    let bytes = fs::read(image_path)
        .map_err(|e| format!("E_IO cannot read {}: {}", image_path.display(), e))?;
    let image = ProgramImage::from_bytes(&bytes).map_err(|e| e.to_string())?;
    let scenario = vm::parse_scenario(&read_file(scenario_path)?).map_err(|e| e.to_string())?;
    let cfg = BoardConfig {
        cycle_ms: settings.cycle_ms,
        ..BoardConfig::default()
    };
    let trace = vm::run_scenario(&image, &scenario, cfg, vm::RunOptions::default())
        .map_err(|e| e.to_string())?;
    let rendered = if settings.trace_json {
        trace.to_json()
    } else {
        trace.to_text()
    };
    match trace_path {
        Some(path) => write_file(path, rendered.as_bytes())?,
        None => {
            print!("{}", rendered);
            std::io::stdout().flush().ok();
        }
    }
    Ok(match trace.status {
        RunStatus::Running => 0,
        RunStatus::Panic { .. } => 2,
    })
}

fn cmd_translate_relay(
    netlist_path: &Path,
    output: Option<&Path>,
    max_iter: Option<u32>,
    settings: Settings,
) -> Result<i32, String> {
    let netlist = relay::parse_netlist(&read_file(netlist_path)?).map_err(|errors| {
        let mut s = String::from("netlist rejected:\n");
        for e in errors {
            s.push_str(&format!("{}\n", e));
        }
        s
    })?;
    let max_iter = max_iter.unwrap_or_else(|| relay::default_max_iter(netlist.relays.len()));
    // Best-effort oscillation probe from the rest state; the runtime
    // fail-safe covers whatever this cannot see.
    let probe = relay::settle(
        &netlist,
        &netlist.inputs.iter().map(|i| (i.clone(), false)).collect(),
        &relay::CircuitState::all_inactive(&netlist),
        max_iter,
    );
    if matches!(probe, relay::SettleResult::Oscillation) {
        eprintln!(
            "warning: circuit does not reach a fixed point from its rest state; \
             the generated program will fall back to the fail-safe path at runtime"
        );
    }
    let program =
        relay::translate_relay(&netlist, max_iter, settings.io).map_err(|e| e.to_string())?;
    emit_program(&program, output)
}

fn cmd_translate_sm(
    machine_path: &Path,
    output: Option<&Path>,
    cycle_unit: u32,
    consts: &[String],
    pinmap: Option<&Path>,
    settings: Settings,
) -> Result<i32, String> {
    let machines = sm::parse_machines(&read_file(machine_path)?).map_err(|e| e.to_string())?;
    let mut const_values = BTreeMap::new();
    for spec in consts {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| format!("expected --const NAME=VALUE, got '{}'", spec))?;
        let value: i64 = value
            .trim()
            .parse()
            .map_err(|_| format!("bad constant value in '{}'", spec))?;
        const_values.insert(name.trim().to_string(), value);
    }
    let pins = match pinmap {
        Some(path) => sm::parse_pinmap(&read_file(path)?).map_err(|e| e.to_string())?,
        None => sm::default_pinmap(&machines, settings.io).map_err(|e| e.to_string())?,
    };
    let program = sm::translate_sm(&machines, cycle_unit, &const_values, &pins, settings.io)
        .map_err(|e| e.to_string())?;
    emit_program(&program, output)
}

fn emit_program(program: &CyclicProgram, output: Option<&Path>) -> Result<i32, String> {
    // The emitted source must always pass its own check.
    checked_resolve(program).map_err(|e| format!("internal: generated program invalid: {e}"))?;
    let source = to_source(program);
    match output {
        Some(path) => write_file(path, source.as_bytes())?,
        None => print!("{}", source),
    }
    Ok(0)
}

fn cmd_modelcheck(
    source: &Path,
    properties: &Path,
    depth: u32,
    cap: usize,
    cex_dir: &Path,
    jobs: usize,
    settings: Settings,
) -> Result<i32, String> {
    let program = load_program(source, settings.io)?;
    let resolved = checked_resolve(&program)?;
    let props = checker::parse_properties(&read_file(properties)?).map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| e.to_string())?;
    let results: Vec<Result<Verdict, checker::CheckError>> = pool.install(|| {
        use rayon::prelude::*;
        props
            .par_iter()
            .map(|p| checker::model_check(&resolved, p, depth, cap))
            .collect()
    });
    let mut all_verified = true;
    for (prop, result) in props.iter().zip(results) {
        match result {
            Ok(Verdict::Verified {
                depth,
                states_explored,
            }) => println!(
                "VERIFIED {} depth={} explored={}",
                prop.name, depth, states_explored
            ),
            Ok(Verdict::CounterExample { trace, .. }) => {
                all_verified = false;
                let path = cex_dir.join(format!("cex_{}.scn", prop.name));
                write_file(&path, counterexample_scenario(&resolved, &trace).as_bytes())?;
                println!(
                    "COUNTEREXAMPLE {} length={} scenario={}",
                    prop.name,
                    trace.len(),
                    path.display()
                );
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(if all_verified { 0 } else { 1 })
}

/// Render a checker input trace as a replayable scenario.
fn counterexample_scenario(resolved: &Resolved, trace: &[Vec<u8>]) -> String {
    let mut s = String::new();
    for (cycle, inputs) in trace.iter().enumerate() {
        for &(pin, _) in &resolved.input_pins {
            let on = inputs[pin as usize - 1] == IO_ON;
            s.push_str(&format!(
                "at {} input {} {}\n",
                cycle,
                pin,
                if on { "ON" } else { "OFF" }
            ));
        }
    }
    s.push_str(&format!("run {}\n", trace.len()));
    s
}

/// Rename a declared variable and every reference to it.
fn rename_variable(program: &CyclicProgram, old: &str, new: &str) -> CyclicProgram {
    fn fix_expr(expr: &mut crate::kernel::Expr, old: &str, new: &str) {
        match &mut expr.kind {
            ExprKind::Var(name) | ExprKind::Feedback(name) => {
                if name == old {
                    *name = new.to_string();
                }
            }
            ExprKind::ModArith(_, _, a, b)
            | ExprKind::PlainArith(_, a, b)
            | ExprKind::Cmp(_, a, b)
            | ExprKind::Bit(_, a, b)
            | ExprKind::Logic(_, a, b) => {
                fix_expr(a, old, new);
                fix_expr(b, old, new);
            }
            ExprKind::Since(inner) => fix_expr(inner, old, new),
            ExprKind::Lit(_) | ExprKind::GetMsTick => {}
        }
    }
    fn fix_block(block: &mut [crate::kernel::Stmt], old: &str, new: &str) {
        for stmt in block {
            match &mut stmt.kind {
                StmtKind::Assign { target, value } => {
                    if target == old {
                        *target = new.to_string();
                    }
                    fix_expr(value, old, new);
                }
                StmtKind::Local { value, .. } => fix_expr(value, old, new),
                StmtKind::If {
                    cond,
                    then_block,
                    else_block,
                } => {
                    fix_expr(cond, old, new);
                    fix_block(then_block, old, new);
                    fix_block(else_block, old, new);
                }
            }
        }
    }
    let mut out = program.clone();
    for decl in &mut out.decls {
        if decl.name == old {
            decl.name = new.to_string();
        }
    }
    fix_block(&mut out.init, old, new);
    fix_block(&mut out.logic, old, new);
    out
}
