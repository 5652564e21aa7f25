//! Command-line front end for the PFC boost simulation lab.
//!
//! Verbs: `run` one scenario, `sweep` a config grid in parallel, `check`
//! the release gate, `oracle` the closed-form steady-state predictions.
//! Every config key doubles as an override flag of the same dotted name,
//! applied after the optional config file in command-line order.
//!
//! Exit codes: 0 success, 2 config or usage error, 3 numerical abort,
//! 4 failed release gate.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use rayon::prelude::*;

use pfclab_core::acceptance;
use pfclab_core::config::Config;
use pfclab_core::engine::{run_scenario, SimResult};
use pfclab_core::error::Error;
use pfclab_core::metrics;
use pfclab_core::steady_state::{self, OperatingPoint};
use pfclab_core::trace::write_csv;

const USAGE: &str = "\
usage: pfclab <verb> [CONFIG] [--<dotted.key> value]... [verb flags]

verbs:
  run     simulate one scenario; writes out.trace / out.metrics if set
  sweep   run a config grid in parallel
            --grid key=v1,v2,...   sweep axis (repeatable, cartesian)
            --out-dir DIR          output directory (default: sweep)
            --traces               keep a trace file per grid point
  check   run the release gate; exits 4 if any criterion fails
  oracle  print steady-state predictions for an operating point
            --lag RAD              current phase lag (default 0)
            --amplitude A          current amplitude (default: the one
                                   that holds controller.V_d at that lag)
  help    this text

CONFIG is a flat key-value file (`plant.L = 1e-3`, one pair per line,
`#` comments). Any key in it can be overridden on the command line with
a flag of the same name: `--plant.L 2e-3` or `--plant.L=2e-3`. The key
schema is documented in the README.";

/// A failure the process should report: exit code plus message.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Domain(_) => 2,
            Error::Numerical { .. } => 3,
        };
        Failure::new(code, e.to_string())
    }
}

fn io_failure(what: &str, path: &Path, e: std::io::Error) -> Failure {
    Failure::new(2, format!("{what} {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(verb) = args.first() else {
        eprintln!("{USAGE}");
        return ExitCode::from(2);
    };
    let rest = &args[1..];
    let outcome = match verb.as_str() {
        "run" => cmd_run(rest),
        "sweep" => cmd_sweep(rest),
        "check" => cmd_check(rest),
        "oracle" => cmd_oracle(rest),
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(Failure::new(2, format!("unknown verb {other:?}\n\n{USAGE}"))),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pfclab: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// One parsed `--flag value`, or a bare positional.
enum Arg {
    Positional(String),
    Flag(String, Option<String>),
}

/// Split the argument list into positionals and `--key value` /
/// `--key=value` pairs. Which flags take a value is decided by the
/// caller, so this only splits on `=`; a flag without `=` gets its value
/// from the next argument on demand.
struct Args<'a> {
    items: &'a [String],
    next: usize,
}

impl<'a> Args<'a> {
    fn new(items: &'a [String]) -> Self {
        Self { items, next: 0 }
    }

    fn take(&mut self) -> Option<Arg> {
        let item = self.items.get(self.next)?;
        self.next += 1;
        if let Some(stripped) = item.strip_prefix("--") {
            match stripped.split_once('=') {
                Some((k, v)) => Some(Arg::Flag(k.to_string(), Some(v.to_string()))),
                None => Some(Arg::Flag(stripped.to_string(), None)),
            }
        } else {
            Some(Arg::Positional(item.clone()))
        }
    }

    /// Value for a flag parsed without `=`: consumes the next argument.
    fn value_for(&mut self, flag: &str, inline: Option<String>) -> Result<String, Failure> {
        if let Some(v) = inline {
            return Ok(v);
        }
        let item = self
            .items
            .get(self.next)
            .ok_or_else(|| Failure::new(2, format!("flag --{flag} needs a value")))?;
        self.next += 1;
        Ok(item.clone())
    }
}

/// Common scenario-building state: optional config file plus overrides,
/// applied in order.
struct Loader {
    cfg: Config,
    config_seen: bool,
}

impl Loader {
    fn new() -> Self {
        Self {
            cfg: Config::default(),
            config_seen: false,
        }
    }

    fn positional(&mut self, path: &str) -> Result<(), Failure> {
        if self.config_seen {
            return Err(Failure::new(
                2,
                format!("unexpected extra positional argument {path:?}"),
            ));
        }
        self.config_seen = true;
        let path = PathBuf::from(path);
        let text =
            fs::read_to_string(&path).map_err(|e| io_failure("cannot read config", &path, e))?;
        self.cfg
            .apply_text(&text)
            .map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))?;
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), Failure> {
        self.cfg.set_key(key, value).map_err(Failure::from)
    }
}

fn cmd_run(rest: &[String]) -> Result<(), Failure> {
    let mut args = Args::new(rest);
    let mut loader = Loader::new();
    while let Some(arg) = args.take() {
        match arg {
            Arg::Positional(p) => loader.positional(&p)?,
            Arg::Flag(key, inline) => {
                let value = args.value_for(&key, inline)?;
                loader.set(&key, &value)?;
            }
        }
    }
    let sc = loader.cfg.resolve()?;
    let result = run_scenario(&sc)?;

    if let Some(path) = &sc.out_trace {
        let path = Path::new(path);
        let file = fs::File::create(path).map_err(|e| io_failure("cannot write trace", path, e))?;
        let mut out = BufWriter::new(file);
        write_csv(&result.trace, &mut out)
            .and_then(|()| out.flush())
            .map_err(|e| io_failure("cannot write trace", path, e))?;
    }
    if let Some(path) = &sc.out_metrics {
        let path = Path::new(path);
        fs::write(path, result.metrics.to_kv())
            .map_err(|e| io_failure("cannot write metrics", path, e))?;
    }
    print_run_summary(&sc.name, &sc, &result);
    Ok(())
}

fn print_run_summary(name: &str, sc: &pfclab_core::ScenarioConfig, result: &SimResult) {
    let m = &result.metrics;
    let p = result.final_plant;
    let saturated = result.trace.iter().filter(|r| r.saturated).count();
    println!(
        "scenario {name:?} ({}): {} steps of {:.3e} s, {} rows{}",
        sc.mode.as_str(),
        sc.steps,
        sc.dt,
        result.trace.len(),
        if sc.switched { ", switched bridge" } else { "" },
    );
    if !sc.events.is_empty() {
        println!(
            "final plant after {} event(s): E = {:.4} V, G = {:.5} S",
            sc.events.len(),
            p.e,
            p.g
        );
    }
    println!("  v_dc           {:10.4} V   (target {} V)", m.v_dc, sc.controller.v_d);
    println!("  power_factor   {:10.4}", m.power_factor);
    println!("  thd            {:10.4}", m.thd);
    println!("  v2_ripple      {:10.1} V^2", m.v2_ripple);
    println!("  i_fund         {:10.4} A", m.i_fund);
    println!("  phase_lag      {:10.4} rad", m.phase_lag);
    println!("  e_hat_rel_err  {:10.3e}", m.e_hat_rel_err);
    println!("  g_hat_rel_err  {:10.3e}", m.g_hat_rel_err);
    println!("  max_i_err      {:10.3e} A", m.max_i_err);
    println!("  eta_slope      {:10.2} 1/s", m.eta_slope);
    println!("  pe_floor       {:10.3e}", m.pe_floor);
    println!("saturated rows: {saturated} of {}", result.trace.len());
    if let Some(path) = &sc.out_trace {
        println!("trace   -> {path}");
    }
    if let Some(path) = &sc.out_metrics {
        println!("metrics -> {path}");
    }
}

fn cmd_sweep(rest: &[String]) -> Result<(), Failure> {
    let mut args = Args::new(rest);
    let mut loader = Loader::new();
    let mut grids: Vec<(String, Vec<String>)> = Vec::new();
    let mut out_dir = PathBuf::from("sweep");
    let mut keep_traces = false;
    while let Some(arg) = args.take() {
        match arg {
            Arg::Positional(p) => loader.positional(&p)?,
            Arg::Flag(key, inline) => match key.as_str() {
                "grid" => {
                    let spec = args.value_for(&key, inline)?;
                    let (axis_key, list) = spec.split_once('=').ok_or_else(|| {
                        Failure::new(2, format!("--grid wants key=v1,v2,..., got {spec:?}"))
                    })?;
                    let values: Vec<String> =
                        list.split(',').map(|v| v.trim().to_string()).collect();
                    if values.iter().any(String::is_empty) {
                        return Err(Failure::new(
                            2,
                            format!("--grid {axis_key}: empty value in {list:?}"),
                        ));
                    }
                    grids.push((axis_key.trim().to_string(), values));
                }
                "out-dir" => out_dir = PathBuf::from(args.value_for(&key, inline)?),
                "traces" => {
                    if inline.is_some() {
                        return Err(Failure::new(2, "--traces takes no value"));
                    }
                    keep_traces = true;
                }
                _ => {
                    let value = args.value_for(&key, inline)?;
                    loader.set(&key, &value)?;
                }
            },
        }
    }
    if grids.is_empty() {
        return Err(Failure::new(2, "sweep needs at least one --grid axis"));
    }
    // Validate axis keys and values up front against a throwaway config so
    // a typo fails the whole sweep before any work starts.
    for (key, values) in &grids {
        let mut probe = loader.cfg.clone();
        for value in values {
            probe
                .set_key(key, value)
                .map_err(|e| Failure::new(2, format!("--grid {key}: {e}")))?;
        }
    }
    fs::create_dir_all(&out_dir).map_err(|e| io_failure("cannot create", &out_dir, e))?;

    let total: usize = grids.iter().map(|(_, v)| v.len()).product();
    let base_name = loader.cfg.name.clone();
    let jobs: Vec<(usize, Vec<(String, String)>)> = (0..total)
        .map(|idx| {
            let mut rem = idx;
            let mut combo = Vec::with_capacity(grids.len());
            // Rightmost axis varies fastest.
            for (key, values) in grids.iter().rev() {
                combo.push((key.clone(), values[rem % values.len()].clone()));
                rem /= values.len();
            }
            combo.reverse();
            (idx, combo)
        })
        .collect();

    let width = total.to_string().len().max(3);
    let rows: Vec<(String, bool)> = jobs
        .par_iter()
        .map(|(idx, combo)| {
            let run_one = || -> Result<SimResult, Error> {
                let mut cfg = loader.cfg.clone();
                for (key, value) in combo {
                    cfg.set_key(key, value)?;
                }
                cfg.name = format!("{base_name}-{idx:0width$}");
                cfg.out_metrics = None;
                cfg.out_trace = keep_traces.then(|| {
                    out_dir
                        .join(format!("{idx:0width$}.trace.csv"))
                        .to_string_lossy()
                        .into_owned()
                });
                let sc = cfg.resolve()?;
                let result = run_scenario(&sc)?;
                if let Some(path) = &sc.out_trace {
                    let path = PathBuf::from(path);
                    let file = fs::File::create(&path)
                        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
                    let mut out = BufWriter::new(file);
                    write_csv(&result.trace, &mut out)
                        .and_then(|()| out.flush())
                        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
                }
                Ok(result)
            };
            let mut row = format!("{idx}");
            for (_, value) in combo {
                row.push(',');
                row.push_str(value);
            }
            let succeeded = match run_one() {
                Ok(result) => {
                    row.push_str(",ok");
                    for value in result.metrics.values() {
                        row.push_str(&format!(",{value:.16e}"));
                    }
                    row.push(',');
                    true
                }
                Err(e) => {
                    let status = match e {
                        Error::Numerical { .. } => "abort",
                        _ => "config",
                    };
                    row.push_str(&format!(",{status}"));
                    for _ in metrics::KV_KEYS {
                        row.push_str(",nan");
                    }
                    row.push(',');
                    row.push_str(&e.to_string().replace([',', '\n'], ";"));
                    false
                }
            };
            (row, succeeded)
        })
        .collect();

    let index_path = out_dir.join("index.csv");
    let mut header = String::from("idx");
    for (key, _) in &grids {
        header.push(',');
        header.push_str(key);
    }
    header.push_str(",status");
    for key in metrics::KV_KEYS {
        header.push(',');
        header.push_str(key);
    }
    header.push_str(",detail");
    let mut text = header;
    for (row, _) in &rows {
        text.push('\n');
        text.push_str(row);
    }
    text.push('\n');
    fs::write(&index_path, text).map_err(|e| io_failure("cannot write", &index_path, e))?;

    let ok = rows.iter().filter(|(_, succeeded)| *succeeded).count();
    println!(
        "swept {total} point(s) over {} axis/axes: {ok} ok, {} failed",
        grids.len(),
        total - ok
    );
    println!("index   -> {}", index_path.display());
    if keep_traces {
        println!("traces  -> {}", out_dir.join("*.trace.csv").display());
    }
    Ok(())
}

fn cmd_check(rest: &[String]) -> Result<(), Failure> {
    if !rest.is_empty() {
        return Err(Failure::new(2, "check takes no arguments"));
    }
    let results = acceptance::run_all();
    for r in &results {
        println!("{}", r.line());
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed} of {} criteria passed", results.len());
    if passed == results.len() {
        Ok(())
    } else {
        Err(Failure::new(4, "release gate failed"))
    }
}

fn cmd_oracle(rest: &[String]) -> Result<(), Failure> {
    let mut args = Args::new(rest);
    let mut loader = Loader::new();
    let mut lag = 0.0f64;
    let mut amplitude: Option<f64> = None;
    while let Some(arg) = args.take() {
        match arg {
            Arg::Positional(p) => loader.positional(&p)?,
            Arg::Flag(key, inline) => match key.as_str() {
                "lag" | "amplitude" => {
                    let raw = args.value_for(&key, inline)?;
                    let value: f64 = raw
                        .trim()
                        .parse()
                        .map_err(|_| Failure::new(2, format!("--{key}: bad number {raw:?}")))?;
                    if key == "lag" {
                        lag = value;
                    } else {
                        amplitude = Some(value);
                    }
                }
                _ => {
                    let value = args.value_for(&key, inline)?;
                    loader.set(&key, &value)?;
                }
            },
        }
    }
    let p = loader.cfg.plant;
    let v_d = loader.cfg.controller_v_d;
    let i_s = match amplitude {
        Some(a) => a,
        None => steady_state::steady_current_amplitude(lag, p.g, v_d, p.e)?,
    };
    let op = OperatingPoint::new(lag, i_s)?;
    let s = steady_state::summarize(&op, &p, v_d)?;

    println!(
        "operating point: I_s = {i_s:.4} A at lag {lag:.4} rad  (E = {:.3} V, G = {:.4} S, target {v_d} V)",
        p.e, p.g
    );
    println!("  dc bus level      V_s   = {:.4} V", s.v_s);
    println!("  minimum current   I_0   = {:.4} A", s.i_0);
    println!("  harmonic drive    d1    = {:.4} W, d2 = {:.4} W", s.d1, s.d2);
    if s.ripple_degenerate {
        println!("  v^2 ripple        none (quiescent point)");
    } else {
        println!(
            "  v^2 ripple        A     = {:.4} V^2 at phase {:.4} rad  (about {:+.2} V on the bus)",
            s.a,
            s.eps,
            0.5 * s.a / s.v_s.max(1.0)
        );
    }
    println!(
        "  control envelope  B     = {:.4} V at lead {:.4} rad",
        s.b, s.delta
    );
    Ok(())
}
