//! Subcommand implementations. Each returns the process exit code.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pc_core::config::{KSAT_PRODUCT_TEMPERATURE, MIXTURE_TEMPERATURE};
use pc_core::mixture::{solve_mixture, MixtureSolveResult};
use pc_core::problems::{
    emit_dimacs, generate_nk, ksat_objective, nk_objective, parse_dimacs, parse_nk, planted_ksat,
    CnfInstance, NkInstance,
};
use pc_core::trace::TraceRecord;
use pc_core::updaters::{solve, ScheduleMode, SolveResult, UpdateSchedule};
use pc_core::{Annealing, JointConfiguration, SolverConfig, UpdateRule};

use crate::config::FileConfig;
use crate::landscape::{paper_2x2, LandscapeGrid, DEMO_TEMPERATURE};
use crate::{
    Demo, GenerateCommand, LandscapeArgs, RunArgs, SolveKsatArgs, SolveNkArgs, UsageError,
    EXIT_NOT_SOLVED, EXIT_SOLVED,
};

const DEFAULT_MAX_ITERS: usize = 100_000;
const DEFAULT_ALPHA_LAMBDA: f64 = 0.5;
const NK_MIN_TEMPERATURE: f64 = 1e-4;
const NK_GRAD_TOL: f64 = 1e-7;

/// Run parameters after merging flags, config file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub mixtures: usize,
    pub config: SolverConfig,
    pub schedule: UpdateSchedule,
    pub trace: Option<PathBuf>,
    pub trace_timing: bool,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// `PC_SEED` beats `--seed`, which beats the config file.
pub fn resolve_seed(flag: Option<u64>, file: &FileConfig, env: Option<&str>) -> Result<u64> {
    if let Some(raw) = env {
        return raw.trim().parse().map_err(|_| {
            usage(format!(
                "{} must be an unsigned integer, got `{raw}`",
                crate::SEED_ENV
            ))
        });
    }
    Ok(flag.or(file.u64("seed")?).unwrap_or(0))
}

fn resolve(
    run: &RunArgs,
    file: &FileConfig,
    env_seed: Option<&str>,
    base: SolverConfig,
    default_temp: impl Fn(usize) -> f64,
) -> Result<Settings> {
    let mixtures = run.mixtures.or(file.usize("mixtures")?).unwrap_or(1);
    if mixtures == 0 {
        bail!(usage("--mixtures must be at least 1"));
    }
    let rule: UpdateRule = match run.update.clone().or(file.string("update")?) {
        Some(s) => s
            .parse()
            .map_err(|e: pc_core::PcError| usage(e.to_string()))?,
        None => UpdateRule::Brouwer,
    };
    let mode: ScheduleMode = match run.schedule.clone().or(file.string("schedule")?) {
        Some(s) => s
            .parse()
            .map_err(|e: pc_core::PcError| usage(e.to_string()))?,
        None => ScheduleMode::Serial,
    };
    let mut schedule = UpdateSchedule::new(mode);
    if let Some(inertia) = run.inertia.or(file.f64("inertia")?) {
        schedule.inertia = inertia;
    }
    let mut config = SolverConfig {
        rule,
        temperature: run
            .temp
            .or(file.f64("temp")?)
            .unwrap_or_else(|| default_temp(mixtures)),
        seed: resolve_seed(run.seed, file, env_seed)?,
        max_total_inner: run
            .max_iters
            .or(file.usize("max-iters")?)
            .unwrap_or(DEFAULT_MAX_ITERS),
        ..base
    };
    if let Some(t) = run.min_temp.or(file.f64("min-temp")?) {
        config.min_temperature = t;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    schedule.validate().map_err(|e| usage(e.to_string()))?;
    Ok(Settings {
        mixtures,
        config,
        schedule,
        trace: run.trace.clone(),
        trace_timing: run.trace_timing || file.bool("trace-timing")?.unwrap_or(false),
    })
}

/// Resolves k-sat settings: lambda-rescale annealing, starting temperature
/// depending on whether a mixture is used.
pub fn ksat_settings(
    args: &SolveKsatArgs,
    file: &FileConfig,
    env_seed: Option<&str>,
) -> Result<Settings> {
    let base = SolverConfig {
        step_lambda: args
            .alpha_lambda
            .or(file.f64("alpha-lambda")?)
            .unwrap_or(DEFAULT_ALPHA_LAMBDA),
        ..SolverConfig::constrained()
    };
    resolve(&args.run, file, env_seed, base, |m| {
        if m == 1 {
            KSAT_PRODUCT_TEMPERATURE
        } else {
            MIXTURE_TEMPERATURE
        }
    })
}

/// Resolves NK settings: geometric cooling from the mixture temperature.
pub fn nk_settings(
    args: &SolveNkArgs,
    file: &FileConfig,
    env_seed: Option<&str>,
) -> Result<Settings> {
    let base = SolverConfig {
        annealing: Annealing::Geometric { factor: 0.9 },
        min_temperature: NK_MIN_TEMPERATURE,
        grad_tol: NK_GRAD_TOL,
        ..SolverConfig::default()
    };
    resolve(&args.run, file, env_seed, base, |_| MIXTURE_TEMPERATURE)
}

fn write_trace(settings: &Settings, trace: &[TraceRecord], out: &mut dyn Write) -> Result<()> {
    let Some(path) = &settings.trace else {
        return Ok(());
    };
    let mut text = String::new();
    for r in trace {
        text.push_str(&r.to_line(settings.trace_timing));
        text.push('\n');
    }
    if path == Path::new("-") {
        out.write_all(text.as_bytes())?;
    } else {
        fs::write(path, text).with_context(|| format!("writing trace {}", path.display()))?;
    }
    Ok(())
}

pub fn load_cnf(args: &SolveKsatArgs) -> Result<CnfInstance> {
    match (&args.path, &args.planted) {
        (Some(path), None) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(parse_dimacs(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        (None, Some(p)) => {
            let [n, c, k, seed] = p[..] else {
                bail!(usage("--planted takes N C K SEED"));
            };
            planted_ksat(n as usize, c as usize, k as usize, seed)
                .map(|(inst, _)| inst)
                .map_err(|e| usage(e.to_string()))
        }
        _ => bail!(usage(
            "give exactly one of a DIMACS path or --planted N C K SEED"
        )),
    }
}

fn dimacs_assignment(z: &JointConfiguration) -> String {
    let mut s = String::from("v");
    for (i, &v) in z.values().iter().enumerate() {
        let lit = if v == 1 {
            (i + 1) as i64
        } else {
            -((i + 1) as i64)
        };
        s.push_str(&format!(" {lit}"));
    }
    s.push_str(" 0");
    s
}

/// Outcome of a k-sat run, with every satisfying assignment re-verified
/// against the raw clauses.
#[derive(Debug, Clone)]
pub struct KsatReport {
    pub solutions: Vec<JointConfiguration>,
    pub termination: String,
    pub inner_iterations: u64,
    pub final_expected_violation: f64,
    pub best_violations: usize,
    pub component_violations: Vec<usize>,
    pub trace: Vec<TraceRecord>,
}

pub fn run_ksat(inst: &CnfInstance, settings: &Settings) -> Result<KsatReport> {
    let obj = ksat_objective(inst);
    let mut candidates: Vec<JointConfiguration> = Vec::new();
    let report = if settings.mixtures == 1 {
        let r: SolveResult = solve(&obj, &settings.config, &settings.schedule)?;
        candidates.push(r.best.clone());
        candidates.push(r.distribution.mode());
        KsatReport {
            solutions: Vec::new(),
            termination: format!("{:?}", r.termination),
            inner_iterations: r.inner_iterations,
            final_expected_violation: obj.expected_residuals(&r.distribution).iter().sum(),
            best_violations: r.best_violations,
            component_violations: vec![inst.violated(r.distribution.mode().values())],
            trace: r.trace,
        }
    } else {
        let r: MixtureSolveResult = solve_mixture(&obj, settings.mixtures, &settings.config)?;
        candidates.push(r.best.clone());
        candidates.extend(r.components.iter().map(|c| c.mode.clone()));
        KsatReport {
            solutions: Vec::new(),
            termination: format!("{:?}", r.termination),
            inner_iterations: r.inner_iterations,
            final_expected_violation: r.trace.last().map_or(f64::NAN, |t| t.expected_violation),
            best_violations: r.best_violations,
            component_violations: r
                .components
                .iter()
                .map(|c| inst.violated(c.mode.values()))
                .collect(),
            trace: r.trace,
        }
    };
    let mut solutions: Vec<JointConfiguration> = candidates
        .into_iter()
        .filter(|z| inst.is_satisfied(z.values()))
        .collect();
    solutions.sort();
    solutions.dedup();
    Ok(KsatReport {
        solutions,
        ..report
    })
}

pub fn solve_ksat(
    args: &SolveKsatArgs,
    file: &FileConfig,
    env_seed: Option<&str>,
    out: &mut dyn Write,
) -> Result<u8> {
    let inst = load_cnf(args)?;
    let settings = ksat_settings(args, file, env_seed)?;
    let report = run_ksat(&inst, &settings)?;
    write_trace(&settings, &report.trace, out)?;
    writeln!(
        out,
        "c vars={} clauses={} mixtures={} seed={}",
        inst.num_vars(),
        inst.num_clauses(),
        settings.mixtures,
        settings.config.seed
    )?;
    writeln!(
        out,
        "c termination={} inner={} final_expected_violation={} best_violations={}",
        report.termination,
        report.inner_iterations,
        report.final_expected_violation,
        report.best_violations
    )?;
    if settings.mixtures > 1 {
        for (m, v) in report.component_violations.iter().enumerate() {
            writeln!(out, "c component {m} violated={v}")?;
        }
    }
    if report.solutions.is_empty() {
        writeln!(out, "s UNKNOWN")?;
        return Ok(EXIT_NOT_SOLVED);
    }
    writeln!(out, "s SATISFIABLE")?;
    writeln!(out, "c distinct_solutions={}", report.solutions.len())?;
    for z in &report.solutions {
        writeln!(out, "{}", dimacs_assignment(z))?;
    }
    Ok(EXIT_SOLVED)
}

/// Per-component results of an NK run; `G` values are recomputed from the
/// instance tables.
#[derive(Debug, Clone)]
pub struct NkReport {
    pub components: Vec<(f64, JointConfiguration, f64)>,
    pub best: JointConfiguration,
    pub best_value: f64,
    pub hamming: Vec<(usize, usize, usize)>,
    pub js_variational: Option<f64>,
    pub final_temperature: f64,
    pub termination: String,
    pub trace: Vec<TraceRecord>,
}

pub fn run_nk(inst: &NkInstance, settings: &Settings) -> Result<NkReport> {
    let obj = nk_objective(inst)?;
    let (components, best, termination, js, trace) = if settings.mixtures == 1 {
        let r = solve(&obj, &settings.config, &settings.schedule)?;
        let mode = r.distribution.mode();
        (
            vec![(1.0, mode)],
            r.best,
            format!("{:?}", r.termination),
            None,
            r.trace,
        )
    } else {
        let r = solve_mixture(&obj, settings.mixtures, &settings.config)?;
        let comps = r
            .components
            .iter()
            .map(|c| (c.weight, c.mode.clone()))
            .collect();
        (
            comps,
            r.best,
            format!("{:?}", r.termination),
            Some(r.js_variational),
            r.trace,
        )
    };
    let components: Vec<(f64, JointConfiguration, f64)> = components
        .into_iter()
        .map(|(w, z)| {
            let g = inst.evaluate(z.values());
            (w, z, g)
        })
        .collect();
    let mut hamming = Vec::new();
    for a in 0..components.len() {
        for b in a + 1..components.len() {
            hamming.push((a, b, components[a].1.hamming(&components[b].1)));
        }
    }
    let best_value = inst.evaluate(best.values());
    Ok(NkReport {
        components,
        best,
        best_value,
        hamming,
        js_variational: js,
        final_temperature: trace
            .last()
            .map_or(settings.config.temperature, |t| t.temperature),
        termination,
        trace,
    })
}

fn bits(z: &JointConfiguration) -> String {
    z.values()
        .iter()
        .map(|v| char::from(b'0' + *v as u8))
        .collect()
}

pub fn solve_nk(
    args: &SolveNkArgs,
    file: &FileConfig,
    env_seed: Option<&str>,
    out: &mut dyn Write,
) -> Result<u8> {
    let settings = nk_settings(args, file, env_seed)?;
    let inst = match (&args.instance, args.n, args.k) {
        (Some(path), _, _) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_nk(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(n), Some(k)) => {
            generate_nk(n, k, settings.config.seed).map_err(|e| usage(e.to_string()))?
        }
        _ => bail!(usage("give --n and --k, or --instance")),
    };
    let report = run_nk(&inst, &settings)?;
    write_trace(&settings, &report.trace, out)?;
    writeln!(
        out,
        "c n={} k={} instance_seed={} mixtures={} seed={}",
        inst.n(),
        inst.k(),
        inst.seed(),
        settings.mixtures,
        settings.config.seed
    )?;
    write!(
        out,
        "c termination={} T={}",
        report.termination, report.final_temperature
    )?;
    if let Some(js) = report.js_variational {
        write!(out, " js={js}")?;
    }
    writeln!(out)?;
    for (m, (w, z, g)) in report.components.iter().enumerate() {
        writeln!(out, "component {m} weight={w} G={g} mode={}", bits(z))?;
    }
    for (a, b, d) in &report.hamming {
        writeln!(out, "hamming {a} {b} {d}")?;
    }
    writeln!(
        out,
        "best G={} mode={}",
        report.best_value,
        bits(&report.best)
    )?;
    Ok(EXIT_SOLVED)
}

fn emit(text: &str, path: Option<&PathBuf>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn generate(cmd: &GenerateCommand, out: &mut dyn Write) -> Result<u8> {
    match cmd {
        GenerateCommand::Ksat {
            n,
            c,
            k,
            seed,
            out: path,
        } => {
            let (inst, hidden) =
                planted_ksat(*n, *c, *k, *seed).map_err(|e| usage(e.to_string()))?;
            if !inst.is_satisfied(&hidden) {
                bail!("planted assignment does not satisfy the generated instance");
            }
            emit(&emit_dimacs(&inst), path.as_ref(), out)?;
        }
        GenerateCommand::Nk {
            n,
            k,
            seed,
            out: path,
        } => {
            let inst = generate_nk(*n, *k, *seed).map_err(|e| usage(e.to_string()))?;
            emit(&inst.to_text(), path.as_ref(), out)?;
        }
    }
    Ok(EXIT_SOLVED)
}

pub fn landscape(args: &LandscapeArgs, out: &mut dyn Write) -> Result<u8> {
    let obj = match args.demo {
        Demo::Paper2x2 => paper_2x2(),
    };
    let grid = LandscapeGrid::compute(&obj, DEMO_TEMPERATURE, args.grid)
        .map_err(|e| usage(e.to_string()))?;
    emit(&grid.to_text(), args.out.as_ref(), out)?;
    if args.out.is_some() {
        for m in grid.local_minima() {
            writeln!(out, "minimum q1={} q2={} L={}", m.q1, m.q2, m.value)?;
        }
    }
    Ok(EXIT_SOLVED)
}
