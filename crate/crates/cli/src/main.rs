// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use simdram_core::allocator::{allocate_rows_with, PhaseMode, RowOperandAllocation};
use simdram_core::corpus::{corpus_dir, diff_corpus, load_program, write_corpus, CORPUS_WIDTHS};
use simdram_core::mig::{aoig_truth_tables, normalize_inverters, Mig, DEFAULT_ITERATIONS};
use simdram_core::oplib::{input_width, kernel_aoig, plan, Op, OpOptions};
use simdram_core::pipeline::*;
use simdram_core::uprogram::{
    check_phase_ordering, check_read_before_write, generate_uprogram, MicroProgram, Signal,
    SliceBinding,
};

#[derive(Parser)]
#[command(name = "simdram", version, about = "Compile and simulate bit-serial in-DRAM operations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build optimized MAJ/NOT kernels for an operation and write them as one MIG file.
    Synth(SynthArgs),
    /// Allocate compute rows for a MIG file.
    Alloc(AllocArgs),
    /// Emit a uProgram.
    Gen(GenArgs),
    /// Execute a uProgram on input value files.
    Run(RunArgs),
    /// Check programs against the scalar oracles, or the golden corpus.
    Verify(VerifyArgs),
    /// uOp-count scaling table.
    Report(ReportArgs),
    /// Rewrite the golden corpus from the curated schedules.
    Corpus(CorpusArgs),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    /// Divide-by-zero lanes are errors instead of all-ones results.
    #[arg(long)]
    strict_division: bool,
    /// Reset allocation phases only when a row list runs dry.
    #[arg(long)]
    strict_pseudocode: bool,
    /// Unsigned greater/greater_equal.
    #[arg(long)]
    unsigned: bool,
    /// Lanes per subarray (power of two).
    #[arg(long)]
    lanes: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Curated,
    Generated,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    op: String,
    #[arg(long)]
    n: u32,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AllocArgs {
    #[arg(long)]
    mig: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    op: Option<String>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long, value_enum, default_value = "curated")]
    mode: ModeArg,
    /// Kernel library from `synth` (with --op), or a single slice MIG (without).
    #[arg(long)]
    mig: Option<PathBuf>,
    /// Allocation from `alloc` for a single slice MIG.
    #[arg(long)]
    alloc: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RunArgs {
    program: PathBuf,
    /// ROLE=FILE, one integer per line (decimal, 0x hex, or negative).
    inputs: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    /// Defaults to every operation.
    #[arg(long)]
    op: Vec<String>,
    /// Defaults to 2 and 4.
    #[arg(long)]
    n: Vec<u32>,
    #[arg(long, value_enum, default_value = "curated")]
    mode: ModeArg,
    /// Diff the corpus against fresh curated builds and run the static checks on it.
    #[arg(long)]
    golden: bool,
    /// Complement the rows written by the last uOp that stores into dst.
    #[arg(long)]
    inject_fault: bool,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, value_enum, default_value = "curated")]
    mode: ModeArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CorpusArgs {
    /// Defaults to the active corpus directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit 2 with a message.
struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Synth(a) => synth(a),
        Cmd::Alloc(a) => alloc(a),
        Cmd::Gen(a) => gen(a),
        Cmd::Run(a) => run(a),
        Cmd::Verify(a) => verify(a),
        Cmd::Report(a) => report(a),
        Cmd::Corpus(a) => corpus(a),
    };
    match r {
        Ok(code) => code,
        Err(Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn config(c: &Common, mode: ModeArg) -> PipelineConfig {
    PipelineConfig {
        mode: match mode {
            ModeArg::Curated => Mode::Curated,
            ModeArg::Generated => Mode::Generated,
        },
        opts: OpOptions { unsigned: c.unsigned, strict_division: c.strict_division },
        iterations: c.iterations,
        seed: c.seed,
        phase_mode: if c.strict_pseudocode { PhaseMode::StrictPseudocode } else { PhaseMode::Prose },
        lanes: c.lanes,
    }
}

fn check_n(n: u32) -> Result<u32, Usage> {
    if (1..=64).contains(&n) {
        Ok(n)
    } else {
        Err(Usage(format!("--n must be in 1..=64, got {n}")))
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Usage> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(p: &Path) -> Result<String, Usage> {
    fs::read_to_string(p).map_err(|e| Usage(format!("{}: {e}", p.display())))
}

/// Curated programs come from the corpus; generated ones are built.
fn program_for(op: Op, n: u32, cfg: &PipelineConfig) -> Result<MicroProgram, Usage> {
    match cfg.mode {
        Mode::Curated => Ok(load_program(&corpus_dir(), op, n, &cfg.opts)?),
        Mode::Generated => Ok(build_program(op, n, cfg)?),
    }
}

fn synth(a: SynthArgs) -> Result<ExitCode, Usage> {
    let op = Op::from_str(&a.op)?;
    let n = check_n(a.n)?;
    let cfg = config(&a.common, ModeArg::Generated);
    let p = plan(op, n, &cfg.opts)?;
    let mut lib = BTreeMap::new();
    let mut ok = true;
    for k in p.kernels() {
        if k == "copy" {
            continue;
        }
        let (naive, opt) = synthesize_kernel(k, cfg.iterations, cfg.seed)?;
        let opt = normalize_inverters(&opt);
        let reference = aoig_truth_tables(&kernel_aoig(k).expect("planned kernel exists"));
        let verified = opt.truth_tables() == reference && naive.truth_tables() == reference;
        ok &= verified;
        eprintln!(
            "kernel {k}: naive {} MAJ -> optimized {} MAJ, {}",
            naive.maj_count(),
            opt.maj_count(),
            if verified { "verified" } else { "MISMATCH" }
        );
        lib.insert(k.to_string(), opt);
    }
    emit(&a.out, &merge_kernels(&lib).to_text())?;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn alloc(a: AllocArgs) -> Result<ExitCode, Usage> {
    let mig = Mig::parse(&read(&a.mig)?)?;
    let mode = config(&a.common, ModeArg::Generated).phase_mode;
    let al = allocate_rows_with(&mig, mode)?;
    eprintln!("{} entries, {} phases", al.entries.len(), al.phase_count);
    emit(&a.out, &al.dump())?;
    Ok(ExitCode::SUCCESS)
}

fn gen(a: GenArgs) -> Result<ExitCode, Usage> {
    let cfg = config(&a.common, a.mode);
    let p = match (&a.mig, &a.op) {
        (Some(path), Some(op)) => {
            if a.alloc.is_some() {
                return Err(Usage("--alloc applies to a single slice MIG (omit --op)".into()));
            }
            let op = Op::from_str(op)?;
            let n = check_n(a.n.ok_or_else(|| Usage("--n is required with --op".into()))?)?;
            let lib = split_kernels(&Mig::parse(&read(path)?)?)?;
            generated_program_with(&plan(op, n, &cfg.opts)?, &lib, cfg.phase_mode)?
        }
        (Some(path), None) => {
            let mig = Mig::parse(&read(path)?)?;
            let al = match &a.alloc {
                Some(ap) => RowOperandAllocation::parse(&read(ap)?)?,
                None => allocate_rows_with(&mig, cfg.phase_mode)?,
            };
            let errs = al.check(&mig);
            if !errs.is_empty() {
                return Err(Usage(format!("allocation does not fit the MIG: {}", errs.join("; "))));
            }
            // inputs read D:<name>.0, outputs land in dst
            let b = SliceBinding {
                inputs: mig.input_names().into_iter().map(|s| (s.clone(), Signal::bit(&s, 0))).collect(),
                outputs: (0..mig.outputs().len() as u32).map(|k| Some(("dst".to_string(), k))).collect(),
            };
            generate_uprogram("mig", &mig, &al, &[b], 1)?
        }
        (None, Some(op)) => {
            let op = Op::from_str(op)?;
            let n = check_n(a.n.ok_or_else(|| Usage("--n is required".into()))?)?;
            program_for(op, n, &cfg)?
        }
        (None, None) => return Err(Usage("give --op and --n, or --mig".into())),
    };
    let c = p.counts();
    eprintln!("op {} n {}: total {} ({} AAP, {} AP)", p.op_name, p.width, c.total, c.aap, c.ap);
    emit(&a.out, &p.encode())?;
    Ok(ExitCode::SUCCESS)
}

/// Decimal, 0x hex, or negative decimal (two's complement in `width` bits).
fn parse_value(s: &str, width: u32) -> Result<u64, String> {
    let mask = if width >= 64 { !0 } else { (1u64 << width) - 1 };
    let v = if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(h, 16).map_err(|e| format!("`{s}`: {e}"))?
    } else if let Some(d) = s.strip_prefix('-') {
        let m: u64 = d.parse().map_err(|e| format!("`{s}`: {e}"))?;
        if width < 64 && m > 1u64 << (width - 1) {
            return Err(format!("`{s}` does not fit in {width} signed bits"));
        }
        m.wrapping_neg() & mask
    } else {
        s.parse().map_err(|e| format!("`{s}`: {e}"))?
    };
    if v & !mask != 0 {
        return Err(format!("`{s}` exceeds {width} bits"));
    }
    Ok(v)
}

fn read_values(path: &Path, width: u32) -> Result<Vec<u64>, Usage> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(parse_value(t, width).map_err(|e| Usage(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

fn run(a: RunArgs) -> Result<ExitCode, Usage> {
    let p = MicroProgram::decode(&read(&a.program)?).map_err(|e| Usage(format!("{}: {e}", a.program.display())))?;
    let op = Op::from_str(&p.op_name)?;
    let n = p.width;
    let cfg = config(&a.common, ModeArg::Curated);
    let mut files: BTreeMap<String, PathBuf> = BTreeMap::new();
    for s in &a.inputs {
        let (role, path) = s.split_once('=').ok_or_else(|| Usage(format!("expected ROLE=FILE, got `{s}`")))?;
        files.insert(role.to_string(), PathBuf::from(path));
    }
    let mut inputs = Vec::new();
    for role in op.roles() {
        let path = files.remove(*role).ok_or_else(|| Usage(format!("missing input {role}=FILE")))?;
        inputs.push(read_values(&path, input_width(op, role, n))?);
    }
    if let Some(extra) = files.keys().next() {
        return Err(Usage(format!("{op} has no operand `{extra}`")));
    }
    let r = run_program(&p, op, n, &inputs, &cfg)?;
    if cfg.opts.strict_division {
        if let Some((lane, e)) = r.lane_errors.first() {
            return Err(Usage(format!("lane {lane}: {e}")));
        }
    }
    let text: String = r.outputs.iter().map(|v| format!("{v}\n")).collect();
    emit(&a.out, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn verify_golden() -> Result<ExitCode, Usage> {
    let dir = corpus_dir();
    let mut bad = diff_corpus(&dir)?;
    let mut checked = 0;
    for op in Op::ALL {
        for n in CORPUS_WIDTHS {
            let Ok(p) = load_program(&dir, op, n, &OpOptions::default()) else { continue };
            checked += 1;
            if let Err(e) = check_read_before_write(&p) {
                bad.push(format!("{op} n={n}: read-before-write: {}", e.join("; ")));
            }
            if let Err(e) = check_phase_ordering(&p) {
                bad.push(format!("{op} n={n}: phase ordering: {}", e.join("; ")));
            }
        }
    }
    for b in &bad {
        println!("FAIL {b}");
    }
    println!("golden corpus {}: {checked} programs, {} problems", dir.display(), bad.len());
    Ok(if bad.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn verify(a: VerifyArgs) -> Result<ExitCode, Usage> {
    if a.golden {
        return verify_golden();
    }
    let cfg = config(&a.common, a.mode);
    let ops: Vec<Op> = if a.op.is_empty() {
        Op::ALL.to_vec()
    } else {
        a.op.iter().map(|s| Op::from_str(s)).collect::<Result<_, _>>()?
    };
    let ns = if a.n.is_empty() { vec![2, 4] } else { a.n.clone() };
    let mut jobs = Vec::new();
    for &op in &ops {
        for &n in &ns {
            jobs.push((op, check_n(n)?));
        }
    }
    // programs are loaded up front so corpus errors surface as usage errors
    let programs: Vec<MicroProgram> =
        jobs.iter().map(|&(op, n)| program_for(op, n, &cfg)).collect::<Result<_, _>>()?;
    let results: Vec<Result<VerifyReport, PipelineError>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .zip(&programs)
            .map(|(&(op, n), p)| {
                let cfg = &cfg;
                s.spawn(move || {
                    let fault = if a.inject_fault { last_dst_write(p).map(|i| Fault { op_index: i }) } else { None };
                    verify_program(p, op, n, cfg, fault)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("verify worker panicked")).collect()
    });
    let reports: Vec<VerifyReport> = results.into_iter().collect::<Result<_, _>>()?;
    let failed = reports.iter().filter(|r| r.mismatches > 0 || !r.lane_independent).count();
    let json = serde_json::to_string_pretty(&reports)? + "\n";
    if let Some(p) = &a.out {
        fs::write(p, &json).map_err(|e| Usage(format!("{}: {e}", p.display())))?;
    }
    if a.format == Format::Json {
        print!("{json}");
    } else {
        let mut t = format!("{:<16} {:>3} {:<10} {:>7} {:>10}  {}\n", "op", "n", "mode", "lanes", "mismatches", "result");
        for r in &reports {
            let ok = r.mismatches == 0 && r.lane_independent;
            let _ = writeln!(
                t,
                "{:<16} {:>3} {:<10} {:>7} {:>10}  {}",
                r.op,
                r.n,
                r.mode.to_string(),
                r.lanes_checked,
                r.mismatches,
                if ok { "ok" } else { "FAIL" }
            );
        }
        let _ = writeln!(t, "{} of {} checks failed", failed, reports.len());
        print!("{t}");
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn report(a: ReportArgs) -> Result<ExitCode, Usage> {
    let cfg = config(&a.common, a.mode);
    let rows: Vec<ScalingRow> = Op::ALL.iter().map(|&op| scaling_row(op, &cfg)).collect::<Result<_, _>>()?;
    let json = serde_json::to_string_pretty(&rows)? + "\n";
    if let Some(p) = &a.out {
        fs::write(p, &json).map_err(|e| Usage(format!("{}: {e}", p.display())))?;
    }
    if a.format == Format::Json {
        print!("{json}");
        return Ok(ExitCode::SUCCESS);
    }
    let mut t = format!("{:<16} {:<40} {:<12} {:<12} {}\n", "op", "totals (n=4,5,8,9,16,17,32,33)", "class", "fitted", "conforms");
    for r in &rows {
        let totals: Vec<String> = r.totals.iter().map(|(_, v)| v.to_string()).collect();
        let _ = writeln!(
            t,
            "{:<16} {:<40} {:<12} {:<12} {}",
            r.op,
            totals.join(","),
            format!("{:?}", r.expected_class),
            r.fitted_class.map(|c| format!("{c:?}")).unwrap_or_else(|| "-".into()),
            if r.conforms() { "yes" } else { "no" }
        );
    }
    print!("{t}");
    Ok(ExitCode::SUCCESS)
}

fn corpus(a: CorpusArgs) -> Result<ExitCode, Usage> {
    let dir = a.out.unwrap_or_else(corpus_dir);
    let files = write_corpus(&dir)?;
    eprintln!("wrote {} programs under {}", files.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}
