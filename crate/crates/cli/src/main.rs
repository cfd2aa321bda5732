//! `dsa-micros`: sweeps the emulated accelerator and writes CSV.
//!
//! With no subcommand the flags describe a sweep. The cross product of
//! `--ts` and `--bs` is run and one row per point is written.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsa_core::vring::write_forward_csv;
use dsa_core::{
    forward_benchmark, run_guideline_preset, run_latency_breakdown, run_sweep, write_csv, ForwardConfig, ForwardMode,
    Opcode, PlatformConfig, SweepSpec, SyncMode, Tier, WqMode,
};

#[derive(Parser)]
#[command(name = "dsa-micros", version, about = "Microbenchmarks for the emulated data streaming accelerator")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Option<Cmd>,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-phase latency of synchronous offloads.
    Breakdown(BreakdownArgs),
    /// Run guideline presets (G1..G6, or "all").
    Preset {
        #[arg(default_value = "all")]
        names: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Virtqueue forwarding rate, CPU copy vs offload.
    Forward(ForwardArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value = "memcpy", value_parser = parse_op)]
    op: Opcode,
    /// Transfer sizes, comma separated. Accepts K/M suffixes.
    #[arg(long, default_value = "4K", value_delimiter = ',', value_parser = parse_size)]
    ts: Vec<u64>,
    #[arg(long, default_value = "1", value_delimiter = ',')]
    bs: Vec<u32>,
    #[arg(long, default_value_t = 32)]
    qd: u32,
    #[arg(long, default_value = "sync")]
    mode: SyncMode,
    #[arg(long, default_value = "dwq")]
    wq_mode: WqMode,
    #[arg(long, default_value_t = 1)]
    wqs: usize,
    #[arg(long, default_value_t = 32)]
    wq_size: u32,
    #[arg(long, default_value_t = 4)]
    engines: usize,
    #[arg(long, default_value_t = 1)]
    devices: usize,
    /// Submitting clients; defaults to one per WQ per device.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "local_dram")]
    src_tier: Tier,
    #[arg(long, default_value = "local_dram")]
    dst_tier: Tier,
    #[arg(long)]
    cache_control: bool,
    #[arg(long, default_value_t = 64)]
    iters: u32,
    /// Defaults to the seed in --config, or 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Per-descriptor page fault probability.
    #[arg(long, default_value_t = 0.0)]
    fault_p: f64,
    #[arg(long)]
    huge_pages: bool,
    /// Execute the operations on emulated memory, not only the timing model.
    #[arg(long)]
    functional: bool,
    /// INI platform description.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BreakdownArgs {
    #[arg(long, default_value = "memcpy", value_parser = parse_op)]
    op: Opcode,
    #[arg(long, default_value = "4K", value_delimiter = ',', value_parser = parse_size)]
    ts: Vec<u64>,
    #[arg(long, default_value = "1", value_delimiter = ',')]
    bs: Vec<u32>,
    #[arg(long, default_value_t = 16)]
    reps: u32,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ForwardArgs {
    #[arg(long, default_value = "64,128,256,512,1024,1518", value_delimiter = ',')]
    sizes: Vec<u32>,
    #[arg(long, default_value = "cpu_copy,dsa_offload", value_delimiter = ',')]
    modes: Vec<ForwardMode>,
    #[arg(long, default_value_t = 2_000_000.0)]
    duration_ns: f64,
    #[arg(long, default_value_t = 32)]
    burst: usize,
    #[arg(long, default_value_t = 256)]
    ring: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_op(s: &str) -> Result<Opcode, String> {
    Opcode::from_name(s).ok_or_else(|| format!("unknown op {s:?}"))
}

fn parse_size(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let n: u64 = num.parse().map_err(|_| format!("bad size {s:?}"))?;
    let mult = match unit.to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kb" | "kib" => 1 << 10,
        "m" | "mb" | "mib" => 1 << 20,
        _ => return Err(format!("bad size unit in {s:?}")),
    };
    n.checked_mul(mult).ok_or_else(|| format!("size {s:?} overflows"))
}

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn platform(path: Option<&PathBuf>) -> Res<PlatformConfig> {
    Ok(match path {
        Some(p) => PlatformConfig::load(p)?,
        None => SweepSpec::default().base,
    })
}

fn output(path: Option<&PathBuf>) -> Res<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn sweep(a: SweepArgs) -> Res<bool> {
    let base = platform(a.config.as_ref())?;
    let spec = SweepSpec {
        op: a.op,
        transfer_sizes: a.ts,
        batch_sizes: a.bs,
        queue_depth: a.qd,
        mode: a.mode,
        wq_mode: a.wq_mode,
        n_wqs: a.wqs,
        wq_size: a.wq_size,
        n_engines: a.engines,
        n_devices: a.devices,
        threads: a.threads,
        src_tier: a.src_tier,
        dst_tier: a.dst_tier,
        cache_control: a.cache_control,
        iterations: a.iters,
        seed: a.seed.unwrap_or(base.seed),
        fault_p: a.fault_p,
        huge_pages: a.huge_pages,
        functional: a.functional,
        base,
    };
    let rows = run_sweep(&spec)?;
    write_csv(&rows, output(a.out.as_ref())?)?;
    Ok(true)
}

fn breakdown(a: BreakdownArgs) -> Res<bool> {
    let base = platform(a.config.as_ref())?;
    let mut out = io::stdout().lock();
    writeln!(out, "op,ts,bs,allocate_ns,prepare_ns,submit_ns,wait_ns,total_ns")?;
    for &ts in &a.ts {
        for &bs in &a.bs {
            let b = run_latency_breakdown(a.op, ts, bs, &base, a.reps)?;
            writeln!(
                out,
                "{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3}",
                b.op.name(),
                b.ts,
                b.bs,
                b.allocate,
                b.prepare,
                b.submit,
                b.wait,
                b.total
            )?;
        }
    }
    Ok(true)
}

fn preset(names: Vec<String>, config: Option<PathBuf>) -> Res<bool> {
    let base = platform(config.as_ref())?;
    let names: Vec<String> = if names.iter().any(|n| n.eq_ignore_ascii_case("all")) {
        dsa_core::harness::PRESETS.iter().map(|s| s.to_string()).collect()
    } else {
        names
    };
    let mut ok = true;
    for name in names {
        let r = run_guideline_preset(&name, &base)?;
        println!("{} {}: {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.title);
        for p in &r.points {
            println!("    {:<32} {:>9.3} GB/s", p.label, p.thr_gbps);
        }
        println!("    {}", r.conclusion);
        ok &= r.passed;
    }
    Ok(ok)
}

fn forward(a: ForwardArgs) -> Res<bool> {
    let cfg = ForwardConfig {
        packet_sizes: a.sizes,
        modes: a.modes,
        duration_ns: a.duration_ns,
        burst: a.burst,
        ring_size: a.ring,
        platform: platform(a.config.as_ref())?,
        ..ForwardConfig::default()
    };
    let rows = forward_benchmark(&cfg)?;
    write_forward_csv(&rows, output(a.out.as_ref())?)?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        None => sweep(cli.sweep),
        Some(Cmd::Breakdown(a)) => breakdown(a),
        Some(Cmd::Preset { names, config }) => preset(names, config),
        Some(Cmd::Forward(a)) => forward(a),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("dsa-micros: {e}");
            ExitCode::FAILURE
        }
    }
}
