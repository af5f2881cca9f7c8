//! Command-line surface. Exit status: 0 success, 1 verification failure,
//! 2 input or usage error.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::netfile::parse_network_file;
use crate::oracle::{
    execute_network_in_arena, execute_network_reference, oracle_work, random_input, random_weights,
    verify_layer_against, ExecMode, Verdict, DEFAULT_ORACLE_CAP,
};
use crate::planner::{plan_network, savings_report};
use crate::report::PlanReport;
use crate::sweep::{run_exec_sweep, run_oracle_sweep, SweepBounds, SweepConfig, DATA_RANGE};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_INPUT: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "actmap",
    version,
    about = "Overlapped activation memory planner for CNN inference"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan the arena for a network file and print the report.
    Plan {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Append a per-layer memory map (text format only).
        #[arg(long)]
        ascii_map: bool,
        #[arg(long, default_value_t = 64)]
        map_width: usize,
    },
    /// Check every layer's offset against the brute-force oracle.
    Verify {
        file: PathBuf,
        /// Oracle step limit per layer.
        #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
        cap: u64,
    },
    /// Exhaustive single-layer sweep plus seeded random-network execution.
    Sweep {
        #[arg(long, default_value_t = 6)]
        max_dim: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random networks to execute; 0 skips the executor pass.
        #[arg(long, default_value_t = 100)]
        networks: usize,
    },
    /// Run the network in its arena and compare with the two-buffer reference.
    Exec {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Track live words and report the first clobbering write.
        #[arg(long)]
        checked: bool,
        /// Step limit per layer.
        #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
        cap: u64,
    },
}

/// Runs a parsed command; reports go to `out`, diagnostics to `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match &cli.command {
        Command::Plan {
            file,
            format,
            ascii_map,
            map_width,
        } => cmd_plan(file, *format, *ascii_map, *map_width, out),
        Command::Verify { file, cap } => cmd_verify(file, *cap, out),
        Command::Sweep {
            max_dim,
            seed,
            networks,
        } => cmd_sweep(*max_dim, *seed, *networks, out),
        Command::Exec {
            file,
            seed,
            checked,
            cap,
        } => cmd_exec(file, *seed, *checked, *cap, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::Clobber { .. } => EXIT_FAILED,
                _ => EXIT_INPUT,
            }
        }
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        message: e.to_string(),
    }
}

fn cmd_plan(
    file: &PathBuf,
    format: Format,
    ascii_map: bool,
    width: usize,
    out: &mut dyn Write,
) -> Result<u8> {
    let net = parse_network_file(file)?;
    let report = PlanReport::new(&net, savings_report(&net)?);
    match format {
        Format::Json => writeln!(out, "{}", report.to_json()).map_err(io)?,
        Format::Text => {
            write!(out, "{}", report.render_text()).map_err(io)?;
            if ascii_map {
                writeln!(out).map_err(io)?;
                write!(out, "{}", report.render_ascii_map(width)).map_err(io)?;
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_verify(file: &PathBuf, cap: u64, out: &mut dyn Write) -> Result<u8> {
    let net = parse_network_file(file)?;
    let packed = net.packed_layers()?;
    for l in &packed {
        let work = oracle_work(l)?;
        if work > cap {
            return Err(Error::SizeLimit { work, cap });
        }
    }
    let mut unsafe_layers = 0;
    writeln!(out, "network: {} ({} layers)", net.name, packed.len()).map_err(io)?;
    for (i, l) in packed.iter().enumerate() {
        let forced = net.offset_overrides.get(&i).copied();
        let r = verify_layer_against(l, forced, cap)?;
        let gap = match r.verdict {
            Verdict::Match => String::new(),
            Verdict::ClosedFormConservative => format!(" gap={}", r.d_closed_form - r.d_oracle),
            Verdict::Unsafe => format!(" short by {}", r.d_oracle - r.d_closed_form),
        };
        if r.verdict == Verdict::Unsafe {
            unsafe_layers += 1;
        }
        writeln!(
            out,
            "layer {:>3}: d={} oracle={} {}{}  (averaged-velocity d={} {})",
            i + 1,
            r.d_closed_form,
            r.d_oracle,
            r.verdict.label(),
            gap,
            r.d_literal,
            r.literal_verdict.label()
        )
        .map_err(io)?;
    }
    writeln!(out, "unsafe layers: {unsafe_layers}").map_err(io)?;
    Ok(if unsafe_layers > 0 {
        EXIT_FAILED
    } else {
        EXIT_OK
    })
}

fn describe(c: &SweepConfig) -> String {
    let l = &c.layer;
    format!(
        "x_in={} y_in={} c_in={} k={}x{} s={}x{} p={}x{} c_out={} groups={} packing={}",
        l.x_in,
        l.y_in,
        l.c_in,
        l.k_x,
        l.k_y,
        l.s_x,
        l.s_y,
        l.p_x,
        l.p_y,
        l.c_out,
        l.groups,
        c.packing
    )
}

fn cmd_sweep(max_dim: u64, seed: u64, networks: usize, out: &mut dyn Write) -> Result<u8> {
    let bounds = SweepBounds {
        max_dim,
        ..SweepBounds::default()
    };
    let s = run_oracle_sweep(&bounds)?;
    let c = &s.counts;
    writeln!(out, "configurations: {}", c.total()).map_err(io)?;
    writeln!(out, "match: {}", c.matches).map_err(io)?;
    writeln!(out, "conservative: {}", c.conservative).map_err(io)?;
    writeln!(out, "UNSAFE: {}", c.unsafe_count).map_err(io)?;
    if let Some((cfg, r)) = &s.first_unsafe {
        writeln!(
            out,
            "first UNSAFE: {} (d={} oracle={})",
            describe(cfg),
            r.d_closed_form,
            r.d_oracle
        )
        .map_err(io)?;
    }
    if let Some((cfg, r)) = &s.first_conservative {
        writeln!(
            out,
            "first conservative: {} (d={} oracle={})",
            describe(cfg),
            r.d_closed_form,
            r.d_oracle
        )
        .map_err(io)?;
    }
    let lc = &s.literal_counts;
    writeln!(
        out,
        "averaged-velocity pointer: match {} conservative {} UNSAFE {}",
        lc.matches, lc.conservative, lc.unsafe_count
    )
    .map_err(io)?;

    let mut failed = c.unsafe_count > 0;
    if networks > 0 && max_dim > 0 {
        let e = run_exec_sweep(&bounds, seed, networks)?;
        writeln!(out, "networks: {} (seed {seed})", e.networks).map_err(io)?;
        writeln!(out, "bit-exact: {}", e.bit_exact).map_err(io)?;
        writeln!(
            out,
            "offset-1 clobbers: {}/{} ({} networks without a witness layer)",
            e.witnesses_clobbered, e.witnesses, e.no_witness
        )
        .map_err(io)?;
        if let Some(f) = &e.first_failure {
            writeln!(out, "first failure: {f}").map_err(io)?;
            failed = true;
        }
    }
    Ok(if failed { EXIT_FAILED } else { EXIT_OK })
}

fn cmd_exec(file: &PathBuf, seed: u64, checked: bool, cap: u64, out: &mut dyn Write) -> Result<u8> {
    let net = parse_network_file(file)?;
    for l in net.packed_layers()? {
        let work = oracle_work(&l)?;
        if work > cap {
            return Err(Error::SizeLimit { work, cap });
        }
    }
    let plan = plan_network(&net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = random_input(&net, &mut rng, DATA_RANGE);
    let weights = random_weights(&net, &mut rng, DATA_RANGE);
    let reference = execute_network_reference(&net, &input, &weights)?;
    let mode = if checked {
        ExecMode::Checked
    } else {
        ExecMode::Unchecked
    };
    writeln!(
        out,
        "network: {} arena {} words, seed {seed}",
        net.name, plan.arena_size
    )
    .map_err(io)?;
    match execute_network_in_arena(&net, &plan, &input, &weights, mode) {
        Ok(arena) if arena == reference => {
            writeln!(out, "bit-exact: yes ({} output words)", arena.data.len()).map_err(io)?;
            Ok(EXIT_OK)
        }
        Ok(arena) => {
            let first = arena
                .data
                .iter()
                .zip(&reference.data)
                .position(|(a, b)| a != b);
            writeln!(
                out,
                "bit-exact: NO (first differing output index {first:?})"
            )
            .map_err(io)?;
            Ok(EXIT_FAILED)
        }
        Err(Error::Clobber {
            layer,
            block,
            address,
            what,
        }) => {
            writeln!(
                out,
                "clobber: layer {} block {} address {} ({what})",
                layer + 1,
                block,
                address
            )
            .map_err(io)?;
            Ok(EXIT_FAILED)
        }
        Err(e) => Err(e),
    }
}
