//! Command-line front end.
//!
//! Subcommands: geodesic, expand, solve, sweep, reduce, green-audit, claims.
//! Options may come from a config file (`--config path`) and/or flags; flags
//! win. All outputs land under `--out` (default `out/`), with a manifest for
//! claim runs. The exit status is nonzero iff any claim fails.

use anyhow::{bail, Context};
use orbitlab::harness::{run, RunConfig, Task};

const USAGE: &str = "\
usage: orbitlab <task> [options]

tasks:
  geodesic     descend to a closed geodesic in a homotopy class
  expand       build the second-order pseudo-orbit bundle (and residual sweep)
  solve        Newton-correct the pseudo orbit at one eps
  sweep        adiabatic sweep over a period grid T (eps^2 = 1/T)
  reduce       minimize the reduced functional over an eps grid
  green-audit  audit the periodic Green-kernel estimates over a lambda grid
  claims       run the full acceptance suite

options:
  --config FILE      read `key = value` lines first (same keys as below)
  --scenario NAME    circle | sphere | sphere-quartic | torus   [circle]
  --b0 X             normal Hessian on M                        [-1]
  --cubic X          cubic distance term coefficient            [0]
  --R X --r X        torus radii                                [2, 1]
  --class K[,Q]      winding data, e.g. 1 or 1,0                [1]
  --mode M           repulsive | attractive (default: sign of b0)
  --N K              grid size (even)                           [256]
  --scheme S         spectral | central4                        [spectral]
  --eps SPEC         eps value, list, or grid (lo:hi:logxK)
  --T SPEC           period grid (exclusive with --eps)
  --lambda SPEC      lambda grid in the 2pi convention (green-audit)
  --k-range LO:HI    attractive resonance indices
  --loop FILE        geodesic input in loop-CSV form (else descend)
  --out DIR          output directory                           [out]
  --seed K           RNG seed for randomized trials             [42]
  --threads K        worker pool size (or ORBITLAB_THREADS)

examples:
  orbitlab sweep --scenario circle --b0 -100 --class 1 --T 1e2:1e6:logx8
  orbitlab green-audit --lambda -1:-1e4:logx8
  orbitlab reduce --scenario torus --class 1,0 --eps 1e-2,1e-3,1e-4
  orbitlab claims --out out/claims
";

fn parse_args() -> anyhow::Result<RunConfig> {
    let mut args = std::env::args().skip(1).peekable();
    let task_word = match args.next() {
        Some(w) => w,
        None => bail!("{USAGE}"),
    };
    if task_word == "--help" || task_word == "-h" || task_word == "help" {
        bail!("{USAGE}");
    }
    let task =
        Task::parse(&task_word).with_context(|| format!("unknown task `{task_word}`\n{USAGE}"))?;

    // collect flags first so --config is applied before overrides
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut config_path: Option<String> = None;
    while let Some(flag) = args.next() {
        let key = flag
            .strip_prefix("--")
            .with_context(|| format!("expected --flag, got `{flag}`"))?
            .to_string();
        let value = args
            .next()
            .with_context(|| format!("flag --{key} needs a value"))?;
        if key == "config" {
            config_path = Some(value);
        } else {
            pairs.push((key, value));
        }
    }

    let mut cfg = match config_path {
        Some(p) => RunConfig::from_file(std::path::Path::new(&p))
            .with_context(|| format!("reading config `{p}`"))?,
        None => RunConfig::default(),
    };
    cfg.task = task;
    for (key, value) in &pairs {
        let key = if key == "N" { "n" } else { key.as_str() };
        cfg.set(key, value, 0)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() {
    let cfg = match parse_args() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e:#}");
            std::process::exit(2);
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if !outcome.all_passed() {
                std::process::exit(1);
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
