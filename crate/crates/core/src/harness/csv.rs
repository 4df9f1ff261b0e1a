//! CSV writers. Bodies are byte-deterministic for a fixed config and seed;
//! anything time-dependent goes into `#`-prefixed header lines.

use crate::error::Result;
use crate::expansion::ExpansionBundle;
use crate::loops::Loop;
use crate::num::Grid;
use crate::orbit::SweepRow;
use crate::periodic_ode::AuditRow;
use std::io::Write;
use std::path::Path;

pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.12e}")
    }
}

fn open(path: &Path, header_note: &str) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    writeln!(w, "# orbitlab {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "# {header_note}")?;
    Ok(w)
}

pub fn write_loop(path: &Path, grid: &Grid, lp: &Loop, note: &str) -> Result<()> {
    let mut w = open(path, note)?;
    let d = lp.dim();
    let cols: Vec<String> = (1..=d).map(|c| format!("x{c}")).collect();
    writeln!(w, "t,{}", cols.join(","))?;
    for j in 0..lp.n_samples() {
        let mut row = vec![fmt(grid.ts[j])];
        for c in 0..d {
            row.push(fmt(lp.samples[(j, c)]));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Read a loop back from the `t,x1..xn` format written by `write_loop`.
pub fn read_loop(path: &Path) -> Result<Loop> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dim = 0usize;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('t') {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    crate::error::Error::Invalid(format!("bad CSV number `{f}` in {}", path.display()))
                })
            })
            .collect::<Result<_>>()?;
        if fields.len() < 3 {
            return Err(crate::error::Error::Invalid(
                "loop CSV needs t plus at least two coordinates".into(),
            ));
        }
        dim = fields.len() - 1;
        rows.push(fields[1..].to_vec());
    }
    if rows.len() < 8 || rows.len() % 2 != 0 {
        return Err(crate::error::Error::Invalid(format!(
            "loop CSV needs an even number (>= 8) of samples, got {}",
            rows.len()
        )));
    }
    let n = rows.len();
    let samples = nalgebra::DMatrix::from_fn(n, dim, |j, c| rows[j][c]);
    Ok(Loop::from_samples(samples, false))
}

/// Residual sweep rows with the running slope fit.
pub fn write_residual_sweep(path: &Path, rows: &[(f64, f64)], note: &str) -> Result<()> {
    let mut w = open(path, note)?;
    writeln!(w, "eps,residual_dual,slope_so_far")?;
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (e, r) in rows {
        lx.push(e.ln());
        ly.push(r.max(1e-300).ln());
        let slope = if lx.len() >= 4 {
            crate::num::linear_fit(&lx, &ly).0
        } else {
            f64::NAN
        };
        writeln!(w, "{},{},{}", fmt(*e), fmt(*r), fmt(slope))?;
    }
    Ok(())
}

pub fn write_bundle(path: &Path, grid: &Grid, bundle: &ExpansionBundle, note: &str) -> Result<()> {
    let mut w = open(path, note)?;
    let d = bundle.x0.dim();
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=d).map(|c| format!("x0_{c}")));
    cols.push("a".into());
    cols.extend((1..=d).map(|c| format!("fT_{c}")));
    cols.push("g_n".into());
    writeln!(w, "{}", cols.join(","))?;
    for j in 0..grid.n {
        let mut row = vec![fmt(grid.ts[j])];
        for c in 0..d {
            row.push(fmt(bundle.x0.samples[(j, c)]));
        }
        row.push(fmt(bundle.a[j]));
        for c in 0..d {
            row.push(fmt(bundle.f_t.vectors[(j, c)]));
        }
        row.push(fmt(bundle.g_n[j]));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_sweep(path: &Path, rows: &[SweepRow], note: &str) -> Result<()> {
    let mut w = open(path, note)?;
    writeln!(
        w,
        "T,eps,dist_C0,dist_C1,corr_sup,corr_normal_sup,newton_iters,cond_est,slope_C0_running"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            fmt(r.t_period),
            fmt(r.eps),
            fmt(r.dist_c0),
            fmt(r.dist_c1),
            fmt(r.corr_sup),
            fmt(r.corr_normal_sup),
            r.newton_iters,
            fmt(r.cond_est),
            fmt(r.slope_c0_running)
        )?;
    }
    Ok(())
}

pub fn write_audit(path: &Path, rows: &[AuditRow], note: &str) -> Result<()> {
    let mut w = open(path, note)?;
    writeln!(w, "lambda_2pi,mode,bound_name,bound,stated_bound,observed,margin")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt(r.lambda_2pi),
            r.mode.name(),
            r.bound_name.replace(',', ";"),
            fmt(r.bound),
            fmt(r.stated_bound),
            fmt(r.observed),
            fmt(r.margin)
        )?;
    }
    Ok(())
}

/// One row of a reduction report.
#[derive(Debug, Clone)]
pub struct ReductionRow {
    pub eps: f64,
    pub sup_v: f64,
    pub g_eps: f64,
    pub l_eps: f64,
    pub l0: f64,
    pub red_grad_norm: f64,
    pub l0_grad_norm: f64,
    pub iters: usize,
}

pub fn write_reduction(path: &Path, rows: &[ReductionRow], note: &str) -> Result<()> {
    let mut w = open(path, note)?;
    writeln!(w, "eps,sup_v,G_eps,L_eps,L0,red_grad_norm,L0_grad_norm,iters")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt(r.eps),
            fmt(r.sup_v),
            fmt(r.g_eps),
            fmt(r.l_eps),
            fmt(r.l0),
            fmt(r.red_grad_norm),
            fmt(r.l0_grad_norm),
            r.iters
        )?;
    }
    Ok(())
}

pub fn write_claims(path: &Path, rows: &[super::claims::ClaimReport], note: &str) -> Result<()> {
    let mut w = open(path, note)?;
    writeln!(w, "claim_id,statement,measured,tolerance,status,runtime_s")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.id,
            r.statement.replace(',', ";"),
            fmt(r.measured),
            r.tolerance.replace(',', ";"),
            r.status.name(),
            format_args!("{:.3}", r.runtime_s)
        )?;
    }
    Ok(())
}

pub fn write_manifest(path: &Path, rows: &[super::claims::ClaimReport]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        writeln!(
            w,
            "{} {} measured={} tol={} ({:.3}s)",
            r.status.name(),
            r.id,
            fmt(r.measured),
            r.tolerance,
            r.runtime_s
        )?;
        for n in &r.notes {
            writeln!(w, "    {n}")?;
        }
    }
    Ok(())
}
