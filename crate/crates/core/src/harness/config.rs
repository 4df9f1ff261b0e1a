//! Run configuration: a flat `key = value` text file (or the equivalent CLI
//! flags). Unknown keys, malformed values and conflicting grids are reported
//! with line and field diagnostics.

use crate::error::{Error, Result};
use crate::num::{geometric_grid, DiffScheme};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Task {
    Geodesic,
    Expand,
    Solve,
    Sweep,
    Reduce,
    GreenAudit,
    Claims,
}

impl Task {
    pub fn parse(s: &str) -> Option<Task> {
        match s {
            "geodesic" => Some(Task::Geodesic),
            "expand" => Some(Task::Expand),
            "solve" => Some(Task::Solve),
            "sweep" => Some(Task::Sweep),
            "reduce" => Some(Task::Reduce),
            "green-audit" => Some(Task::GreenAudit),
            "claims" => Some(Task::Claims),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Geodesic => "geodesic",
            Task::Expand => "expand",
            Task::Solve => "solve",
            Task::Sweep => "sweep",
            Task::Reduce => "reduce",
            Task::GreenAudit => "green-audit",
            Task::Claims => "claims",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: Task,
    pub scenario: String,
    /// scenario parameters: b0, cubic, R, r
    pub params: BTreeMap<String, f64>,
    /// explicit solver mode; defaults to the sign of b0
    pub mode: Option<String>,
    pub class: Vec<i64>,
    pub n: usize,
    pub scheme: DiffScheme,
    pub eps: Option<f64>,
    pub eps_grid: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    /// lambda grid for the Green audit, in the [0, 2pi] convention
    pub lambda_grid: Option<Vec<f64>>,
    pub k_range: Option<(usize, usize)>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
    /// optional geodesic input in the loop CSV format (written by `geodesic`)
    pub loop_csv: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Claims,
            scenario: "circle".into(),
            params: BTreeMap::new(),
            mode: None,
            class: vec![1],
            n: 256,
            scheme: DiffScheme::Spectral,
            eps: None,
            eps_grid: None,
            t_grid: None,
            lambda_grid: None,
            k_range: None,
            out_dir: PathBuf::from("out"),
            seed: 42,
            threads: crate::par::pool_size(),
            loop_csv: None,
        }
    }
}

fn config_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Config { line, field: field.into(), message: message.into() }
}

/// Grid spec: a comma list "1e-2,1e-3,1e-4", or "lo:hi:logxK" (K points per
/// decade), or "lo:hi:linN" (N equally spaced points).
pub fn parse_grid(spec: &str, line: usize, field: &str) -> Result<Vec<f64>> {
    if spec.contains(',') {
        return spec
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| config_err(line, field, format!("bad number `{p}`")))
            })
            .collect();
    }
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [single] => Ok(vec![single
            .trim()
            .parse::<f64>()
            .map_err(|_| config_err(line, field, format!("bad number `{single}`")))?]),
        [lo, hi, law] => {
            let lo: f64 = lo
                .parse()
                .map_err(|_| config_err(line, field, format!("bad number `{lo}`")))?;
            let hi: f64 = hi
                .parse()
                .map_err(|_| config_err(line, field, format!("bad number `{hi}`")))?;
            if let Some(k) = law.strip_prefix("logx") {
                let per_decade: usize = k
                    .parse()
                    .map_err(|_| config_err(line, field, format!("bad log density `{law}`")))?;
                if lo.abs() <= 0.0 || hi.abs() <= 0.0 || (lo < 0.0) != (hi < 0.0) {
                    return Err(config_err(line, field, "log grid needs same-sign nonzero endpoints"));
                }
                let grid = geometric_grid(lo.abs(), hi.abs(), per_decade);
                let sign = lo.signum();
                let mut out: Vec<f64> = grid.iter().map(|v| sign * v).collect();
                if (lo.abs() > hi.abs()) != (out[0].abs() > out[out.len() - 1].abs()) {
                    out.reverse();
                }
                Ok(out)
            } else if let Some(k) = law.strip_prefix("lin") {
                let count: usize = k
                    .parse()
                    .map_err(|_| config_err(line, field, format!("bad lin count `{law}`")))?;
                if count < 2 {
                    return Err(config_err(line, field, "lin grid needs at least 2 points"));
                }
                Ok((0..count)
                    .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                    .collect())
            } else {
                Err(config_err(line, field, format!("unknown grid law `{law}`")))
            }
        }
        _ => Err(config_err(line, field, format!("cannot parse grid `{spec}`"))),
    }
}

fn parse_class(spec: &str, line: usize) -> Result<Vec<i64>> {
    spec.split(',')
        .map(|p| {
            p.trim()
                .parse::<i64>()
                .map_err(|_| config_err(line, "class", format!("bad winding `{p}`")))
        })
        .collect()
}

impl RunConfig {
    /// Apply one `key = value` assignment (shared by the file parser and the
    /// CLI flag layer). `line` is only used for diagnostics.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "task" => {
                self.task = Task::parse(value)
                    .ok_or_else(|| config_err(line, "task", format!("unknown task `{value}`")))?;
            }
            "scenario" => self.scenario = value.to_string(),
            "mode" => match value {
                "repulsive" | "attractive" => self.mode = Some(value.to_string()),
                other => {
                    return Err(config_err(line, "mode", format!("unknown mode `{other}`")))
                }
            },
            "b0" | "cubic" | "R" | "r" => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| config_err(line, key, format!("bad number `{value}`")))?;
                self.params.insert(key.to_string(), v);
            }
            "class" => self.class = parse_class(value, line)?,
            "n" | "N" => {
                let n: usize = value
                    .parse()
                    .map_err(|_| config_err(line, "n", format!("bad integer `{value}`")))?;
                if n % 2 != 0 || n < 64 {
                    return Err(config_err(line, "n", "grid size must be even and >= 64"));
                }
                self.n = n;
            }
            "scheme" => {
                self.scheme = match value {
                    "spectral" => DiffScheme::Spectral,
                    "central4" => DiffScheme::CentralOrder4,
                    other => {
                        return Err(config_err(line, "scheme", format!("unknown scheme `{other}`")))
                    }
                };
            }
            "eps" => {
                let grid = parse_grid(value, line, "eps")?;
                if grid.len() == 1 {
                    self.eps = Some(grid[0]);
                }
                self.eps_grid = Some(grid);
            }
            "T" | "t" => self.t_grid = Some(parse_grid(value, line, "T")?),
            "lambda" => self.lambda_grid = Some(parse_grid(value, line, "lambda")?),
            "k-range" | "k_range" => {
                let parts: Vec<&str> = value.split(':').collect();
                if parts.len() != 2 {
                    return Err(config_err(line, "k-range", "expected lo:hi"));
                }
                let lo = parts[0]
                    .parse()
                    .map_err(|_| config_err(line, "k-range", "bad integer"))?;
                let hi = parts[1]
                    .parse()
                    .map_err(|_| config_err(line, "k-range", "bad integer"))?;
                self.k_range = Some((lo, hi));
            }
            "out" => self.out_dir = PathBuf::from(value),
            "loop" | "loop_csv" => self.loop_csv = Some(PathBuf::from(value)),
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| config_err(line, "seed", format!("bad integer `{value}`")))?;
            }
            "threads" => {
                self.threads = value
                    .parse()
                    .map_err(|_| config_err(line, "threads", format!("bad integer `{value}`")))?;
            }
            other => return Err(config_err(line, other, "unknown field")),
        }
        Ok(())
    }

    pub fn from_file(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(line_no, "<line>", "expected `key = value`"))?;
            cfg.set(key.trim(), value.trim(), line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_some() && self.t_grid.is_some() {
            return Err(config_err(0, "eps/T", "eps and T grids are mutually exclusive"));
        }
        Ok(())
    }

    /// Period grid: T values, linked to eps by eps^2 = 1/T.
    pub fn periods(&self) -> Option<Vec<f64>> {
        if let Some(t) = &self.t_grid {
            return Some(t.clone());
        }
        self.eps_grid
            .as_ref()
            .map(|eg| eg.iter().map(|e| 1.0 / (e * e)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_grids() {
        let g = parse_grid("1e2:1e6:logx8", 1, "T").unwrap();
        assert_eq!(g.len(), 33);
        let g = parse_grid("1e-2,1e-3,1e-4", 1, "eps").unwrap();
        assert_eq!(g, vec![1e-2, 1e-3, 1e-4]);
        let g = parse_grid("-1:-1e4:logx2", 1, "lambda").unwrap();
        assert_eq!(g.len(), 9);
        assert!(g[0] > g[8] && g[0] == -1.0);
        let g = parse_grid("0:1:lin5", 1, "x").unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn config_file_roundtrip_and_errors() {
        let dir = std::env::temp_dir().join("orbitlab-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("good.cfg");
        std::fs::write(
            &path,
            "# demo\ntask = sweep\nscenario = circle\nb0 = -1\nclass = 1\nn = 128\nT = 1e2:1e4:logx2\nseed = 7\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.task, Task::Sweep);
        assert_eq!(cfg.params["b0"], -1.0);
        assert_eq!(cfg.periods().unwrap().len(), 5);

        let attr = dir.join("attr.cfg");
        std::fs::write(
            &attr,
            "task = reduce\nscenario = circle\nb0 = 1\nmode = attractive\nk-range = 10:20\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(&attr).unwrap();
        assert_eq!(cfg.mode.as_deref(), Some("attractive"));
        assert_eq!(cfg.k_range, Some((10, 20)));

        let bad = dir.join("bad.cfg");
        std::fs::write(&bad, "task = sweep\nbogus = 1\n").unwrap();
        match RunConfig::from_file(&bad) {
            Err(Error::Config { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "bogus");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
