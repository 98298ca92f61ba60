//! Experiment configuration files.
//!
//! ```text
//! # comments start with '#'
//! [system]
//! g = cos(m)+m^2          # coefficient g(x, m)
//! h = 0.75                # Hurst index (must be > 0.5 for a fractional driver)
//! epsilon = 0.1, 0.01     # comma-separated list; 0 means the limit ε → 0
//! x0 = 0
//! m0 = 0
//! driver = fractional     # or brownian
//! quad_order = 40
//!
//! [grid]
//! T = 1
//! N = 16, 32, 64          # comma-separated list of step counts
//!
//! [experiment]
//! kind = ap-diagram       # optional; must match the subcommand when given
//! phi = tanh              # tanh | sin_scaled | gauss_bump | identity
//! eta = 0.05, 0.1, 0.25
//! fd_step = 1e-4
//! x_min = -2
//! x_max = 2
//! x_points = 11
//! estimator = control_variate   # or plain
//!
//! [mc]
//! outer = 200
//! inner = 500
//! seed = 42
//!
//! [output]
//! dir = results
//! ```
//!
//! Every key is optional except `system.g` and `grid.N`. Unknown sections
//! and keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use apsde_core::expr::{CoeffExpr, ExprError};
use apsde_core::schemes::Driver;
use apsde_core::stats::{InnerEstimator, TestFunction};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("{field}: {source}")]
    Expr {
        field: String,
        #[source]
        source: ExprError,
    },

    #[error("{field}: {message}")]
    Range { field: String, message: String },

    #[error("missing required key {field}")]
    Missing { field: String },

    #[error("unknown key {field}")]
    Unknown { field: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Simulate,
    ApDiagram,
    RateFit,
    EpsSweep,
    BrownianCompare,
    VariationDiag,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Simulate,
        ExperimentKind::ApDiagram,
        ExperimentKind::RateFit,
        ExperimentKind::EpsSweep,
        ExperimentKind::BrownianCompare,
        ExperimentKind::VariationDiag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::ApDiagram => "ap-diagram",
            ExperimentKind::RateFit => "rate-fit",
            ExperimentKind::EpsSweep => "eps-sweep",
            ExperimentKind::BrownianCompare => "brownian-compare",
            ExperimentKind::VariationDiag => "variation-diag",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub g: CoeffExpr,
    pub h: f64,
    pub epsilons: Vec<f64>,
    pub x0: f64,
    pub m0: f64,
    pub driver: Driver,
    pub quad_order: usize,

    pub horizon: f64,
    pub steps: Vec<usize>,

    pub kind: Option<ExperimentKind>,
    pub phi: TestFunction,
    pub etas: Vec<f64>,
    pub fd_step: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub x_points: usize,
    pub estimator: InnerEstimator,

    pub outer: usize,
    pub inner: usize,
    pub seed: u64,

    pub output: PathBuf,

    /// SHA-256 of the file text, hex encoded.
    pub hash: String,
}

type Entries = BTreeMap<String, (usize, String)>;

const KNOWN: &[(&str, &[&str])] = &[
    (
        "system",
        &["g", "h", "epsilon", "x0", "m0", "driver", "quad_order"],
    ),
    ("grid", &["T", "N"]),
    (
        "experiment",
        &[
            "kind",
            "phi",
            "eta",
            "fd_step",
            "x_min",
            "x_max",
            "x_points",
            "estimator",
        ],
    ),
    ("mc", &["outer", "inner", "seed"]),
    ("output", &["dir"]),
];

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn read_entries(text: &str) -> Result<Entries, ConfigError> {
    let mut section: Option<&'static str> = None;
    let mut entries = Entries::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: format!("unterminated section header `{line}`"),
            })?;
            let name = name.trim();
            section = Some(
                KNOWN
                    .iter()
                    .find(|(s, _)| *s == name)
                    .map(|(s, _)| *s)
                    .ok_or_else(|| ConfigError::Unknown {
                        field: format!("[{name}]"),
                    })?,
            );
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let sec = section.ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            message: "entry before any [section] header".into(),
        })?;
        let key = key.trim();
        let field = format!("{sec}.{key}");
        let allowed = KNOWN
            .iter()
            .find(|(s, _)| *s == sec)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(ConfigError::Unknown { field });
        }
        let value = value.trim();
        if value.is_empty() {
            return Err(ConfigError::Syntax {
                line: line_no,
                message: format!("{field} has an empty value"),
            });
        }
        if entries
            .insert(field.clone(), (line_no, value.to_string()))
            .is_some()
        {
            return Err(ConfigError::Syntax {
                line: line_no,
                message: format!("duplicate key {field}"),
            });
        }
    }
    Ok(entries)
}

struct Reader {
    entries: Entries,
}

impl Reader {
    fn raw(&self, field: &str) -> Option<&str> {
        self.entries.get(field).map(|(_, v)| v.as_str())
    }

    fn parse<T: FromStr>(&self, field: &str, default: T) -> Result<T, ConfigError> {
        match self.raw(field) {
            None => Ok(default),
            Some(v) => parse_value(field, v),
        }
    }

    fn list<T: FromStr>(&self, field: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(raw) = self.raw(field) else {
            return Ok(None);
        };
        let items = raw
            .split(',')
            .map(|s| parse_value(field, s.trim()))
            .collect::<Result<Vec<T>, _>>()?;
        Ok(Some(items))
    }
}

fn parse_value<T: FromStr>(field: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Range {
        field: field.to_string(),
        message: format!("cannot parse `{v}`"),
    })
}

fn range(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        field: field.to_string(),
        message: message.into(),
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let r = Reader {
        entries: read_entries(text)?,
    };

    let g_text = r.raw("system.g").ok_or_else(|| ConfigError::Missing {
        field: "system.g".into(),
    })?;
    let g = CoeffExpr::parse(g_text).map_err(|source| ConfigError::Expr {
        field: "system.g".into(),
        source,
    })?;

    let driver = match r.raw("system.driver").unwrap_or("fractional") {
        "fractional" => Driver::Fractional,
        "brownian" => Driver::Brownian,
        other => {
            return Err(range(
                "system.driver",
                format!("expected fractional or brownian, got `{other}`"),
            ))
        }
    };
    let h = match driver {
        Driver::Fractional => {
            let h: f64 = r.parse("system.h", 0.75)?;
            if !(h > 0.5) {
                return Err(range(
                    "system.h",
                    format!("h must be > 0.5 for a fractional driver, got {h}"),
                ));
            }
            if !(h < 1.0) {
                return Err(range("system.h", format!("h must be < 1, got {h}")));
            }
            h
        }
        Driver::Brownian => {
            let h: f64 = r.parse("system.h", 0.5)?;
            if h != 0.5 {
                return Err(range(
                    "system.h",
                    format!("h must be 0.5 for a brownian driver, got {h}"),
                ));
            }
            h
        }
    };

    let epsilons = r
        .list::<f64>("system.epsilon")?
        .unwrap_or_else(|| vec![0.0]);
    for &e in &epsilons {
        if !(e == 0.0 || (e > 0.0 && e <= 1.0)) {
            return Err(range(
                "system.epsilon",
                format!("epsilon must lie in (0, 1] or be 0, got {e}"),
            ));
        }
    }
    let x0: f64 = r.parse("system.x0", 0.0)?;
    let m0: f64 = r.parse("system.m0", 0.0)?;
    for (field, v) in [("system.x0", x0), ("system.m0", m0)] {
        if !v.is_finite() {
            return Err(range(field, "must be finite"));
        }
    }
    let quad_order: usize = r.parse("system.quad_order", apsde_core::DEFAULT_QUAD_ORDER)?;
    if quad_order < 2 {
        return Err(range("system.quad_order", "must be at least 2"));
    }

    let horizon: f64 = r.parse("grid.T", 1.0)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(range(
            "grid.T",
            format!("T must be positive, got {horizon}"),
        ));
    }
    let steps = r
        .list::<usize>("grid.N")?
        .ok_or_else(|| ConfigError::Missing {
            field: "grid.N".into(),
        })?;
    if steps.contains(&0) {
        return Err(range("grid.N", "step counts must be positive"));
    }

    let kind = match r.raw("experiment.kind") {
        None => None,
        Some(v) => Some(v.parse().map_err(|m: String| range("experiment.kind", m))?),
    };
    let phi = match r.raw("experiment.phi") {
        None => TestFunction::Tanh,
        Some(v) => TestFunction::from_name(v).ok_or_else(|| {
            range(
                "experiment.phi",
                format!("expected tanh, sin_scaled, gauss_bump or identity, got `{v}`"),
            )
        })?,
    };
    let etas = r
        .list::<f64>("experiment.eta")?
        .unwrap_or_else(|| vec![0.05, 0.1, 0.25]);
    if etas.iter().any(|e| !(*e > 0.0)) {
        return Err(range("experiment.eta", "thresholds must be positive"));
    }
    let fd_step: f64 = r.parse("experiment.fd_step", apsde_core::averaging::DEFAULT_FD_STEP)?;
    if !(fd_step > 0.0 && fd_step < 1.0) {
        return Err(range("experiment.fd_step", "must lie in (0, 1)"));
    }
    let x_min: f64 = r.parse("experiment.x_min", -2.0)?;
    let x_max: f64 = r.parse("experiment.x_max", 2.0)?;
    let x_points: usize = r.parse("experiment.x_points", 11)?;
    if !(x_min.is_finite() && x_max.is_finite() && x_min <= x_max) || x_points == 0 {
        return Err(range(
            "experiment.x_points",
            "need x_min ≤ x_max and at least one point",
        ));
    }

    let estimator = match r.raw("experiment.estimator").unwrap_or("control_variate") {
        "control_variate" => InnerEstimator::ControlVariate,
        "plain" => InnerEstimator::Plain,
        other => {
            return Err(range(
                "experiment.estimator",
                format!("expected control_variate or plain, got `{other}`"),
            ))
        }
    };

    let outer: usize = r.parse("mc.outer", 200)?;
    let inner: usize = r.parse("mc.inner", 500)?;
    if outer < 30 {
        return Err(range(
            "mc.outer",
            format!("need at least 30 outer samples, got {outer}"),
        ));
    }
    if inner < 100 {
        return Err(range(
            "mc.inner",
            format!("need at least 100 inner samples, got {inner}"),
        ));
    }
    let seed: u64 = r.parse("mc.seed", 0)?;

    let output = PathBuf::from(r.raw("output.dir").unwrap_or("results"));

    Ok(ExperimentConfig {
        g,
        h,
        epsilons,
        x0,
        m0,
        driver,
        quad_order,
        horizon,
        steps,
        kind,
        phi,
        etas,
        fd_step,
        x_min,
        x_max,
        x_points,
        estimator,
        outer,
        inner,
        seed,
        output,
        hash: hex::encode(Sha256::digest(text.as_bytes())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[system]\ng = cos(m)\nh = 0.75\n[grid]\nT = 1\nN = 256\n";

    #[test]
    fn minimal_config() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.g.source(), "cos(m)");
        assert_eq!(c.steps, vec![256]);
        assert_eq!(c.epsilons, vec![0.0]);
        assert_eq!(c.driver, Driver::Fractional);
        assert_eq!((c.outer, c.inner), (200, 500));
        assert_eq!(c.phi, TestFunction::Tanh);
        assert_eq!(c.estimator, InnerEstimator::ControlVariate);
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn lists_and_comments() {
        let text = "# header\n[system]\ng = x*m  # trailing\nepsilon = 0.1, 0.01,0\n[grid]\nN = 16, 32\n[experiment]\nkind = rate-fit\nphi = gauss_bump\n[mc]\nseed = 18446744073709551615\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.epsilons, vec![0.1, 0.01, 0.0]);
        assert_eq!(c.steps, vec![16, 32]);
        assert_eq!(c.kind, Some(ExperimentKind::RateFit));
        assert_eq!(c.phi, TestFunction::GaussBump);
        assert_eq!(c.seed, u64::MAX);
    }

    #[test]
    fn rejects_subcritical_hurst() {
        let err = parse_config("[system]\ng = cos(m)\nh = 0.3\n[grid]\nN = 8\n").unwrap_err();
        assert!(err.to_string().contains("h must be > 0.5"), "{err}");
        assert!(matches!(err, ConfigError::Range { ref field, .. } if field == "system.h"));
    }

    #[test]
    fn rejects_unknown_identifier() {
        let err = parse_config("[system]\ng = cos(q)\n[grid]\nN = 8\n").unwrap_err();
        match err {
            ConfigError::Expr { field, source } => {
                assert_eq!(field, "system.g");
                assert!(
                    matches!(source, ExprError::UnknownIdentifier { ref name, .. } if name == "q")
                );
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            parse_config("[grid]\nN = 8\n"),
            Err(ConfigError::Missing { .. })
        ));
        assert!(matches!(
            parse_config("[system]\ng = m\n"),
            Err(ConfigError::Missing { .. })
        ));
        assert!(matches!(
            parse_config("g = m\n"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("[system\n"),
            Err(ConfigError::Syntax { .. })
        ));
        assert!(matches!(
            parse_config("[systems]\n"),
            Err(ConfigError::Unknown { .. })
        ));
        assert!(matches!(
            parse_config("[system]\ncolor = red\n"),
            Err(ConfigError::Unknown { .. })
        ));
        assert!(matches!(
            parse_config("[system]\ng = m\ng = x\n[grid]\nN = 2\n"),
            Err(ConfigError::Syntax { line: 3, .. })
        ));
    }

    #[test]
    fn range_errors_name_the_field() {
        let cases = [
            (
                "[system]\ng = m\nepsilon = 2\n[grid]\nN = 8\n",
                "system.epsilon",
            ),
            ("[system]\ng = m\n[grid]\nN = 8, 0\n", "grid.N"),
            ("[system]\ng = m\n[grid]\nN = 8\nT = -1\n", "grid.T"),
            (
                "[system]\ng = m\n[grid]\nN = 8\n[mc]\nouter = 3\n",
                "mc.outer",
            ),
            (
                "[system]\ng = m\n[grid]\nN = 8\n[mc]\nseed = -1\n",
                "mc.seed",
            ),
            (
                "[system]\ng = m\ndriver = brownian\nh = 0.7\n[grid]\nN = 8\n",
                "system.h",
            ),
            (
                "[system]\ng = m\n[grid]\nN = 8\n[experiment]\nphi = cube\n",
                "experiment.phi",
            ),
            (
                "[system]\ng = m\n[grid]\nN = 8\n[experiment]\nkind = plot\n",
                "experiment.kind",
            ),
            (
                "[system]\ng = m\n[grid]\nN = 8\n[experiment]\nestimator = x\n",
                "experiment.estimator",
            ),
        ];
        for (text, expected) in cases {
            match parse_config(text) {
                Err(ConfigError::Range { field, .. }) => assert_eq!(field, expected, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn missing_file() {
        let err = load_config(Path::new("/definitely/not/here.cfg")).unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }));
    }
}
