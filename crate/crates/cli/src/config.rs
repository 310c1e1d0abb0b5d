use crate::{CliError, CliResult};
use hodgelab::complex::{
    build_circle, build_cp2_kuhnel, build_icosphere, build_torus2, build_torus4, load_mesh,
    SimplicialComplex,
};
use hodgelab::linalg::DEFAULT_RANK_TOL;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Version stamped into every report and configuration file.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable overriding the configured output directory.
pub const OUT_ENV: &str = "HODGELAB_OUT";

pub const BUILDERS: [&str; 5] = ["circle", "torus2", "torus4", "icosphere", "cp2"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSpec {
    Builder {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subdiv: Option<usize>,
    },
    File {
        path: PathBuf,
    },
}

impl MeshSpec {
    pub fn builder(name: &str, n: Option<usize>, subdiv: Option<usize>) -> Self {
        MeshSpec::Builder {
            name: name.to_string(),
            n,
            subdiv,
        }
    }

    /// Short label used for file names and reports.
    pub fn label(&self) -> String {
        match self {
            MeshSpec::Builder { name, n, subdiv } => match (n, subdiv) {
                (Some(n), _) => format!("{name}_n{n}"),
                (_, Some(s)) => format!("{name}_s{s}"),
                _ => name.clone(),
            },
            MeshSpec::File { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "mesh".into()),
        }
    }

    /// Fills in builder defaults and rejects parameters a builder does not take.
    pub fn normalized(&self) -> CliResult<Self> {
        let MeshSpec::Builder { name, n, subdiv } = self else {
            return Ok(self.clone());
        };
        let canonical = match name.as_str() {
            "s1" => "circle",
            "t2" | "torus" => "torus2",
            "t4" => "torus4",
            "sphere" | "s2" => "icosphere",
            "cp2_9" | "kuhnel" => "cp2",
            other => other,
        };
        let (n, subdiv) = match canonical {
            "circle" | "torus2" | "torus4" => {
                if subdiv.is_some() {
                    return Err(CliError::Usage(format!(
                        "{canonical} takes --n, not --subdiv"
                    )));
                }
                let default = match canonical {
                    "circle" => 16,
                    "torus2" => 8,
                    _ => 2,
                };
                (Some(n.unwrap_or(default)), None)
            }
            "icosphere" => {
                if n.is_some() {
                    return Err(CliError::Usage("icosphere takes --subdiv, not --n".into()));
                }
                (None, Some(subdiv.unwrap_or(1)))
            }
            "cp2" => {
                if n.is_some() || subdiv.is_some() {
                    return Err(CliError::Usage("cp2 takes no parameters".into()));
                }
                (None, None)
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown builder '{other}' (expected one of {})",
                    BUILDERS.join(", ")
                )))
            }
        };
        Ok(MeshSpec::builder(canonical, n, subdiv))
    }

    pub fn build(&self) -> CliResult<SimplicialComplex> {
        let cx = match self.normalized()? {
            MeshSpec::Builder { name, n, subdiv } => match name.as_str() {
                "circle" => build_circle(n.unwrap_or_default())?,
                "torus2" => build_torus2(n.unwrap_or_default())?,
                "torus4" => build_torus4(n.unwrap_or_default())?,
                "icosphere" => build_icosphere(subdiv.unwrap_or_default())?,
                _ => build_cp2_kuhnel()?,
            },
            MeshSpec::File { path } => {
                if !path.exists() {
                    return Err(CliError::Usage(format!(
                        "mesh file {} does not exist",
                        path.display()
                    )));
                }
                load_mesh(&path)?
            }
        };
        Ok(cx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OperatorChoice {
    Dirac,
    Laplacian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative singular-value threshold for rank decisions.
    pub rank_tol: f64,
    /// Contour calculus against the eigen oracle, relative.
    pub fcalc: f64,
    /// Contour sign against the spectral sign.
    pub sign: f64,
    /// Slack above 1 for `‖t R(it, D)‖₂`.
    pub bisectorial: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_tol: DEFAULT_RANK_TOL,
            fcalc: 1e-8,
            sign: 1e-6,
            bisectorial: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshSpec>,
    pub operator: OperatorChoice,
    /// Analysis passes requested, in execution order.
    #[serde(default)]
    pub passes: Vec<String>,
    pub tolerances: Tolerances,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            mesh: None,
            operator: OperatorChoice::Dirac,
            passes: Vec::new(),
            tolerances: Tolerances::default(),
            output_dir: PathBuf::from("."),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "unsupported config schema_version {}",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

/// Flag, then environment, then the configured directory.
pub fn resolve_output_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output_dir.clone(),
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline. Struct fields serialize in
/// declaration order, so the output is stable.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig {
            mesh: Some(MeshSpec::builder("icosphere", None, Some(1))),
            operator: OperatorChoice::Laplacian,
            passes: vec!["index".into(), "sweep".into()],
            tolerances: Tolerances {
                rank_tol: 1e-9,
                ..Tolerances::default()
            },
            output_dir: PathBuf::from("runs/a"),
            seed: 7,
            ..RunConfig::default()
        };
        let text = cfg.to_json().unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json().unwrap(), text);
        let file = RunConfig {
            mesh: Some(MeshSpec::File {
                path: PathBuf::from("t2.json"),
            }),
            ..RunConfig::default()
        };
        let back: RunConfig = serde_json::from_str(&file.to_json().unwrap()).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn builder_names_are_validated() {
        assert!(matches!(
            MeshSpec::builder("klein", None, None).normalized(),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            MeshSpec::builder("torus2", None, Some(1)).normalized(),
            Err(CliError::Usage(_))
        ));
        assert_eq!(
            MeshSpec::builder("sphere", None, None)
                .normalized()
                .unwrap(),
            MeshSpec::builder("icosphere", None, Some(1))
        );
        assert_eq!(
            MeshSpec::builder("torus2", Some(4), None).label(),
            "torus2_n4"
        );
    }

    #[test]
    fn output_flag_wins() {
        let cfg = RunConfig::default();
        assert_eq!(
            resolve_output_dir(Some(Path::new("x")), &cfg),
            PathBuf::from("x")
        );
    }
}
