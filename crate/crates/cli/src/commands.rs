use crate::config::{write_json, write_text, MeshSpec, OperatorChoice, RunConfig, SCHEMA_VERSION};
use crate::{CliError, CliResult, EXIT_OK};
use clap::Args;
use hodgelab::calculus::{mass_norm, Calculus, GradedOperator, OpNormOptions};
use hodgelab::complex::{betti_numbers, save_json, SimplicialComplex};
use hodgelab::funcalc::{
    bisectoriality_sweep, cauchy_fcalc, default_s_grid, default_t_grid, fcalc_oracle,
    hinf_ratio_probe, nonzero_range, relative_error, sign_operator, ContourKind, ContourSpec,
    HinfReport, HolomorphicSymbol, SignMethod, SweepReport, DEFAULT_NU,
};
use hodgelab::index::{euler_grading, graded_index, signature_index, IndexReport};
use hodgelab::linalg::to_complex;
use hodgelab::spectral::{
    eigensolve_dirac, eigensolve_laplacian, harmonic_projection, write_eigenvalues_csv,
    SpectralData,
};
use nalgebra::DMatrix;
use serde::{Serialize, Serializer};
use std::path::{Path, PathBuf};

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// circle, torus2, torus4, icosphere or cp2.
    pub builder: String,
    /// Lattice subdivisions per direction (circle and tori).
    #[arg(long)]
    pub n: Option<usize>,
    /// Refinement level (icosphere).
    #[arg(long)]
    pub subdiv: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct MeshSummary {
    pub schema_version: u32,
    pub mesh: String,
    pub dim: usize,
    #[serde(rename = "V")]
    pub vertices: usize,
    #[serde(rename = "E")]
    pub edges: usize,
    /// Simplex counts by dimension.
    pub f_vector: Vec<usize>,
    pub chi: i64,
    pub betti: Vec<usize>,
    pub file: String,
}

impl MeshSummary {
    pub fn new(label: &str, cx: &SimplicialComplex, file: &str) -> Self {
        let counts = cx.counts();
        Self {
            schema_version: SCHEMA_VERSION,
            mesh: label.to_string(),
            dim: cx.dim(),
            vertices: counts[0],
            edges: counts.get(1).copied().unwrap_or(0),
            f_vector: counts,
            chi: cx.euler_characteristic(),
            betti: betti_numbers(cx),
            file: file.to_string(),
        }
    }
}

pub fn cmd_mesh(args: &MeshArgs, cfg: &mut RunConfig) -> CliResult<i32> {
    let spec = MeshSpec::builder(&args.builder, args.n, args.subdiv).normalized()?;
    let cx = spec.build()?;
    let label = spec.label();
    cfg.mesh = Some(spec);
    cfg.passes = vec!["mesh".into()];
    let file = format!("{label}.json");
    std::fs::create_dir_all(&cfg.output_dir).map_err(|source| CliError::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;
    save_json(&cx, &cfg.out_path(&file))?;
    let summary = MeshSummary::new(&label, &cx, &file);
    let text = write_json(&cfg.out_path(&format!("{label}.summary.json")), &summary)?;
    print!("{text}");
    Ok(EXIT_OK)
}

fn load(path: &Path, cfg: &mut RunConfig) -> CliResult<(String, SimplicialComplex)> {
    let spec = MeshSpec::File {
        path: path.to_path_buf(),
    };
    let cx = spec.build()?;
    let label = spec.label();
    cfg.mesh = Some(spec);
    Ok((label, cx))
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Mesh JSON (or OFF) file.
    #[arg(long)]
    pub mesh: PathBuf,
    /// Require the signature (dimension must be a multiple of four).
    #[arg(long)]
    pub signature: bool,
    /// Relative singular-value threshold for rank decisions.
    #[arg(long)]
    pub rank_tol: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct IndexOutput {
    pub schema_version: u32,
    pub mesh: String,
    pub dim: usize,
    pub chi: i64,
    pub index: i64,
    pub index_matches_chi: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signature: Option<i64>,
    pub euler: IndexReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signature_report: Option<IndexReport>,
}

pub fn cmd_index(args: &IndexArgs, cfg: &mut RunConfig) -> CliResult<i32> {
    if let Some(t) = args.rank_tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::Usage(format!(
                "--rank-tol must lie in (0, 1), got {t}"
            )));
        }
        cfg.tolerances.rank_tol = t;
    }
    let (label, cx) = load(&args.mesh, cfg)?;
    let d = cx.dim();
    let wants_signature = d > 0 && d % 4 == 0;
    if args.signature && !wants_signature {
        return Err(CliError::Usage(format!(
            "signature needs dimension divisible by four, mesh has dimension {d}"
        )));
    }
    cfg.passes = vec!["euler_index".into()];
    if wants_signature {
        cfg.passes.push("signature".into());
    }
    let calc = Calculus::new(&cx)?;
    let grading = euler_grading(calc.layout());
    let mut euler = graded_index(
        &calc.dirac,
        &calc.metric.stacked_mass(),
        &grading,
        cfg.tolerances.rank_tol,
    )?;
    euler.operator = "D+".into();
    let euler = euler.with_mesh(&label);
    let signature_report = if wants_signature {
        Some(signature_index(&cx)?.with_mesh(&label))
    } else {
        None
    };
    let chi = cx.euler_characteristic();
    let out = IndexOutput {
        schema_version: SCHEMA_VERSION,
        mesh: label.clone(),
        dim: d,
        chi,
        index: euler.index,
        index_matches_chi: euler.index == chi,
        signature: signature_report.as_ref().map(|r| r.index),
        euler,
        signature_report,
    };
    let text = write_json(&cfg.out_path(&format!("{label}.index.json")), &out)?;
    print!("{text}");
    Ok(EXIT_OK)
}

fn parse_p(s: &str) -> Result<f64, String> {
    let p = match s.to_ascii_lowercase().as_str() {
        "inf" | "infinity" => f64::INFINITY,
        other => other
            .parse::<f64>()
            .map_err(|e| format!("invalid exponent '{s}': {e}"))?,
    };
    if p >= 1.0 {
        Ok(p)
    } else {
        Err(format!("exponent must be at least 1, got {s}"))
    }
}

#[derive(Debug, Args)]
pub struct FuncalcArgs {
    /// Mesh JSON (or OFF) file.
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, value_enum, default_value = "dirac")]
    pub operator: OperatorChoice,
    /// Sweep `sup_t ‖t R(it, D)‖_p` over a log grid.
    #[arg(long)]
    pub sweep: bool,
    /// Exponents for the sweep and the H∞ probe (`inf` allowed).
    #[arg(long = "p", value_parser = parse_p, num_args = 1.., default_values_t = vec![2.0])]
    pub p: Vec<f64>,
    /// Grid points for sweeps and probes.
    #[arg(long, default_value_t = 25)]
    pub points: usize,
    /// Compare the contour calculus of a built-in symbol with the eigen oracle
    /// (`rational1` to `rational4`: z^k/(1+z²)^k).
    #[arg(long)]
    pub symbol: Option<String>,
    /// Quadrature nodes per ray.
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    /// Contour half-angle.
    #[arg(long, default_value_t = DEFAULT_NU)]
    pub nu: f64,
    /// Contour sign of D with `sgn² = I − P` check.
    #[arg(long)]
    pub sign: bool,
    /// Also compare the contour sign with the spectral sign.
    #[arg(long)]
    pub compare: bool,
    /// Empirical H∞ constant for `s z/(z² + s²)`.
    #[arg(long)]
    pub hinf: bool,
}

/// Built-in symbols by name.
pub fn parse_symbol(name: &str, nu: f64) -> CliResult<HolomorphicSymbol> {
    let k = name
        .strip_prefix("rational")
        .and_then(|k| k.parse::<u32>().ok())
        .filter(|k| (1..=4).contains(k))
        .ok_or_else(|| {
            CliError::Usage(format!(
                "unknown symbol '{name}' (expected rational1 to rational4)"
            ))
        })?;
    Ok(HolomorphicSymbol::rational(k, nu))
}

fn serialize_p<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
    if p.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*p)
    }
}

#[derive(Debug, Serialize)]
pub struct SymbolReport {
    pub name: String,
    pub contour: ContourSpec,
    pub relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct SignReport {
    pub nodes_per_ray: usize,
    pub nu: f64,
    /// `‖sgn² − (I − P)‖₂` for the contour sign.
    pub square_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_difference: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    #[serde(serialize_with = "serialize_p")]
    pub p: f64,
    pub sup: f64,
    pub finite: bool,
    /// Only meaningful at `p = 2`, where the bound is `1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contractive: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct FuncalcOutput {
    pub schema_version: u32,
    pub mesh: String,
    pub operator: OperatorChoice,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep_summary: Vec<SweepSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbol: Option<SymbolReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign: Option<SignReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub hinf: Vec<HinfReport>,
}

fn p_tag(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

fn grid_csv(header: &str, grid: &[f64], cols: &[&[f64]]) -> String {
    let mut s = format!("{header}\n");
    for (i, x) in grid.iter().enumerate() {
        s.push_str(&format!("{x:.17e}"));
        for c in cols {
            s.push_str(&format!(",{:.17e}", c[i]));
        }
        s.push('\n');
    }
    s
}

/// `‖sgn² − (I − P)‖₂` in the mass norm.
pub fn sign_square_residual(
    s: &GradedOperator,
    sd: &SpectralData,
    calc: &Calculus,
) -> CliResult<f64> {
    let p = harmonic_projection(sd, None)?;
    let n = s.size();
    let target = DMatrix::identity(n, n) - &p.matrix;
    Ok(mass_norm(
        &to_complex(&(&s.matrix * &s.matrix - target)),
        &calc.metric,
    )?)
}

pub fn cmd_funcalc(args: &FuncalcArgs, cfg: &mut RunConfig) -> CliResult<i32> {
    // validate everything before assembling
    if !(args.sweep || args.symbol.is_some() || args.sign || args.hinf) {
        return Err(CliError::Usage(
            "nothing to do: pass --sweep, --symbol, --sign or --hinf".into(),
        ));
    }
    if args.compare && !args.sign {
        return Err(CliError::Usage("--compare requires --sign".into()));
    }
    if !(args.nu > 0.0 && args.nu < std::f64::consts::FRAC_PI_2) {
        return Err(CliError::Usage(format!(
            "--nu must lie in (0, π/2), got {}",
            args.nu
        )));
    }
    if args.points == 0 {
        return Err(CliError::Usage("--points must be positive".into()));
    }
    let symbol = args
        .symbol
        .as_deref()
        .map(|s| parse_symbol(s, args.nu))
        .transpose()?;
    if args.operator == OperatorChoice::Laplacian && (args.sweep || args.sign || args.hinf) {
        return Err(CliError::Usage(
            "--sweep, --sign and --hinf act on the Dirac operator".into(),
        ));
    }
    let (label, cx) = load(&args.mesh, cfg)?;
    cfg.operator = args.operator;
    cfg.passes.clear();
    let calc = Calculus::new(&cx)?;
    let sd_dirac = eigensolve_dirac(&calc)?;
    let opts = OpNormOptions {
        seed: cfg.seed,
        ..OpNormOptions::default()
    };
    let mut out = FuncalcOutput {
        schema_version: SCHEMA_VERSION,
        mesh: label.clone(),
        operator: args.operator,
        seed: cfg.seed,
        sweep_summary: Vec::new(),
        sweep: Vec::new(),
        symbol: None,
        sign: None,
        hinf: Vec::new(),
    };
    let mut spectrum_csv = Vec::new();
    write_eigenvalues_csv(&sd_dirac, &mut spectrum_csv)?;
    write_text(
        &cfg.out_path(&format!("{label}.spectrum.csv")),
        &String::from_utf8_lossy(&spectrum_csv),
    )?;

    if args.sweep {
        cfg.passes.push("sweep".into());
        let grid = default_t_grid(&sd_dirac, args.points);
        out.sweep = bisectoriality_sweep(&calc.dirac, &calc.metric, &args.p, &grid, &opts)?;
        for r in &out.sweep {
            out.sweep_summary.push(SweepSummary {
                p: r.p,
                sup: r.sup,
                finite: r.sup.is_finite(),
                contractive: (r.p == 2.0).then_some(r.sup <= 1.0 + cfg.tolerances.bisectorial),
            });
            let csv = grid_csv("t,upper,lower", &r.grid, &[&r.norms, &r.lower]);
            write_text(
                &cfg.out_path(&format!("{label}.sweep_p{}.csv", p_tag(r.p))),
                &csv,
            )?;
        }
    }

    if let Some(f) = symbol {
        cfg.passes.push("symbol".into());
        let (a, sd, kind) = match args.operator {
            OperatorChoice::Dirac => (calc.dirac.clone(), sd_dirac.clone(), ContourKind::Bisector),
            OperatorChoice::Laplacian => (
                calc.laplacian(),
                eigensolve_laplacian(&calc)?,
                ContourKind::Sector,
            ),
        };
        let (lo, hi) = nonzero_range(&sd);
        let contour = ContourSpec::for_spectrum(kind, args.nu, lo, hi, args.nodes)?;
        let fa = cauchy_fcalc(&a, &f, &contour)?;
        let err = relative_error(&fa, &fcalc_oracle(&sd, &f), &calc.metric)?;
        out.symbol = Some(SymbolReport {
            name: f.name.clone(),
            contour,
            relative_error: err,
            tolerance: cfg.tolerances.fcalc,
            pass: err < cfg.tolerances.fcalc,
        });
    }

    if args.sign {
        cfg.passes.push("sign".into());
        let method = SignMethod::Contour {
            nodes_per_ray: args.nodes.max(128),
            eps_factor: 1e-3,
            nu: args.nu,
        };
        let s = sign_operator(&calc.dirac, &sd_dirac, method)?;
        let square_residual = sign_square_residual(&s, &sd_dirac, &calc)?;
        let oracle_difference = if args.compare {
            let o = sign_operator(&calc.dirac, &sd_dirac, SignMethod::Oracle)?;
            Some(mass_norm(
                &to_complex(&(&s.matrix - &o.matrix)),
                &calc.metric,
            )?)
        } else {
            None
        };
        let tol = cfg.tolerances.sign;
        out.sign = Some(SignReport {
            nodes_per_ray: args.nodes.max(128),
            nu: args.nu,
            square_residual,
            oracle_difference,
            tolerance: tol,
            pass: square_residual < tol && oracle_difference.is_none_or(|d| d < tol),
        });
    }

    if args.hinf {
        cfg.passes.push("hinf".into());
        let grid = default_s_grid(&sd_dirac, args.points);
        for &p in &args.p {
            let r = hinf_ratio_probe(&sd_dirac, &calc.metric, p, &grid, args.nu, &opts)?;
            let csv = grid_csv(
                "s,norm,symbol_sup,ratio",
                &r.grid,
                &[&r.norms, &r.symbol_sups, &r.ratios],
            );
            write_text(
                &cfg.out_path(&format!("{label}.hinf_p{}.csv", p_tag(p))),
                &csv,
            )?;
            out.hinf.push(r);
        }
    }

    let text = write_json(&cfg.out_path(&format!("{label}.funcalc.json")), &out)?;
    print!("{text}");
    Ok(EXIT_OK)
}
