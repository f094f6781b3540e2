use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use balflow::flow::{self, diagonal_of, FlowControl, Termination};
use balflow::model_io::{self, LoadedModel};
use balflow::torus::{self, CalabiControl, FourierMode, TorusGrid};
use balflow::{BalancedStructure, InvariantMetric};
use serde_json::{json, Map, Value};

use crate::{verify, CalabiArgs, FlowArgs, Format, ModelArgs, ModesArgs, OutputArgs, ReduceArgs, VerifyArgs};

#[derive(Debug)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub details: Value,
    pub exit: u8,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: "E_USAGE".into(),
            message: message.into(),
            details: Value::Null,
            exit: 2,
        }
    }
}

impl From<balflow::Error> for CliError {
    fn from(e: balflow::Error) -> Self {
        let details = match &e {
            balflow::Error::Parse { line, column, .. } => json!({ "line": line, "column": column }),
            balflow::Error::ModelField { field, .. } => json!({ "field": field }),
            balflow::Error::GridNotPositive { point, eigenvalue } => json!({ "point": point, "eigenvalue": eigenvalue }),
            balflow::Error::Unstable { step, previous, current } => {
                json!({ "step": step, "previous_energy": previous, "energy": current })
            }
            _ => Value::Null,
        };
        Self {
            code: e.code().into(),
            message: e.to_string(),
            details,
            exit: 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn report_error(e: &CliError) -> ExitCode {
    let mut body = json!({ "code": e.code, "message": e.message });
    if !e.details.is_null() {
        body["details"] = e.details.clone();
    }
    eprintln!("{}", json!({ "error": body }));
    ExitCode::from(e.exit)
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        code: "E_IO".into(),
        message: format!("{}: {e}", path.display()),
        details: Value::Null,
        exit: 2,
    }
}

/// Inline JSON when the argument starts with `[` or `{`, otherwise a file path.
fn read_json_arg(arg: &str) -> Result<String> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('[') || trimmed.starts_with('{') {
        Ok(arg.to_string())
    } else {
        fs::read_to_string(arg).map_err(|e| io_error(Path::new(arg), e))
    }
}

fn load_model(args: &ModelArgs) -> Result<LoadedModel> {
    let mut loaded = match (&args.model, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            model_io::parse_model(&text)?
        }
        (None, Some(name)) => model_io::preset(name)?,
        (None, None) => return Err(CliError::usage("one of --model or --preset is required")),
    };
    if let Some(metric) = &args.metric {
        loaded.metric = model_io::parse_metric(loaded.model.n(), &read_json_arg(metric)?)?;
    }
    Ok(loaded)
}

fn default_modes() -> Vec<FourierMode> {
    vec![
        FourierMode {
            k: [1, 0, 1, 0],
            amplitude: 0.003,
            phase: 0.0,
        },
        FourierMode {
            k: [0, 1, 0, -1],
            amplitude: 0.002,
            phase: 0.7,
        },
    ]
}

fn load_modes(args: &ModesArgs) -> Result<Vec<FourierMode>> {
    match &args.modes {
        Some(arg) => Ok(model_io::parse_modes(&read_json_arg(arg)?)?),
        None => Ok(default_modes()),
    }
}

fn emit(output: &OutputArgs, text: &str) -> Result<()> {
    match &output.out {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| io_error(Path::new("<stdout>"), e))
        }
    }
}

/// Summary goes to stdout when the data went to a file, otherwise to stderr.
fn emit_summary(output: &OutputArgs, summary: &Value) {
    if output.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::usage(format!("--{name} must be positive, got {v}")))
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn csv(columns: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = columns.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn json_rows(columns: &[String], rows: &[Vec<f64>]) -> Value {
    Value::Array(
        rows.iter()
            .map(|row| {
                let mut m = Map::new();
                for (c, v) in columns.iter().zip(row) {
                    m.insert(c.clone(), json!(v));
                }
                Value::Object(m)
            })
            .collect(),
    )
}

pub fn verify(args: &VerifyArgs) -> Result<ExitCode> {
    require_positive("tol", args.tol)?;
    let loaded = load_model(&args.model)?;
    let report = verify::run(&loaded.model, &loaded.metric, args.seed, args.tol);
    let text = match args.output.format.unwrap_or(Format::Json) {
        Format::Json => pretty(&serde_json::to_value(&report).expect("report serializes")),
        Format::Csv => verify::to_csv(&report),
    };
    emit(&args.output, &text)?;
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn max_rel_error(metric: &InvariantMetric, exact: Option<[f64; 3]>) -> f64 {
    let Some(e) = exact else { return f64::NAN };
    let g = metric.matrix();
    let mut err = 0.0f64;
    for r in 0..3 {
        for c in 0..3 {
            let want = if r == c { e[r] } else { 0.0 };
            let scale = if r == c { e[r] } else { e[r].min(e[c]) };
            err = err.max((g[(r, c)].re - want).hypot(g[(r, c)].im) / scale);
        }
    }
    err
}

pub fn flow(args: &FlowArgs) -> Result<ExitCode> {
    require_positive("dt", args.dt)?;
    require_positive("tol", args.tol)?;
    let loaded = load_model(&args.model)?;
    let (model, metric) = (&loaded.model, &loaded.metric);
    let n = model.n();
    if args.compare_exact {
        let identity = InvariantMetric::identity(3);
        if model.name() != "iwasawa" || n != 3 || metric.matrix() != identity.matrix() {
            return Err(CliError::usage(
                "--compare-exact needs the iwasawa model with the identity metric",
            ));
        }
    }
    let structure = BalancedStructure::from_metric(model, metric)?;
    let control = FlowControl {
        tol: args.tol,
        dt: args.dt,
        fixed_step: args.fixed_step,
        ..FlowControl::default()
    };
    let traj = flow::integrate(model, &structure, args.t_end, &control)?;

    let mut columns = vec!["t".to_string()];
    for part in ["re", "im"] {
        for r in 1..=n {
            for c in 1..=n {
                columns.push(format!("{part}_g{r}{c}"));
            }
        }
    }
    columns.extend(["closedness", "positivity_margin", "class_drift"].map(String::from));
    if args.compare_exact {
        columns.extend(["rel_error_closed_form", "rel_error_reversed_closed_form"].map(String::from));
    }
    let mut rows = Vec::with_capacity(traj.snapshots.len());
    let (mut worst, mut worst_reversed) = (0.0f64, 0.0f64);
    for s in &traj.snapshots {
        let g = s.metric.matrix();
        let mut row = vec![s.t];
        row.extend(g.transpose().iter().map(|v| v.re));
        row.extend(g.transpose().iter().map(|v| v.im));
        row.extend([s.monitors.closedness, s.monitors.positivity_margin, s.monitors.class_drift]);
        if args.compare_exact {
            let printed = max_rel_error(&s.metric, flow::iwasawa_exact_diag(s.t).ok());
            let reversed = max_rel_error(&s.metric, flow::iwasawa_flow_solution_diag(s.t).ok());
            worst = if printed.is_nan() { f64::NAN } else { worst.max(printed) };
            worst_reversed = worst_reversed.max(reversed);
            row.extend([printed, reversed]);
        }
        rows.push(row);
    }

    let mut summary = json!({
        "model": model.name(),
        "termination": traj.termination.reason(),
        "t_final": traj.last().t,
        "accepted_steps": traj.accepted_steps,
        "rejected_steps": traj.rejected_steps,
        "final_diagonal": diagonal_of(&traj.last().metric),
    });
    if let Termination::PositivityLost { last_safe, unsafe_time } = traj.termination {
        summary["last_safe"] = json!(last_safe);
        summary["unsafe_time"] = json!(unsafe_time);
    }
    if args.compare_exact {
        summary["max_rel_error_closed_form"] = json!(worst);
        summary["max_rel_error_reversed_closed_form"] = json!(worst_reversed);
    }

    let text = match args.output.format.unwrap_or(Format::Csv) {
        Format::Csv => csv(&columns, &rows),
        Format::Json => pretty(&json!({ "summary": summary, "snapshots": json_rows(&columns, &rows) })),
    };
    emit(&args.output, &text)?;

    if let Termination::PositivityLost { last_safe, unsafe_time } = traj.termination {
        return Err(CliError {
            code: "E_POSITIVITY_LOST".into(),
            message: format!("positivity lost between t = {last_safe} and t = {unsafe_time}"),
            details: json!({ "reason": "positivity lost", "last_safe": last_safe, "unsafe_time": unsafe_time }),
            exit: 3,
        });
    }
    emit_summary(&args.output, &summary);
    Ok(ExitCode::SUCCESS)
}

fn envelope_warning(n: usize, envelope: f64) {
    eprintln!(
        "{}",
        json!({ "warning": {
            "code": "W_ENVELOPE",
            "message": format!("max |eig(g) - 1| = {envelope} exceeds {} on the N = {n} grid; results are outside the validated envelope", torus::ENVELOPE),
        }})
    );
}

pub fn reduce_check(args: &ReduceArgs) -> Result<ExitCode> {
    require_positive("tol", args.tol)?;
    let modes = load_modes(&args.modes)?;
    let mut results = Vec::new();
    let mut flagged = false;
    let mut rows = Vec::new();
    for &n in &args.sizes {
        let grid = TorusGrid::new(n)?;
        let u = torus::potential(&grid, &modes)?;
        let r = torus::reduction_identity_check(&grid, &u)?;
        if !r.in_envelope {
            flagged = true;
            envelope_warning(n, r.envelope);
        }
        rows.push(vec![
            n as f64,
            r.identity_residual,
            r.delta_bc_residual,
            r.residual,
            r.envelope,
            f64::from(u8::from(r.in_envelope)),
            f64::from(u8::from(r.residual <= args.tol)),
        ]);
        results.push(json!({
            "N": n,
            "identity_residual": r.identity_residual,
            "delta_bc_residual": r.delta_bc_residual,
            "residual": r.residual,
            "envelope": r.envelope,
            "in_envelope": r.in_envelope,
            "within_tol": r.residual <= args.tol,
        }));
    }
    let residuals: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let decreasing = (residuals.len() > 1).then(|| residuals.windows(2).all(|w| w[1] < w[0]));
    let text = match args.output.format.unwrap_or(Format::Json) {
        Format::Json => pretty(&json!({
            "modes": modes,
            "tolerance": args.tol,
            "results": results,
            "strictly_decreasing": decreasing,
            "flagged": flagged,
        })),
        Format::Csv => {
            let columns = ["N", "identity_residual", "delta_bc_residual", "residual", "envelope", "in_envelope", "within_tol"]
                .map(String::from);
            csv(&columns, &rows)
        }
    };
    emit(&args.output, &text)?;
    Ok(ExitCode::SUCCESS)
}

pub fn calabi(args: &CalabiArgs) -> Result<ExitCode> {
    let grid = TorusGrid::new(args.size)?;
    let dt = args.dt.unwrap_or_else(|| torus::max_stable_dt(args.size));
    require_positive("dt", dt)?;
    let modes = load_modes(&args.modes)?;
    let u = torus::potential(&grid, &modes)?;
    let g = torus::metric_from_potential(&grid, &u)?;
    let envelope = g.envelope();
    let flagged = envelope > torus::ENVELOPE;
    if flagged {
        envelope_warning(args.size, envelope);
    }
    let control = CalabiControl {
        steps: args.steps,
        dt,
        residual_every: args.residual_every,
    };
    let traj = torus::integrate_calabi(&grid, &u, &control)?;
    let columns = ["step", "t", "calabi_energy", "max_abs_s", "min_eig", "reduction_residual"].map(String::from);
    let monotone = traj.rows.windows(2).all(|w| w[1].energy <= w[0].energy);
    let text = match args.output.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut out = columns.join(",");
            out.push('\n');
            for r in &traj.rows {
                let residual = r.reduction_residual.map(fmt_f64).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{residual}\n",
                    r.step,
                    fmt_f64(r.t),
                    fmt_f64(r.energy),
                    fmt_f64(r.max_abs_s),
                    fmt_f64(r.min_eig)
                ));
            }
            out
        }
        Format::Json => pretty(&json!({
            "N": args.size,
            "dt": dt,
            "modes": modes,
            "energy_nonincreasing": monotone,
            "flagged": flagged,
            "rows": traj.rows,
        })),
    };
    emit(&args.output, &text)?;
    let first = traj.rows.first().map_or(0.0, |r| r.energy);
    let last = traj.rows.last().map_or(0.0, |r| r.energy);
    emit_summary(
        &args.output,
        &json!({ "steps": args.steps, "dt": dt, "initial_energy": first, "final_energy": last, "energy_nonincreasing": monotone, "flagged": flagged }),
    );
    Ok(ExitCode::SUCCESS)
}
