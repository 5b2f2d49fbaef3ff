use std::fs::File;
use std::io::{self, BufWriter, Write};

use serde_json::{json, Value};

use gqfi_core::channels::{covariance_closed_form, probe_covariance};
use gqfi_core::crb::{crb_report, preset_params, CrbReport, PRESET_THETAS};
use gqfi_core::phase_space::{c_matrix_eigenvalues, symplectic_eigenvalues, validate_covariance};
use gqfi_core::qfi::{engine_agreement, qfi_fidelity_limit, QfiResult};
use gqfi_core::sensing::{
    qfi_sweep, spectrum_trace, thermometry_qfi, Axis, CrossingKind, Preset, PresetSpec,
    SpectrumSpec, SpectrumTable, SweepSpec, SweepTable, ThermometryVariant,
};
use gqfi_core::{Engine, Execution, ModeOrdering, Parameter, ProbeParams};

use crate::output::{Cell, Table};
use crate::{
    AxisArgs, CliError, CrbArgs, OutputArgs, ProbeArgs, QfiArgs, SpectrumArgs, StateArgs, SweepArgs,
};

pub const QFI_COLUMNS: [&str; 7] = ["phi", "r", "nbar", "mbar", "qfi", "engine", "flags"];

impl ProbeArgs {
    /// `base` with every given flag applied on top.
    fn apply(&self, base: ProbeParams) -> Result<ProbeParams, CliError> {
        let mut p = base;
        if let Some(v) = self.nbar {
            p.nbar = v;
        }
        if let Some(v) = self.mbar {
            p.mbar = v;
        }
        if let Some(v) = self.r {
            p.r = v;
        }
        if let Some(v) = self.phi {
            p.phi = v;
        }
        if let Some(t) = self.tau {
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::Usage(format!(
                    "--tau must lie in [0, 1], got {t}"
                )));
            }
            p.phi = t.sqrt().acos();
        }
        p.validate()?;
        Ok(p)
    }
}

fn default_params() -> ProbeParams {
    ProbeParams {
        nbar: 1.0,
        mbar: 1.0,
        r: 0.0,
        phi: 0.0,
    }
}

impl OutputArgs {
    pub fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    pub fn emit(&self, table: &Table) -> Result<(), CliError> {
        match &self.out {
            Some(path) => {
                let mut w = BufWriter::new(File::create(path)?);
                table.write(self.format, &mut w)?;
                w.flush()?;
            }
            None => {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                table.write(self.format, &mut lock)?;
            }
        }
        Ok(())
    }
}

fn override_axis(
    axis: &mut Axis,
    var: Option<gqfi_core::sensing::AxisVariable>,
    min: Option<f64>,
    max: Option<f64>,
    count: Option<usize>,
) {
    if let Some(v) = var {
        axis.variable = v;
    }
    if let Some(v) = min {
        axis.min = v;
    }
    if let Some(v) = max {
        axis.max = v;
    }
    if let Some(v) = count {
        axis.count = v;
    }
}

impl AxisArgs {
    /// Applies the axis flags to preset axes (or builds them from scratch).
    fn apply(&self, x: Option<Axis>, y: Option<Axis>) -> Result<(Axis, Option<Axis>), CliError> {
        let mut x = match x {
            Some(a) => a,
            None => {
                let var = self.x_axis.ok_or_else(|| {
                    CliError::Usage("--x-axis is required without --preset".into())
                })?;
                Axis {
                    variable: var,
                    min: self.x_min.unwrap_or(0.0),
                    max: self.x_max.unwrap_or(std::f64::consts::PI),
                    count: self.x_count.unwrap_or(101),
                }
            }
        };
        override_axis(&mut x, self.x_axis, self.x_min, self.x_max, self.x_count);
        let y = if self.no_y {
            None
        } else {
            match (y, self.y_axis) {
                (Some(mut a), _) => {
                    override_axis(&mut a, self.y_axis, self.y_min, self.y_max, self.y_count);
                    Some(a)
                }
                (None, Some(var)) => Some(Axis {
                    variable: var,
                    min: self.y_min.unwrap_or(0.0),
                    max: self.y_max.ok_or_else(|| {
                        CliError::Usage("--y-max is required for a new y axis".into())
                    })?,
                    count: self.y_count.unwrap_or(51),
                }),
                (None, None) => None,
            }
        };
        x.validate()?;
        if let Some(a) = &y {
            a.validate()?;
        }
        Ok((x, y))
    }
}

fn params_cells(p: &ProbeParams) -> Vec<Cell> {
    vec![p.phi.into(), p.r.into(), p.nbar.into(), p.mbar.into()]
}

fn qfi_row(
    p: &ProbeParams,
    result: &Result<QfiResult, gqfi_core::Error>,
    requested: Engine,
) -> Vec<Cell> {
    let mut row = params_cells(p);
    match result {
        Ok(r) => {
            row.push(r.value.into());
            row.push(r.engine.name().into());
            row.push(r.flags.names().join(";").into());
        }
        Err(e) => {
            row.push(Cell::Empty);
            row.push(requested.name().into());
            row.push(format!("error:{}", e.code()).into());
        }
    }
    row
}

pub fn state(a: &StateArgs) -> Result<(), CliError> {
    let p = a.probe.apply(default_params())?;
    let sigma = probe_covariance(&p)?;
    let report = validate_covariance(&sigma, ModeOrdering::Qqpp)?;
    let ev = symplectic_eigenvalues(&sigma, ModeOrdering::Qqpp)?;
    let spectrum = c_matrix_eigenvalues(&sigma, ModeOrdering::Qqpp)?;
    let closed = covariance_closed_form(&p)?;
    let mut t = Table::new(
        "state",
        json!({ "params": p, "seed": a.output.seed }),
        &["row", "q1", "q2", "p1", "p2"],
    );
    t.meta("symplectic_eigenvalues", json!(ev.values));
    t.meta("trace_formula_eigenvalues", json!(ev.trace_formula));
    t.meta("c_spectrum", json!(spectrum));
    t.meta("physical", json!(report.is_physical));
    t.meta(
        "printed_closed_form_mismatches",
        json!(closed
            .flags
            .entries
            .iter()
            .map(|e| format!("s{}{}", e.row, e.col))
            .collect::<Vec<_>>()),
    );
    for (i, name) in ["q1", "q2", "p1", "p2"].iter().enumerate() {
        let mut row: Vec<Cell> = vec![(*name).into()];
        row.extend((0..4).map(|j| Cell::Num(sigma[(i, j)])));
        t.push(row);
    }
    a.output.emit(&t)
}

fn spectrum_table(
    spec: &SpectrumSpec,
    output: &OutputArgs,
    preset: Option<Preset>,
) -> Result<Table, CliError> {
    let table: SpectrumTable = spectrum_trace(spec, output.execution())?;
    let mut t = Table::new(
        "spectrum",
        json!({
            "preset": preset.map(|p| p.name()),
            "spec": spec,
            "seed": output.seed,
        }),
        &[
            "phi", "r", "nbar", "mbar", "lambda_1", "lambda_2", "lambda_3", "lambda_4", "error",
        ],
    );
    let crossings: Vec<Value> = table
        .crossings
        .iter()
        .map(|c| match c.kind {
            CrossingKind::Point { location, gap } => {
                json!({ "y": c.y, "kind": "point", "location": location, "gap": gap })
            }
            CrossingKind::Segment { start, end } => {
                json!({ "y": c.y, "kind": "segment", "start": start, "end": end })
            }
        })
        .collect();
    t.meta("crossings", Value::Array(crossings));
    for row in &table.rows {
        let mut cells = params_cells(&row.params);
        match row.eigenvalues {
            Some(e) => cells.extend(e.iter().map(|&v| Cell::Num(v))),
            None => cells.extend((0..4).map(|_| Cell::Empty)),
        }
        cells.push(row.error.clone().map_or(Cell::Empty, Cell::Text));
        t.push(cells);
    }
    Ok(t)
}

pub fn spectrum(a: &SpectrumArgs) -> Result<(), CliError> {
    let (fixed, x, y) = match a.preset {
        Some(preset) => match preset.spec() {
            PresetSpec::Spectrum(s) => (s.fixed, Some(s.x), s.y),
            PresetSpec::Sweep(_) => {
                return Err(CliError::Usage(format!(
                    "{preset} is a QFI preset; use `gqfi sweep`"
                )))
            }
        },
        None => (default_params(), None, None),
    };
    let fixed = a.probe.apply(fixed)?;
    let (x, y) = a.axes.apply(x, y)?;
    let spec = SpectrumSpec {
        fixed,
        x,
        y,
        source: a.source,
    };
    a.output.emit(&spectrum_table(&spec, &a.output, a.preset)?)
}

pub fn qfi(a: &QfiArgs) -> Result<(), CliError> {
    let p = a.probe.apply(default_params())?;
    let engines: Vec<Engine> = if a.engine == "all" {
        Engine::ALL.to_vec()
    } else {
        vec![a.engine.parse().map_err(CliError::Usage)?]
    };
    let mut t = Table::new(
        "qfi",
        json!({
            "params": p,
            "which": a.which,
            "engines": engines,
            "step": a.step,
            "reduced": a.reduced,
            "seed": a.output.seed,
        }),
        &QFI_COLUMNS,
    );
    if a.reduced && a.which != Parameter::Nbar {
        return Err(CliError::Usage("--reduced requires --which nbar".into()));
    }
    for &engine in &engines {
        let result = if a.reduced {
            thermometry_qfi(&p, ThermometryVariant::Reduced, engine)
        } else {
            match (engine, a.step) {
                (Engine::FidelityLimit, Some(s)) => qfi_fidelity_limit(&p, a.which, s),
                _ => gqfi_core::qfi(&p, a.which, engine),
            }
        };
        t.push(qfi_row(&p, &result, engine));
    }
    if engines.len() > 1 && !a.reduced {
        t.meta(
            "relative_spread",
            json!(engine_agreement(&p, a.which).relative_spread),
        );
    }
    a.output.emit(&t)
}

fn sweep_table(table: &SweepTable, output: &OutputArgs, preset: Option<Preset>) -> Table {
    let spec = &table.spec;
    let mut columns: Vec<&str> = QFI_COLUMNS.to_vec();
    if spec.emit_reduced_thermometry {
        columns.push("reduced_qfi");
    }
    if spec.emit_spectrum {
        columns.extend(["lambda_1", "lambda_2"]);
    }
    let mut t = Table::new(
        "sweep",
        json!({
            "preset": preset.map(|p| p.name()),
            "spec": spec,
            "seed": output.seed,
        }),
        &columns,
    );
    t.meta("notes", json!(table.notes));
    t.meta("failed_cells", json!(table.failed_cells()));
    for row in &table.rows {
        let mut cells = params_cells(&row.params);
        cells.push(row.qfi.into());
        cells.push(row.engine.map_or(Cell::Empty, |e| e.name().into()));
        cells.push(row.flags.join(";").into());
        if spec.emit_reduced_thermometry {
            cells.push(row.reduced_qfi.into());
        }
        if spec.emit_spectrum {
            match row.symplectic {
                Some([a, b]) => cells.extend([Cell::Num(a), Cell::Num(b)]),
                None => cells.extend([Cell::Empty, Cell::Empty]),
            }
        }
        t.push(cells);
    }
    t
}

pub fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let base: Option<SweepSpec> = match a.preset.map(|p| p.spec()) {
        Some(PresetSpec::Spectrum(s)) => {
            let fixed = a.probe.apply(s.fixed)?;
            let (x, y) = a.axes.apply(Some(s.x), s.y)?;
            let spec = SpectrumSpec {
                fixed,
                x,
                y,
                source: a.source,
            };
            return a.output.emit(&spectrum_table(&spec, &a.output, a.preset)?);
        }
        Some(PresetSpec::Sweep(s)) => Some(s),
        None => None,
    };
    let (fixed, x, y, which) = match &base {
        Some(s) => (s.fixed, Some(s.x), s.y, s.which),
        None => (default_params(), None, None, Parameter::Phi),
    };
    let fixed = a.probe.apply(fixed)?;
    let (x, y) = a.axes.apply(x, y)?;
    let mut spec = SweepSpec::new(fixed, x, y, a.which.unwrap_or(which));
    if let Some(s) = &base {
        spec.engine = s.engine;
        spec.emit_reduced_thermometry = s.emit_reduced_thermometry;
        spec.emit_spectrum = s.emit_spectrum;
    }
    if let Some(e) = a.engine {
        spec.engine = e;
    }
    spec.emit_reduced_thermometry |= a.reduced;
    spec.emit_spectrum |= a.spectrum;
    let table = qfi_sweep(&spec, a.output.execution())?;
    a.output.emit(&sweep_table(&table, &a.output, a.preset))
}

pub const CRB_COLUMNS: [&str; 16] = [
    "parameter",
    "theta",
    "shots",
    "trials",
    "successful_trials",
    "mean_estimate",
    "bias",
    "empirical_variance",
    "crb",
    "floor",
    "classical_bound",
    "qfi",
    "classical_fi",
    "efficiency_ratio",
    "bound_respected",
    "classical_below_qfi",
];

pub fn crb_row(r: &CrbReport) -> Vec<Cell> {
    vec![
        r.parameter.name().into(),
        r.theta_true.into(),
        r.shots.into(),
        r.trials.into(),
        r.successful_trials.into(),
        r.mean_estimate.into(),
        r.bias.into(),
        r.empirical_variance.into(),
        r.crb.into(),
        r.floor.into(),
        r.classical_bound.into(),
        r.qfi.into(),
        r.classical_fi.into(),
        r.efficiency_ratio.into(),
        r.bound_respected.into(),
        (r.classical_fi <= r.qfi + 1e-8).into(),
    ]
}

pub fn crb(a: &CrbArgs) -> Result<(), CliError> {
    let base = a.probe.apply(preset_params(0.7))?;
    let thetas: Vec<f64> = if a.grid {
        PRESET_THETAS.to_vec()
    } else {
        vec![a.theta.unwrap_or_else(|| base.get(a.which))]
    };
    let mut t = Table::new(
        "crb",
        json!({
            "params": base,
            "which": a.which,
            "thetas": thetas,
            "shots": a.shots,
            "trials": a.trials,
            "seed": a.output.seed,
            "measurement": "heterodyne on both modes, outcome covariance sigma + I",
            "generator": "ChaCha8, stream = trial index",
        }),
        &CRB_COLUMNS,
    );
    let mut failures = Vec::new();
    for &theta in &thetas {
        let r = crb_report(
            &base,
            a.which,
            theta,
            a.shots,
            a.trials,
            a.output.seed,
            a.output.execution(),
        )?;
        if !r.bound_respected {
            failures.push(format!("variance below floor at theta={theta}"));
        }
        if r.classical_fi > r.qfi + 1e-8 {
            failures.push(format!("classical FI above QFI at theta={theta}"));
        }
        t.push(crb_row(&r));
    }
    a.output.emit(&t)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failures.join("; ")))
    }
}
