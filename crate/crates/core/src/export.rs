//! File formats: gait files, trajectory JSON, and the CSV grids.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{
    turning_radius, ControlInputs, CycleInputs, DisplacementField, Pairing, StratifiedPanelGrid, SubgaitSpec,
    Trajectory, TurningRadius, TwoBeatGaitSpec, TwoBeatPanelSample,
};
use crate::model::ModelSpec;
use crate::shapefield::{FieldSample, ReducedShapeSubspace, Singularity, SingularityKind};

/// One subgait as written in a gait file. Legs are numbered from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgaitFile {
    pub pair: [usize; 2],
    #[serde(default)]
    pub alpha_star: [f64; 2],
    pub t0: f64,
    pub t_pi: f64,
    #[serde(default)]
    pub inputs: ControlInputs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[[f64; 2]; 2]>,
}

impl SubgaitFile {
    pub fn from_spec(spec: &SubgaitSpec, model: &ModelSpec) -> Self {
        let (i, j) = spec.subspace.pair;
        let swing = [model.legs[i].swing, model.legs[j].swing];
        Self {
            pair: [i + 1, j + 1],
            alpha_star: spec.alpha_star,
            t0: spec.t0,
            t_pi: spec.t_pi,
            inputs: spec.inputs,
            bounds: (spec.subspace.bounds != swing).then_some(spec.subspace.bounds),
        }
    }

    pub fn to_spec(&self, model: &ModelSpec) -> Result<SubgaitSpec> {
        let [i, j] = self.pair;
        if i == 0 || j == 0 {
            return Err(Error::InvalidParameter("leg numbers start at 1".into()));
        }
        let mut subspace = ReducedShapeSubspace::new(model, i - 1, j - 1)?;
        if let Some(bounds) = self.bounds {
            subspace = subspace.with_bounds(model, bounds)?;
        }
        Ok(SubgaitSpec::new(subspace, self.alpha_star, self.t0, self.t_pi).with_inputs(self.inputs))
    }
}

/// Two-beat gait file. Without a `schedule` the gait's own inputs are
/// repeated for `cycles` cycles (default 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitFile {
    pub pairing: Pairing,
    pub first: SubgaitFile,
    pub second: SubgaitFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<CycleInputs>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,
}

impl GaitFile {
    pub fn from_spec(gait: &TwoBeatGaitSpec, model: &ModelSpec) -> Self {
        Self {
            pairing: gait.pairing,
            first: SubgaitFile::from_spec(&gait.first, model),
            second: SubgaitFile::from_spec(&gait.second, model),
            schedule: None,
            cycles: None,
        }
    }

    pub fn to_spec(&self, model: &ModelSpec) -> Result<TwoBeatGaitSpec> {
        TwoBeatGaitSpec::new(self.first.to_spec(model)?, self.second.to_spec(model)?, self.pairing)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn input_schedule(&self) -> Vec<CycleInputs> {
        match &self.schedule {
            Some(s) => s.clone(),
            None => {
                let inputs = CycleInputs::new(self.first.inputs, self.second.inputs);
                vec![inputs; self.cycles.unwrap_or(1)]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub tau: f64,
    pub pose: [f64; 3],
    pub alpha: Vec<f64>,
    pub beta: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// Group product of the two subgait displacements.
    pub z: [f64; 3],
    /// Component-wise sum of the two subgait displacements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_sum: Option<[f64; 3]>,
    pub turning_radius: TurningRadius,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub model: String,
    pub gait: serde_json::Value,
    pub samples: Vec<SampleRecord>,
    pub net: [f64; 3],
    pub turning_radius: TurningRadius,
    pub cycles: Vec<CycleRecord>,
    pub out_of_bounds: bool,
    pub inputs_out_of_range: bool,
}

impl TrajectoryRecord {
    pub fn new(model: &ModelSpec, gait: serde_json::Value, traj: &Trajectory) -> Self {
        let net = traj.net_displacement;
        Self {
            model: model.name.clone(),
            gait,
            samples: traj
                .samples
                .iter()
                .map(|s| SampleRecord {
                    tau: s.tau,
                    pose: s.pose.to_array(),
                    alpha: s.shape.0.clone(),
                    beta: s.contact.iter().map(|&b| u8::from(b)).collect(),
                })
                .collect(),
            net: net.to_array(),
            turning_radius: turning_radius(&net),
            cycles: traj
                .per_cycle
                .iter()
                .enumerate()
                .map(|(k, z)| CycleRecord {
                    z: z.to_array(),
                    z_sum: traj.per_cycle_sum.get(k).map(|s| s.to_array()),
                    turning_radius: turning_radius(z),
                })
                .collect(),
            out_of_bounds: traj.out_of_bounds,
            inputs_out_of_range: traj.inputs_out_of_range,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }
}

fn num(out: &mut String, v: f64) {
    if v.is_finite() {
        write!(out, "{v:?}").unwrap();
    }
}

fn row(out: &mut String, fields: &[Option<f64>], tail: impl std::fmt::Display) {
    for f in fields {
        if let Some(v) = f {
            num(out, *v);
        }
        out.push(',');
    }
    writeln!(out, "{tail}").unwrap();
}

pub const FIELD_DUMP_HEADER: &str = "alpha1,alpha2,F,dF1,dF2,b1,b2,singular_flag";

/// `F`, `∇F` and the nonslip basis per grid node; the basis is left empty
/// where the node is singular.
pub fn field_dump_csv(samples: &[FieldSample]) -> String {
    let mut out = String::with_capacity(samples.len() * 96);
    out.push_str(FIELD_DUMP_HEADER);
    out.push('\n');
    for s in samples {
        let (b1, b2) = s.basis.map_or((None, None), |b| (Some(b[0]), Some(b[1])));
        row(
            &mut out,
            &[Some(s.point[0]), Some(s.point[1]), Some(s.f_value), Some(s.grad[0]), Some(s.grad[1]), b1, b2],
            u8::from(s.basis.is_none()),
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityRecord {
    pub point: [f64; 2],
    pub f_value: f64,
    pub kind: SingularityKind,
}

impl From<&Singularity> for SingularityRecord {
    fn from(s: &Singularity) -> Self {
        Self {
            point: [s.point[0], s.point[1]],
            f_value: s.f_value,
            kind: s.kind,
        }
    }
}

pub const PANEL_HEADER: &str = "alpha_i,alpha_j,dzx,dzy,dzth,flag";

/// Panel values per node; singular nodes have `flag = 1` and empty values.
pub fn panel_csv(grid: &StratifiedPanelGrid) -> String {
    let mut out = String::with_capacity(grid.values.len() * 80);
    out.push_str(PANEL_HEADER);
    out.push('\n');
    for i in 0..grid.n {
        for j in 0..grid.n {
            let [a, b] = grid.point(i, j);
            let v = grid.get(i, j);
            let c = |k: usize| v.map(|v| v[k]);
            row(&mut out, &[Some(a), Some(b), c(0), c(1), c(2)], u8::from(v.is_none()));
        }
    }
    out
}

pub const TWO_BEAT_PANEL_HEADER: &str = "tau,first_i,first_j,second_i,second_j,dzx,dzy,dzth";

/// Two-beat panel per phase: both evaluation points and the summed panel.
pub fn two_beat_panel_csv(samples: &[TwoBeatPanelSample]) -> String {
    let mut out = String::with_capacity(samples.len() * 128);
    out.push_str(TWO_BEAT_PANEL_HEADER);
    out.push('\n');
    for s in samples {
        let fields = [
            s.tau,
            s.first_point[0],
            s.first_point[1],
            s.second_point[0],
            s.second_point[1],
            s.total[0],
            s.total[1],
            s.total[2],
        ];
        for (k, v) in fields.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            num(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

pub const DISPLACEMENT_HEADER: &str = "u13,u24,zx,zy,zth,flag";

/// Displacement field per cell; `flag` is 1 when a flow left the swing
/// limits and 2 when it hit a singularity (values empty).
pub fn displacement_field_csv(field: &DisplacementField) -> String {
    let mut out = String::with_capacity(field.cells.len() * 80);
    out.push_str(DISPLACEMENT_HEADER);
    out.push('\n');
    for c in &field.cells {
        let z = c.z.map(|z| z.to_array());
        let flag = match (c.z, c.out_of_bounds) {
            (None, _) => 2,
            (Some(_), true) => 1,
            (Some(_), false) => 0,
        };
        let v = |k: usize| z.map(|z| z[k]);
        row(&mut out, &[Some(c.u13), Some(c.u24), v(0), v(1), v(2)], flag);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{compose_two_beat, stratified_panel, two_beat_panel, ReconstructOptions};
    use crate::se2::SE2;
    use crate::shapefield::ShapeField;

    #[test]
    fn gait_file_round_trip() {
        let model = ModelSpec::quadruped();
        let gait = TwoBeatGaitSpec::fiducial_trot(&model).unwrap();
        let file = GaitFile::from_spec(&gait, &model);
        assert_eq!(file.first.pair, [1, 3]);
        assert_eq!(file.second.pair, [2, 4]);
        assert!(file.first.bounds.is_none());
        let text = serde_json::to_string(&file).unwrap();
        let back = GaitFile::from_json(&text).unwrap();
        assert_eq!(back.to_spec(&model).unwrap(), gait);
    }

    #[test]
    fn gait_file_schedule_defaults() {
        let text = r#"{"pairing":"trot",
            "first":{"pair":[1,3],"t0":-0.8,"t_pi":-0.8,"inputs":[0.5,0.1]},
            "second":{"pair":[2,4],"t0":-0.8,"t_pi":-0.8},
            "cycles":3}"#;
        let file = GaitFile::from_json(text).unwrap();
        let s = file.input_schedule();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].first, ControlInputs::new(0.5, 0.1));
        assert_eq!(s[0].second, ControlInputs::default());
    }

    #[test]
    fn gait_file_rejects_zero_leg_and_unknown_fields() {
        let model = ModelSpec::quadruped();
        let text = r#"{"pairing":"trot","first":{"pair":[0,2],"t0":0,"t_pi":0},"second":{"pair":[2,4],"t0":0,"t_pi":0}}"#;
        assert!(GaitFile::from_json(text).unwrap().to_spec(&model).is_err());
        let text = r#"{"pairing":"trot","extra":1,"first":{"pair":[1,3],"t0":0,"t_pi":0},"second":{"pair":[2,4],"t0":0,"t_pi":0}}"#;
        assert!(GaitFile::from_json(text).is_err());
    }

    #[test]
    fn trajectory_record_shape() {
        let model = ModelSpec::quadruped();
        let gait = TwoBeatGaitSpec::fiducial_trot(&model).unwrap();
        let opts = ReconstructOptions::default().with_samples(16);
        let traj = compose_two_beat(&model, &gait, SE2::IDENTITY, &opts).unwrap();
        let rec = TrajectoryRecord::new(&model, serde_json::to_value(GaitFile::from_spec(&gait, &model)).unwrap(), &traj);
        let v: serde_json::Value = serde_json::from_str(&rec.to_json()).unwrap();
        assert_eq!(v["model"], "quad");
        assert_eq!(v["samples"].as_array().unwrap().len(), 33);
        assert_eq!(v["samples"][0]["beta"], serde_json::json!([1, 0, 1, 0]));
        assert!(v["turning_radius"].is_null());
        assert_eq!(v["cycles"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn field_dump_marks_singular_rows() {
        let model = ModelSpec::fourbar();
        let sub = ReducedShapeSubspace::new(&model, 0, 1)
            .unwrap()
            .with_bounds(&model, [[-1.0, 1.0], [-1.0, 1.0]])
            .unwrap();
        let csv = field_dump_csv(&ShapeField::new(&model, sub).sample_grid(3));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[0], FIELD_DUMP_HEADER);
        assert!(lines[5].starts_with("0.0,0.0,16.0,"));
        assert!(lines[5].ends_with(",,,1"));
        assert!(lines[1].ends_with(",0"));
    }

    #[test]
    fn panel_csv_rows() {
        let model = ModelSpec::fourbar();
        let sub = ReducedShapeSubspace::new(&model, 0, 1)
            .unwrap()
            .with_bounds(&model, [[-1.0, 1.0], [-1.0, 1.0]])
            .unwrap();
        let grid = stratified_panel(&model, &sub, 33).unwrap();
        let csv = panel_csv(&grid);
        assert_eq!(csv.lines().count(), 33 * 33 + 1);
        assert_eq!(csv.lines().filter(|l| l.ends_with(",,,,1")).count(), 1);
        assert!(csv.lines().all(|l| l.split(',').count() == 6));
    }

    #[test]
    fn two_beat_panel_csv_rows() {
        let model = ModelSpec::quadruped();
        let gait = TwoBeatGaitSpec::fiducial_trot(&model).unwrap();
        let samples = two_beat_panel(&model, &gait, 9, 1e-3).unwrap();
        let csv = two_beat_panel_csv(&samples);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[0], TWO_BEAT_PANEL_HEADER);
        assert!(lines[1].starts_with("0.0,"));
        assert!(lines.iter().all(|l| l.split(',').count() == 8));
    }
}
