//! On-disk scenario schema.
//!
//! A run is described by a small nested JSON document with sections
//! `geometry`, `physics`, `grid`, `time`, `initial`, and `solver`. Every
//! key is optional; omitted keys take the documented defaults, unknown
//! keys are rejected by name. [`parse_scenario`] resolves the document
//! into the flat [`Scenario`] used by the solver and re-checks all of its
//! invariants.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::solver::{InitialData, Scenario};
use crate::Error;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    /// container (outer circle) radius
    #[serde(rename = "R_O")]
    pub r_o: f64,
    /// rigid disk radius
    #[serde(rename = "R_S")]
    pub r_s: f64,
    /// admissible-gap parameter: the disk must stay farther than `r` from
    /// the wall
    pub r: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { r_o: 1.0, r_s: 0.25, r: 0.3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub mu: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub d_star: [f64; 3],
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self { mu: 1.0, lambda: 1.0, gamma: 1.0, d_star: [0.0, 0.0, 1.0] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    #[serde(rename = "N_r")]
    pub n_r: usize,
    #[serde(rename = "N_theta")]
    pub n_theta: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n_r: 64, n_theta: 128 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub dt: f64,
    #[serde(rename = "T_end")]
    pub t_end: f64,
    /// snapshot cadence in steps (0 = final state only)
    pub output_every: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { dt: 2e-4, t_end: 2.0, output_every: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    /// one of `equilibrium`, `small_swirl`, `small_data`
    pub preset: String,
    /// swirl amplitude (`small_swirl`) or smallness parameter (`small_data`)
    pub amplitude: Option<f64>,
    /// director tilt amplitude (`small_swirl` only)
    pub tilt: Option<f64>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { preset: "equilibrium".into(), amplitude: None, tilt: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSection {
    /// target residual of the pressure projection
    pub projection: f64,
    /// iteration cap for the projection solver
    pub max_iterations: usize,
    /// bound accepted by the initial-data validator
    pub validation: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self { projection: 1e-10, max_iterations: 400, validation: 1e-8 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// minimum fluid-rigid coupling sub-iterations per step
    pub subiterations: usize,
    pub tolerances: ToleranceSection,
    pub renormalize_director: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            subiterations: 2,
            tolerances: ToleranceSection::default(),
            renormalize_director: false,
        }
    }
}

/// The nested scenario document as written on disk.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub geometry: GeometrySection,
    pub physics: PhysicsSection,
    pub grid: GridSection,
    pub time: TimeSection,
    pub initial: InitialSection,
    pub solver: SolverSection,
}

impl ScenarioFile {
    /// Resolve the document into the flat run description, filling
    /// defaults and validating every invariant.
    pub fn resolve(&self) -> Result<Scenario, Error> {
        let initial = match self.initial.preset.as_str() {
            "equilibrium" => InitialData::Equilibrium,
            "small_swirl" => InitialData::SmallSwirl {
                amplitude: self.initial.amplitude.unwrap_or(1e-2),
                tilt: self.initial.tilt.unwrap_or(1e-2),
            },
            "small_data" => InitialData::SmallData {
                delta: self.initial.amplitude.unwrap_or(1e-2),
            },
            other => {
                return Err(Error::Scenario(format!(
                    "initial.preset: unknown preset `{other}` (expected \
                     equilibrium, small_swirl, or small_data)"
                )))
            }
        };
        if self.initial.tilt.is_some() && self.initial.preset != "small_swirl" {
            return Err(Error::Scenario(
                "initial.tilt: only meaningful for the small_swirl preset".into(),
            ));
        }
        let sc = Scenario {
            name: self
                .name
                .clone()
                .unwrap_or_else(|| self.initial.preset.clone()),
            r_outer: self.geometry.r_o,
            body_radius: self.geometry.r_s,
            // transition band of the boundary cutoff, proportional to the
            // container size
            cutoff_width: 0.4 * self.geometry.r_o,
            gap_r: self.geometry.r,
            mu: self.physics.mu,
            lambda: self.physics.lambda,
            gamma: self.physics.gamma,
            n_r: self.grid.n_r,
            n_theta: self.grid.n_theta,
            dt: self.time.dt,
            t_end: self.time.t_end,
            initial,
            d_star: self.physics.d_star,
            coupling_iters: self.solver.subiterations,
            cg_tol: self.solver.tolerances.projection,
            cg_max_iter: self.solver.tolerances.max_iterations,
            validation_tol: self.solver.tolerances.validation,
            renormalize_director: self.solver.renormalize_director,
            output_every: self.time.output_every,
            cfl_safety: 0.5,
        };
        sc.validate()?;
        Ok(sc)
    }

    /// Rebuild the nested document from a resolved run description, for
    /// echoing `scenario.resolved.json`.
    pub fn from_scenario(sc: &Scenario) -> Self {
        let initial = match sc.initial.clone() {
            InitialData::Equilibrium => InitialSection {
                preset: "equilibrium".into(),
                amplitude: None,
                tilt: None,
            },
            InitialData::SmallSwirl { amplitude, tilt } => InitialSection {
                preset: "small_swirl".into(),
                amplitude: Some(amplitude),
                tilt: Some(tilt),
            },
            InitialData::SmallData { delta } => InitialSection {
                preset: "small_data".into(),
                amplitude: Some(delta),
                tilt: None,
            },
        };
        Self {
            name: Some(sc.name.clone()),
            geometry: GeometrySection {
                r_o: sc.r_outer,
                r_s: sc.body_radius,
                r: sc.gap_r,
            },
            physics: PhysicsSection {
                mu: sc.mu,
                lambda: sc.lambda,
                gamma: sc.gamma,
                d_star: sc.d_star,
            },
            grid: GridSection { n_r: sc.n_r, n_theta: sc.n_theta },
            time: TimeSection {
                dt: sc.dt,
                t_end: sc.t_end,
                output_every: sc.output_every,
            },
            initial,
            solver: SolverSection {
                subiterations: sc.coupling_iters,
                tolerances: ToleranceSection {
                    projection: sc.cg_tol,
                    max_iterations: sc.cg_max_iter,
                    validation: sc.validation_tol,
                },
                renormalize_director: sc.renormalize_director,
            },
        }
    }
}

/// Parse a scenario document from disk and resolve it.
pub fn parse_scenario(path: &Path) -> Result<Scenario, Error> {
    let text = std::fs::read_to_string(path)?;
    let file: ScenarioFile = serde_json::from_str(&text)
        .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
    file.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<Scenario, Error> {
        let file: ScenarioFile = serde_json::from_str(text)
            .map_err(|e| Error::Scenario(e.to_string()))?;
        file.resolve()
    }

    #[test]
    fn empty_document_yields_defaults() {
        let sc = resolve("{}").unwrap();
        let reference = Scenario::equilibrium();
        assert_eq!(sc.r_outer, reference.r_outer);
        assert_eq!(sc.body_radius, reference.body_radius);
        assert_eq!(sc.gap_r, reference.gap_r);
        assert_eq!(sc.n_r, reference.n_r);
        assert_eq!(sc.n_theta, reference.n_theta);
        assert_eq!(sc.dt, reference.dt);
        assert_eq!(sc.t_end, reference.t_end);
        assert_eq!(sc.d_star, reference.d_star);
        assert!(matches!(sc.initial, InitialData::Equilibrium));
    }

    #[test]
    fn inner_radius_at_least_outer_names_geometry() {
        let err = resolve(r#"{"geometry": {"R_S": 1.5}}"#).unwrap_err();
        assert!(err.to_string().contains("geometry"), "{err}");
    }

    #[test]
    fn non_unit_equilibrium_director_cites_hypothesis() {
        let err =
            resolve(r#"{"physics": {"d_star": [0.0, 0.0, 0.5]}}"#).unwrap_err();
        assert!(err.to_string().contains("|d*| = 1"), "{err}");
    }

    #[test]
    fn unknown_key_rejected_by_name() {
        let err = resolve(r#"{"geometri": {}}"#).unwrap_err();
        assert!(err.to_string().contains("geometri"), "{err}");
        let err = resolve(r#"{"time": {"dt": 1e-3, "t_end": 1.0}}"#).unwrap_err();
        assert!(err.to_string().contains("t_end"), "{err}");
    }

    #[test]
    fn unknown_preset_rejected() {
        let err = resolve(r#"{"initial": {"preset": "vortex"}}"#).unwrap_err();
        assert!(err.to_string().contains("vortex"), "{err}");
    }

    #[test]
    fn presets_resolve_with_amplitudes() {
        let sc = resolve(
            r#"{"initial": {"preset": "small_swirl", "amplitude": 0.02, "tilt": 0.005}}"#,
        )
        .unwrap();
        assert!(
            matches!(sc.initial, InitialData::SmallSwirl { amplitude, tilt }
                if amplitude == 0.02 && tilt == 0.005)
        );
        let sc =
            resolve(r#"{"initial": {"preset": "small_data", "amplitude": 0.004}}"#)
                .unwrap();
        assert!(matches!(sc.initial, InitialData::SmallData { delta } if delta == 0.004));
    }

    #[test]
    fn round_trip_through_resolved_document() {
        let sc = Scenario::small_swirl();
        let file = ScenarioFile::from_scenario(&sc);
        let text = serde_json::to_string(&file).unwrap();
        let sc2 = resolve(&text).unwrap();
        assert_eq!(sc.name, sc2.name);
        assert_eq!(sc.dt, sc2.dt);
        assert_eq!(sc.coupling_iters, sc2.coupling_iters);
        assert!(matches!(
            (sc.initial.clone(), sc2.initial.clone()),
            (
                InitialData::SmallSwirl { amplitude: a1, tilt: t1 },
                InitialData::SmallSwirl { amplitude: a2, tilt: t2 }
            ) if a1 == a2 && t1 == t2
        ));
    }
}
