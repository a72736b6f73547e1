use super::{ControllerKind, ScenarioConfig, ScenarioError};
use crate::cbf::{
    assemble, cbf_qp_control, BarrierSpec, ClassKChain, ControlDecision, ControlStatus, FsCbfController,
};
use crate::dynamics::{
    circle_barrier, grid_ray_barriers, reference_control, social_force_step, step_euler, DynamicsModel,
    HumanAgent, OccupancyGrid,
};
use crate::volume::{InputBox, PolytopeFixture};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A validated scenario ready to simulate.
pub struct Scenario {
    cfg: ScenarioConfig,
    model: Box<dyn DynamicsModel>,
    bounds: InputBox,
    grid: Option<OccupancyGrid>,
    obstacle_chain: ClassKChain,
    human_chain: ClassKChain,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub step: usize,
    pub x: DVector<f64>,
    pub humans: Vec<HumanAgent>,
    controller: Option<FsCbfController>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub state: Vec<f64>,
    pub u_ref: Vec<f64>,
    pub u: Vec<f64>,
    pub delta: Option<f64>,
    pub volume: Option<f64>,
    /// `h` of each obstacle and human barrier, in config order.
    pub h: Vec<f64>,
    /// Smallest `h` over the occupancy-grid ray barriers.
    pub h_grid_min: Option<f64>,
    pub status: ControlStatus,
    pub boundary_margin: f64,
    pub u_ref_feasible: bool,
    /// Margin the plain CBF-QP would have had at the same state; recorded
    /// only under the FS-CBF-QP.
    pub cbf_qp_margin: Option<f64>,
    pub fs_row_dropped: bool,
}

impl TraceRow {
    /// Smallest barrier value at this step.
    pub fn min_h(&self) -> Option<f64> {
        self.h
            .iter()
            .copied()
            .chain(self.h_grid_min)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub polytope: PolytopeFixture,
    pub u_ref: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub controller: ControllerKind,
    pub reached_goal: bool,
    pub first_infeasible_time: Option<f64>,
    /// `min(horizon, first_infeasible_time)`.
    pub run_time: f64,
    pub end_time: f64,
    pub steps: usize,
    /// Smallest barrier value over the steps where the QP was solved.
    pub min_h: Option<f64>,
    pub fs_rows_dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub trace: Vec<TraceRow>,
    pub snapshots: Vec<Snapshot>,
    pub summary: RunSummary,
}

fn default_chain(degree: usize) -> ClassKChain {
    let gains = if degree == 1 { vec![1.0] } else { vec![2.0, 6.0] };
    ClassKChain::new(gains).expect("default gains are positive")
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ScenarioError> {
        Self::with_base_dir(cfg, None)
    }

    /// Relative grid paths resolve against `base`.
    pub fn with_base_dir(cfg: ScenarioConfig, base: Option<&Path>) -> Result<Self, ScenarioError> {
        cfg.validate()?;
        let model = cfg.model.build();
        let (lower, upper) = match &cfg.bounds {
            Some(b) => (b.lower.clone(), b.upper.clone()),
            None => cfg.model.default_bounds(),
        };
        let bounds = InputBox::new(lower, upper).map_err(|e| ScenarioError::Config(e.to_string()))?;
        if bounds.dim() != model.control_dim() {
            return Err(ScenarioError::Config(format!(
                "bounds have {} entries, the model has {} controls",
                bounds.dim(),
                model.control_dim()
            )));
        }
        let degree = cfg.model.distance_degree();
        let check = |c: &Option<ClassKChain>, what: &str| -> Result<ClassKChain, ScenarioError> {
            let chain = c.clone().unwrap_or_else(|| default_chain(degree));
            if chain.len() != degree {
                return Err(ScenarioError::Config(format!(
                    "{what} chain has {} gains, the model needs {degree}",
                    chain.len()
                )));
            }
            Ok(chain)
        };
        let obstacle_chain = check(&cfg.chains.obstacle, "obstacle")?;
        let human_chain = check(&cfg.chains.human, "human")?;
        let grid = match &cfg.grid {
            Some(g) => {
                if g.rays.chain.len() != degree {
                    return Err(ScenarioError::Config(format!(
                        "grid ray chain has {} gains, the model needs {degree}",
                        g.rays.chain.len()
                    )));
                }
                let path = match base {
                    Some(b) if g.path.is_relative() => b.join(&g.path),
                    _ => g.path.clone(),
                };
                Some(OccupancyGrid::load(&path, g.resolution, g.origin, g.threshold)?)
            }
            None => None,
        };
        Ok(Self {
            cfg,
            model,
            bounds,
            grid,
            obstacle_chain,
            human_chain,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn model(&self) -> &dyn DynamicsModel {
        self.model.as_ref()
    }

    pub fn bounds(&self) -> &InputBox {
        &self.bounds
    }

    pub fn initial_state(&self) -> Result<SimState, ScenarioError> {
        let controller = match self.cfg.controller {
            ControllerKind::CbfQp => None,
            ControllerKind::FsCbfQp => Some(FsCbfController::new(self.cfg.fs.clone())?),
        };
        Ok(SimState {
            step: 0,
            x: DVector::from_column_slice(&self.cfg.initial_state),
            humans: self.cfg.humans.clone(),
            controller,
        })
    }

    fn time(&self, step: usize) -> f64 {
        step as f64 * self.cfg.dt
    }

    /// Obstacles, then humans (moving at their current velocity from
    /// time `t`), then grid rays. Returns the specs and how many of them
    /// are not grid rays.
    pub fn barriers(
        &self,
        t: f64,
        x: &DVector<f64>,
        humans: &[HumanAgent],
    ) -> Result<(Vec<BarrierSpec>, usize), ScenarioError> {
        let model = self.model.as_ref();
        let mut specs: Vec<BarrierSpec> = self
            .cfg
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| circle_barrier(format!("obs{i}"), model, &o.center, o.radius, self.obstacle_chain.clone(), None, t))
            .collect();
        for (i, h) in humans.iter().enumerate() {
            specs.push(circle_barrier(
                format!("human{i}"),
                model,
                &h.position,
                h.sfm.radius + self.cfg.crowd.robot_radius,
                self.human_chain.clone(),
                Some(&h.velocity),
                t,
            ));
        }
        let fixed = specs.len();
        if let (Some(grid), Some(gcfg)) = (&self.grid, &self.cfg.grid) {
            let idx = model.position_indices();
            specs.extend(grid_ray_barriers(grid, model, [x[idx[0]], x[idx[1]]], &gcfg.rays)?);
        }
        Ok((specs, fixed))
    }

    pub fn reached_goal(&self, x: &DVector<f64>) -> bool {
        let idx = self.model.position_indices();
        (x[idx[0]] - self.cfg.goal[0]).hypot(x[idx[1]] - self.cfg.goal[1]) < self.cfg.goal_tolerance
    }

    /// Control the robot for one step and advance robot and crowd. On an
    /// infeasible step the state is left unchanged.
    pub fn run_step(&self, state: &mut SimState) -> Result<(TraceRow, Option<Snapshot>), ScenarioError> {
        let t = self.time(state.step);
        let model = self.model.as_ref();
        let (specs, fixed) = self.barriers(t, &state.x, &state.humans)?;
        let u_ref = reference_control(&self.cfg.model, &state.x, self.cfg.goal, &self.cfg.gains, &self.bounds);
        let asm = assemble(&specs, &self.bounds, model, t, &state.x)?;
        let p = &asm.polytope;

        let (decision, cbf_qp_margin): (ControlDecision, Option<f64>) = match state.controller.as_mut() {
            None => (cbf_qp_control(&u_ref, p)?, None),
            Some(ctrl) => {
                let shadow = cbf_qp_control(&u_ref, p)?;
                let d = ctrl.control_on(&u_ref, p, &specs, &self.bounds, model, t, &state.x)?;
                let margin = (shadow.status == ControlStatus::Ok).then_some(shadow.boundary_margin);
                (d, margin)
            }
        };

        let h_grid_min = asm.psi[fixed..].iter().map(|p| p[0]).reduce(f64::min);
        let row = TraceRow {
            step: state.step,
            t,
            state: state.x.iter().copied().collect(),
            u_ref: u_ref.iter().copied().collect(),
            u: decision.u.iter().copied().collect(),
            delta: decision.delta,
            volume: decision.volume.as_ref().map(|v| v.value),
            h: asm.psi[..fixed].iter().map(|p| p[0]).collect(),
            h_grid_min,
            status: decision.status,
            boundary_margin: decision.boundary_margin,
            u_ref_feasible: p.contains(&u_ref, 0.0),
            cbf_qp_margin,
            fs_row_dropped: decision.fs_row_dropped,
        };
        let stride = self.cfg.snapshot_stride;
        let snapshot = (stride > 0 && state.step % stride == 0).then(|| Snapshot {
            step: state.step,
            t,
            polytope: PolytopeFixture::from_polytope(None, p),
            u_ref: row.u_ref.clone(),
            u: row.u.clone(),
        });

        if decision.status == ControlStatus::Ok {
            let dt = self.cfg.dt;
            let idx = model.position_indices();
            let robot = [state.x[idx[0]], state.x[idx[1]]];
            let crowd = self.cfg.crowd.robot_repels.then_some((&robot, self.cfg.crowd.robot_radius));
            state.humans = social_force_step(&state.humans, crowd, dt);
            state.x = step_euler(model, &state.x, &decision.u, dt);
            state.step += 1;
        }
        Ok((row, snapshot))
    }

    /// Simulate until the goal is reached, the QP becomes infeasible or
    /// the horizon runs out.
    pub fn run(&self) -> Result<SimOutcome, ScenarioError> {
        let mut state = self.initial_state()?;
        let steps = (self.cfg.horizon / self.cfg.dt).round() as usize;
        let mut trace = Vec::with_capacity(steps);
        let mut snapshots = Vec::new();
        let mut first_infeasible = None;
        let mut reached = false;
        while state.step < steps {
            if self.reached_goal(&state.x) {
                reached = true;
                break;
            }
            let (row, snap) = self.run_step(&mut state)?;
            snapshots.extend(snap);
            let infeasible = row.status == ControlStatus::Infeasible;
            if infeasible {
                first_infeasible = Some(row.t);
            }
            trace.push(row);
            if infeasible {
                break;
            }
        }
        if !reached && first_infeasible.is_none() {
            reached = self.reached_goal(&state.x);
        }
        let min_h = trace
            .iter()
            .filter(|r| r.status == ControlStatus::Ok)
            .filter_map(TraceRow::min_h)
            .reduce(f64::min);
        let summary = RunSummary {
            name: self.cfg.name.clone(),
            controller: self.cfg.controller,
            reached_goal: reached,
            first_infeasible_time: first_infeasible,
            run_time: first_infeasible.unwrap_or(self.cfg.horizon).min(self.cfg.horizon),
            end_time: self.time(state.step),
            steps: trace.len(),
            min_h,
            fs_rows_dropped: trace.iter().filter(|r| r.fs_row_dropped).count(),
        };
        Ok(SimOutcome {
            trace,
            snapshots,
            summary,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ModelKind;
    use crate::scenario::{parse_config, CircleObstacle};

    fn base() -> ScenarioConfig {
        parse_config(
            r#"
            model = { kind = "unicycle" }
            initial_state = [0.0, 0.0, 0.0, 0.0]
            goal = [3.0, 0.0]
            horizon = 10.0
            "#,
            false,
        )
        .unwrap()
    }

    #[test]
    fn free_space_reaches_goal() {
        for controller in [ControllerKind::CbfQp, ControllerKind::FsCbfQp] {
            let cfg = ScenarioConfig { controller, ..base() };
            let out = Scenario::new(cfg).unwrap().run().unwrap();
            assert!(out.summary.reached_goal, "{controller}");
            assert!(out.trace.iter().all(|r| r.status == ControlStatus::Ok));
            assert_eq!(out.summary.min_h, None);
        }
    }

    #[test]
    fn single_integrator_moves_by_dt_u() {
        let cfg = ScenarioConfig {
            model: ModelKind::SingleIntegrator,
            initial_state: vec![0.0, 0.0],
            controller: ControllerKind::CbfQp,
            ..base()
        };
        let sc = Scenario::new(cfg).unwrap();
        let mut s = sc.initial_state().unwrap();
        let (row, _) = sc.run_step(&mut s).unwrap();
        assert_eq!(s.x[0], row.state[0] + 0.01 * row.u[0]);
        assert_eq!(s.x[1], row.state[1] + 0.01 * row.u[1]);
    }

    #[test]
    fn config_errors() {
        let cfg = ScenarioConfig {
            initial_state: vec![0.0; 3],
            ..base()
        };
        assert!(matches!(Scenario::new(cfg), Err(ScenarioError::Config(_))));
        let cfg = ScenarioConfig {
            obstacles: vec![CircleObstacle { center: [1.0, 1.0], radius: 0.0 }],
            ..base()
        };
        assert!(Scenario::new(cfg).is_err());
        let cfg = ScenarioConfig {
            chains: crate::scenario::ChainConfig {
                obstacle: Some(ClassKChain::new(vec![1.0]).unwrap()),
                human: None,
            },
            ..base()
        };
        assert!(Scenario::new(cfg).is_err());
        assert!(parse_config::<ScenarioConfig>("model = { kind = \"unicycle\" }\nbogus = 1", false).is_err());
    }

    #[test]
    fn obstacle_on_the_way_stays_safe() {
        let cfg = ScenarioConfig {
            obstacles: vec![CircleObstacle { center: [1.5, 0.05], radius: 0.4 }],
            controller: ControllerKind::CbfQp,
            ..base()
        };
        let out = Scenario::new(cfg).unwrap().run().unwrap();
        for r in out.trace.iter().filter(|r| r.status == ControlStatus::Ok) {
            assert!(r.h[0] >= -1e-3);
        }
    }
}
