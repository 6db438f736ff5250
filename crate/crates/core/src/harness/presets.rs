//! Named scenario presets.

use crate::dynamics::FlowKind;
use crate::error::{Error, Result};
use crate::solver::{IntegratorSpec, Method};

use super::config::{
    DaiSpec, DiagnosticsSpec, GameSpec, GraphSpec, InitialSpec, OracleSpec, OutputSpec, PerAgent,
    ScenarioConfig, SetSpec,
};

pub const PRESET_NAMES: [&str; 9] = [
    "S1_full_info",
    "S2_static_consensus",
    "S3_dai_path",
    "S3_static_contrast",
    "S4_lyapunov",
    "S5_projected_dai",
    "S6_projected_equilibrium",
    "decoupled_edge_dai",
    "dai_local_edge",
];

/// Four scalar players: `A = 2 I + 10 S` with `S` the skew cycle
/// coupling, so `mu = 2` while `ell` is about 20.
fn skew_cycle_game() -> GameSpec {
    let n = 4;
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 2.0;
    }
    for i in 0..n {
        a[i][(i + 1) % n] += 10.0;
        a[(i + 1) % n][i] -= 10.0;
    }
    GameSpec::Quadratic {
        dims: vec![1; n],
        a,
        b: vec![-1.0, 2.0, -0.5, 1.0],
    }
}

/// Two scalar players whose unconstrained equilibrium leaves `[-1, 1]^2`.
fn boxed_pair_game() -> GameSpec {
    GameSpec::Quadratic {
        dims: vec![1, 1],
        a: vec![vec![2.0, 3.0], vec![-3.0, 2.0]],
        b: vec![-6.0, 2.0],
    }
}

fn unit_boxes() -> Vec<SetSpec> {
    vec![
        SetSpec::Box { lower: vec![-1.0], upper: vec![1.0] },
        SetSpec::Box { lower: vec![-1.0], upper: vec![1.0] },
    ]
}

fn base(name: &str, flow: FlowKind, game: GameSpec, integrator: IntegratorSpec) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        seed: 7,
        flow,
        game,
        constraints: None,
        graph: None,
        dai: None,
        integrator,
        initial: InitialSpec::RandomBox { lower: -5.0, upper: 5.0 },
        oracle: OracleSpec::default(),
        diagnostics: DiagnosticsSpec::default(),
        output: OutputSpec::default(),
    }
}

fn rk4(step: f64, t_end: f64, log_every: usize) -> IntegratorSpec {
    IntegratorSpec {
        method: Method::Rk4,
        step,
        t_end,
        log_every,
    }
}

fn unit_gains() -> Option<DaiSpec> {
    Some(DaiSpec {
        gamma: PerAgent::Uniform(1.0),
        k_init: PerAgent::Uniform(0.0),
    })
}

fn dai_path(name: &str, flow: FlowKind) -> ScenarioConfig {
    let mut c = base(name, flow, skew_cycle_game(), rk4(0.005, 400.0, 40));
    c.graph = Some(GraphSpec::Path { nodes: 4, weight: 1.0 });
    if flow.is_adaptive() {
        c.dai = unit_gains();
    }
    c
}

fn projected_pair(name: &str, x: Vec<f64>, t_end: f64) -> ScenarioConfig {
    let integrator = IntegratorSpec {
        method: Method::ProjectedEuler,
        step: 1e-3,
        t_end,
        log_every: 100,
    };
    let mut c = base(name, FlowKind::ProjectedDai, boxed_pair_game(), integrator);
    c.constraints = Some(unit_boxes());
    c.graph = Some(GraphSpec::Path { nodes: 2, weight: 0.5 });
    c.dai = unit_gains();
    c.initial = InitialSpec::Explicit { x };
    c.diagnostics.converge_threshold = 1e-3;
    c
}

fn edge(name: &str, flow: FlowKind) -> ScenarioConfig {
    let game = GameSpec::Decoupled {
        dims: vec![1, 1],
        target: vec![1.0, -1.0],
        weight: 1.0,
    };
    let mut c = base(name, flow, game, rk4(0.01, 20.0, 10));
    c.graph = Some(GraphSpec::Path { nodes: 2, weight: 1.0 });
    c.dai = unit_gains();
    c
}

/// Look up a preset by name.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let c = match name {
        "S1_full_info" => {
            let game = GameSpec::Decoupled {
                dims: vec![1, 1],
                target: vec![1.0, -1.0],
                weight: 1.0,
            };
            let mut c = base(name, FlowKind::FullInfo, game, rk4(0.01, 10.0, 10));
            c.diagnostics.converge_threshold = 1e-6;
            c
        }
        "S2_static_consensus" => {
            // lambda2 = 4 * 112 = 448, twice the coupling threshold of about 222.1
            let mut c = base(name, FlowKind::StaticConsensus, skew_cycle_game(), rk4(0.002, 50.0, 50));
            c.graph = Some(GraphSpec::Complete { nodes: 4, weight: 112.0 });
            c.diagnostics.converge_threshold = 1e-5;
            c
        }
        "S3_dai_path" => dai_path(name, FlowKind::Dai),
        "S3_static_contrast" => dai_path(name, FlowKind::StaticConsensus),
        "S4_lyapunov" => {
            let mut c = dai_path(name, FlowKind::Dai);
            c.integrator.log_every = 20;
            c
        }
        "S5_projected_dai" => projected_pair(name, vec![0.2, -0.3, -0.5, 0.4], 100.0),
        "S6_projected_equilibrium" => projected_pair(name, vec![1.0, 0.5, 1.0, 0.5], 1.0),
        "decoupled_edge_dai" => edge(name, FlowKind::Dai),
        "dai_local_edge" => edge(name, FlowKind::DaiLocal),
        _ => {
            return Err(Error::Input(format!(
                "unknown preset `{name}`; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_and_roundtrips() {
        for name in PRESET_NAMES {
            let c = preset(name).unwrap();
            assert_eq!(c.name, name);
            c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            let back = ScenarioConfig::from_toml(&c.to_toml().unwrap()).unwrap();
            assert_eq!(back, c, "{name}");
        }
    }

    #[test]
    fn unknown_preset_lists_names() {
        let err = preset("nope").unwrap_err().to_string();
        for name in PRESET_NAMES {
            assert!(err.contains(name));
        }
    }
}
