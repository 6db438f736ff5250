//! Scenario configuration: a TOML document deserialized into
//! [`ScenarioConfig`], validated with field paths and turned into the
//! library objects a run needs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{DaiParams, FlowKind};
use crate::error::{Error, Result};
use crate::game::{Game, QuadraticGame};
use crate::graph::Graph;
use crate::sets::ConvexSet;
use crate::solver::{IntegratorSpec, Method};

type Vector = DVector<f64>;

/// Only environment variable the harness reads.
pub const OUT_DIR_ENV: &str = "DAI_NASH_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub flow: FlowKind,
    pub game: GameSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<Vec<SetSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dai: Option<DaiSpec>,
    pub integrator: IntegratorSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSpec {
    /// `F(x) = A x + b`; `a` is given row by row.
    Quadratic {
        dims: Vec<usize>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    /// `J_i = weight * ||x_i - target_i||^2`.
    Decoupled {
        dims: Vec<usize>,
        target: Vec<f64>,
        #[serde(default = "one")]
        weight: f64,
    },
}

impl GameSpec {
    pub fn dims(&self) -> &[usize] {
        match self {
            GameSpec::Quadratic { dims, .. } | GameSpec::Decoupled { dims, .. } => dims,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// `{x : g x <= h}`, `g` row by row.
    Polyhedron { g: Vec<Vec<f64>>, h: Vec<f64> },
    FullSpace { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Path {
        nodes: usize,
        #[serde(default = "one")]
        weight: f64,
    },
    Cycle {
        nodes: usize,
        #[serde(default = "one")]
        weight: f64,
    },
    /// Node 1 is the hub.
    Star {
        nodes: usize,
        #[serde(default = "one")]
        weight: f64,
    },
    Complete {
        nodes: usize,
        #[serde(default = "one")]
        weight: f64,
    },
    /// Unit weights; `seed` defaults to the scenario seed.
    ErdosRenyi {
        nodes: usize,
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Explicit { weights: Vec<Vec<f64>> },
}

/// A value shared by every agent or one value per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAgent {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerAgent {
    fn expand(&self, n: usize) -> Vec<f64> {
        match self {
            PerAgent::Uniform(v) => vec![*v; n],
            PerAgent::Each(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaiSpec {
    pub gamma: PerAgent,
    #[serde(default = "zero_gains")]
    pub k_init: PerAgent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Full estimate vector (`N M` entries, or `M` for `full_info`).
    Explicit { x: Vec<f64> },
    /// Independent uniform draws from `[lower, upper]`, seeded by the
    /// scenario seed. Projected flows then project each own block.
    RandomBox { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "oracle_tol")]
    pub tol: f64,
    #[serde(default = "oracle_max_iter")]
    pub max_iter: usize,
    /// Extragradient step for constrained games; `mu / ell^2` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vi_step: Option<f64>,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            tol: oracle_tol(),
            max_iter: oracle_max_iter(),
            vi_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// A run converged when the final `||X - 1 (x) x*||_inf` is below this.
    #[serde(default = "converge_threshold")]
    pub converge_threshold: f64,
    /// `k* = margin * min_k_star` for the Lyapunov column.
    #[serde(default = "k_star_margin")]
    pub k_star_margin: f64,
    /// Pairs sampled for the constants of non-quadratic games.
    #[serde(default = "constant_samples")]
    pub constant_samples: usize,
    #[serde(default = "sample_radius")]
    pub sample_radius: f64,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            converge_threshold: converge_threshold(),
            k_star_margin: k_star_margin(),
            constant_samples: constant_samples(),
            sample_radius: sample_radius(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "out_dir")]
    pub dir: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: out_dir() }
    }
}

fn one() -> f64 {
    1.0
}
fn zero_gains() -> PerAgent {
    PerAgent::Uniform(0.0)
}
fn oracle_tol() -> f64 {
    1e-12
}
fn oracle_max_iter() -> usize {
    200_000
}
fn converge_threshold() -> f64 {
    1e-4
}
fn k_star_margin() -> f64 {
    1.1
}
fn constant_samples() -> usize {
    200
}
fn sample_radius() -> f64 {
    5.0
}
fn out_dir() -> String {
    "out".into()
}

/// Library objects built from a validated config.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub game: Game,
    pub graph: Option<Graph>,
    pub params: Option<DaiParams>,
    pub integrator: IntegratorSpec,
    /// Initial flat state `(X, k)`.
    pub y0: Vector,
}

fn matrix(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if n == 0 || m == 0 {
        return Err(Error::config(path, "matrix is empty"));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != m) {
        return Err(Error::config(
            format!("{path}[{bad}]"),
            format!("row has {} entries, expected {m}", rows[bad].len()),
        ));
    }
    Ok(DMatrix::from_fn(n, m, |r, c| rows[r][c]))
}

fn at(path: impl Into<String>) -> impl FnOnce(Error) -> Error {
    let path = path.into();
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<document>".into());
            Error::config(path, e.message().to_string())
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering, excluding the output
    /// section. Equal hashes reproduce identical trajectories.
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.output = OutputSpec::default();
        let digest = Sha256::digest(canonical.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Output directory, overridable through [`OUT_DIR_ENV`].
    pub fn output_dir(&self) -> std::path::PathBuf {
        std::env::var_os(OUT_DIR_ENV)
            .map(Into::into)
            .unwrap_or_else(|| self.output.dir.clone().into())
    }

    pub fn validate(&self) -> Result<()> {
        self.build().map(|_| ())
    }

    pub fn build(&self) -> Result<Scenario> {
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        let game = self.build_game()?;
        let n = game.n_players();
        let m = game.total_dim();
        let flow = self.flow;

        let graph = if flow.is_networked() {
            let spec = self
                .graph
                .as_ref()
                .ok_or_else(|| Error::config("graph", format!("flow `{flow}` needs a graph")))?;
            let g = self.build_graph(spec)?;
            if g.n_nodes() != n {
                return Err(Error::config(
                    "graph.nodes",
                    format!("graph has {} nodes but the game has {n} players", g.n_nodes()),
                ));
            }
            Some(g)
        } else {
            None
        };

        let params = if flow.is_adaptive() {
            let spec = self
                .dai
                .as_ref()
                .ok_or_else(|| Error::config("dai", format!("flow `{flow}` needs a [dai] section")))?;
            let gamma = spec.gamma.expand(n);
            if gamma.len() != n {
                return Err(Error::config("dai.gamma", format!("expected {n} entries, got {}", gamma.len())));
            }
            let k_init = spec.k_init.expand(n);
            if k_init.len() != n {
                return Err(Error::config("dai.k_init", format!("expected {n} entries, got {}", k_init.len())));
            }
            if k_init.iter().any(|k| !k.is_finite()) {
                return Err(Error::config("dai.k_init", "entries must be finite"));
            }
            Some(DaiParams::new(gamma, k_init).map_err(at("dai.gamma"))?)
        } else {
            None
        };

        self.integrator.validate().map_err(at("integrator"))?;
        let projected_method = self.integrator.method == Method::ProjectedEuler;
        if projected_method != flow.is_projected() {
            let msg = if flow.is_projected() {
                format!("flow `{flow}` needs method `projected_euler`")
            } else {
                format!("method `projected_euler` needs flow `projected_dai`, not `{flow}`")
            };
            return Err(Error::config("integrator.method", msg));
        }

        let d = &self.diagnostics;
        for (field, v) in [
            ("diagnostics.converge_threshold", d.converge_threshold),
            ("diagnostics.k_star_margin", d.k_star_margin),
            ("diagnostics.sample_radius", d.sample_radius),
            ("oracle.tol", self.oracle.tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if d.k_star_margin <= 1.0 {
            return Err(Error::config("diagnostics.k_star_margin", "must exceed 1"));
        }
        if d.constant_samples < 2 {
            return Err(Error::config("diagnostics.constant_samples", "need at least 2"));
        }
        if self.oracle.max_iter == 0 {
            return Err(Error::config("oracle.max_iter", "must be positive"));
        }
        if let Some(tau) = self.oracle.vi_step {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::config("oracle.vi_step", format!("must be positive, got {tau}")));
            }
        }

        let x_len = if flow.is_networked() { n * m } else { m };
        let x0 = self.initial_estimates(x_len)?;
        let x0 = if flow.is_projected() {
            self.place_own_blocks(&game, x0)?
        } else {
            x0
        };
        let y0 = match &params {
            Some(p) => Vector::from_iterator(x_len + n, x0.iter().chain(p.k_init().iter()).copied()),
            None => x0,
        };

        Ok(Scenario {
            game,
            graph,
            params,
            integrator: self.integrator,
            y0,
        })
    }

    fn build_game(&self) -> Result<Game> {
        let dims = self.game.dims();
        if dims.is_empty() {
            return Err(Error::config("game.dims", "need at least one player"));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::config(format!("game.dims[{i}]"), "block sizes must be positive"));
        }
        let m: usize = dims.iter().sum();
        let quadratic = match &self.game {
            GameSpec::Quadratic { a, b, .. } => {
                let a = matrix(a, "game.a")?;
                if a.shape() != (m, m) {
                    return Err(Error::config(
                        "game.a",
                        format!("expected {m}x{m}, got {}x{}", a.nrows(), a.ncols()),
                    ));
                }
                if b.len() != m {
                    return Err(Error::config("game.b", format!("expected {m} entries, got {}", b.len())));
                }
                QuadraticGame::new(a, Vector::from_column_slice(b), dims).map_err(at("game"))?
            }
            GameSpec::Decoupled { target, weight, .. } => {
                if target.len() != m {
                    return Err(Error::config(
                        "game.target",
                        format!("expected {m} entries, got {}", target.len()),
                    ));
                }
                if !(*weight > 0.0 && weight.is_finite()) {
                    return Err(Error::config("game.weight", format!("must be positive, got {weight}")));
                }
                QuadraticGame::decoupled(target, *weight, dims).map_err(at("game"))?
            }
        };
        let game = quadratic.to_game();
        match &self.constraints {
            None if self.flow.is_projected() => Err(Error::config(
                "constraints",
                format!("flow `{}` needs one constraint set per player", self.flow),
            )),
            None => Ok(game),
            Some(_) if !self.flow.is_projected() => Err(Error::config(
                "constraints",
                format!("flow `{}` is unconstrained; use `projected_dai`", self.flow),
            )),
            Some(specs) => {
                if specs.len() != dims.len() {
                    return Err(Error::config(
                        "constraints",
                        format!("expected {} sets, got {}", dims.len(), specs.len()),
                    ));
                }
                let mut sets = Vec::with_capacity(specs.len());
                for (i, spec) in specs.iter().enumerate() {
                    let path = format!("constraints[{i}]");
                    let set = build_set(spec, &path)?;
                    if set.dim() != dims[i] {
                        return Err(Error::config(
                            path,
                            format!("set has dimension {}, player block has {}", set.dim(), dims[i]),
                        ));
                    }
                    sets.push(set);
                }
                game.with_constraints(sets).map_err(at("constraints"))
            }
        }
    }

    fn build_graph(&self, spec: &GraphSpec) -> Result<Graph> {
        let built = match spec {
            GraphSpec::Path { nodes, weight } => Graph::path(*nodes, *weight),
            GraphSpec::Cycle { nodes, weight } => Graph::cycle(*nodes, *weight),
            GraphSpec::Star { nodes, weight } => Graph::star(*nodes, *weight),
            GraphSpec::Complete { nodes, weight } => Graph::complete(*nodes, *weight),
            GraphSpec::ErdosRenyi { nodes, p, seed } => Graph::erdos_renyi(*nodes, *p, seed.unwrap_or(self.seed)),
            GraphSpec::Explicit { weights } => Graph::from_weights(matrix(weights, "graph.weights")?),
        };
        built.map_err(at("graph"))
    }

    fn initial_estimates(&self, len: usize) -> Result<Vector> {
        match &self.initial {
            InitialSpec::Explicit { x } => {
                if x.len() != len {
                    return Err(Error::config(
                        "initial.x",
                        format!("expected {len} entries for flow `{}`, got {}", self.flow, x.len()),
                    ));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("initial.x", "entries must be finite"));
                }
                Ok(Vector::from_column_slice(x))
            }
            InitialSpec::RandomBox { lower, upper } => {
                if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                    return Err(Error::config("initial", format!("need finite lower < upper, got [{lower}, {upper}]")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok(Vector::from_fn(len, |_, _| rng.random_range(*lower..=*upper)))
            }
        }
    }

    /// Explicit starts must already be feasible; random starts are projected.
    fn place_own_blocks(&self, game: &Game, mut x: Vector) -> Result<Vector> {
        let sets = game.constraints().unwrap_or_default();
        for (i, set) in sets.iter().enumerate() {
            let r = game.selection().own_range(i);
            let block = &x.as_slice()[r.clone()];
            let placed = match self.initial {
                InitialSpec::Explicit { .. } => set
                    .admit(block)
                    .map_err(at(format!("initial.x (own block of player {})", i + 1)))?,
                InitialSpec::RandomBox { .. } => set.project(block)?,
            };
            x.as_mut_slice()[r].copy_from_slice(placed.as_slice());
        }
        Ok(x)
    }
}

fn build_set(spec: &SetSpec, path: &str) -> Result<ConvexSet> {
    let built = match spec {
        SetSpec::Box { lower, upper } => ConvexSet::boxed(lower.clone(), upper.clone()),
        SetSpec::Ball { center, radius } => ConvexSet::ball(center.clone(), *radius),
        SetSpec::Polyhedron { g, h } => ConvexSet::polyhedron(matrix(g, &format!("{path}.g"))?, h.clone()),
        SetSpec::FullSpace { dim } => {
            if *dim == 0 {
                return Err(Error::config(format!("{path}.dim"), "must be positive"));
            }
            Ok(ConvexSet::full_space(*dim))
        }
    };
    built.map_err(at(path))
}
