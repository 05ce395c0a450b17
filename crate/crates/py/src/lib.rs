//! Python bindings: environments, the brute-force oracle, and policy-guided
//! retrieval over trained checkpoints.

use itsr_core::config::BuiltEnv;
use itsr_core::env::{Environment, StatePair, Trajectory};
use itsr_core::image::Image as CoreImage;
use itsr_core::image_env::{ImageEnv, ImageEnvConfig};
use itsr_core::mcts::NetEvaluator;
use itsr_core::nn::checkpoint;
use itsr_core::nn::PolicyValueNet;
use itsr_core::retrieval;
use itsr_core::toy_env::ToyEnv;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use std::path::PathBuf;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

/// Square 8-bit grayscale image.
#[pyclass(name = "Image", skip_from_py_object)]
#[derive(Clone)]
pub struct PyImage {
    inner: CoreImage,
}

#[pymethods]
impl PyImage {
    /// Builds an image from `side * side` raw bytes, row-major.
    #[staticmethod]
    fn frombytes(side: u32, data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: CoreImage::new(side, side, data.to_vec()).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load_pgm(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: itsr_core::pgm::read(&path).map_err(io_err)?,
        })
    }

    fn save_pgm(&self, path: PathBuf) -> PyResult<()> {
        itsr_core::pgm::write(&self.inner, &path).map_err(io_err)
    }

    fn tobytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.data())
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.inner.width(), self.inner.height())
    }
}

/// One of the transformation environments: `toy-constrained`, `toy-free`,
/// or `image` (with a procedural source pool).
#[pyclass(name = "Env")]
pub struct PyEnv {
    built: BuiltEnv,
    name: String,
}

impl PyEnv {
    fn env(&self) -> &dyn Environment {
        self.built.as_env()
    }

    fn action_ids(&self, names: &[String]) -> PyResult<Trajectory> {
        let env = self.env();
        let mut actions = Vec::with_capacity(names.len());
        for name in names {
            actions.push(
                env.action_id(name)
                    .ok_or_else(|| value_err(format!("unknown action '{name}'")))?,
            );
        }
        Ok(Trajectory::new(actions))
    }
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (kind, pool_seed=7, pool_size=64))]
    fn new(kind: &str, pool_seed: u64, pool_size: usize) -> PyResult<Self> {
        let built = match kind {
            "toy-constrained" => BuiltEnv::Toy(ToyEnv::constrained()),
            "toy-free" => BuiltEnv::Toy(ToyEnv::free()),
            "image" => BuiltEnv::Image(ImageEnv::with_procedural_pool(
                ImageEnvConfig::default(),
                pool_seed,
                pool_size,
            )),
            other => {
                return Err(value_err(format!(
                    "unknown environment '{other}' (expected toy-constrained, toy-free, image)"
                )))
            }
        };
        Ok(Self {
            built,
            name: kind.to_string(),
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.name
    }

    fn action_names(&self) -> Vec<String> {
        self.env()
            .actions()
            .iter()
            .map(|a| a.name.clone())
            .collect()
    }

    fn action_count(&self) -> usize {
        self.env().action_count()
    }

    fn side(&self) -> u32 {
        self.env().side()
    }

    fn max_depth(&self) -> usize {
        self.env().max_depth()
    }

    fn apply(&self, action: &str, image: &PyImage) -> PyResult<PyImage> {
        let id = self
            .env()
            .action_id(action)
            .ok_or_else(|| value_err(format!("unknown action '{action}'")))?;
        Ok(PyImage {
            inner: self.env().apply(id, &image.inner).map_err(value_err)?,
        })
    }

    fn apply_sequence(&self, actions: Vec<String>, image: &PyImage) -> PyResult<PyImage> {
        let trajectory = self.action_ids(&actions)?;
        Ok(PyImage {
            inner: self
                .env()
                .apply_sequence(&trajectory, &image.inner)
                .map_err(value_err)?,
        })
    }

    /// Names of the actions legal in this state (fresh usage counters).
    fn legal_actions(&self, image: &PyImage) -> Vec<String> {
        let env = self.env();
        env.legal_mask(&image.inner, &env.new_usage())
            .iter()
            .zip(env.actions())
            .filter(|&(&ok, _info)| ok).map(|(&_ok, info)| info.name.clone())
            .collect()
    }

    /// Samples `(source, target, ground_truth_action_names)`.
    fn generate_pair(
        &self,
        max_len: usize,
        seed: u64,
    ) -> PyResult<(PyImage, PyImage, Vec<String>)> {
        let mut rng = itsr_core::seeds::rng(seed, "py-gen", &[]);
        let ep = self
            .env()
            .generate_pair(max_len, &mut rng)
            .map_err(value_err)?;
        let names = ep.ground_truth.names(self.env());
        Ok((
            PyImage { inner: ep.source },
            PyImage { inner: ep.target },
            names,
        ))
    }

    /// Shortest solution by breadth-first search, or None.
    fn bfs_solve(
        &self,
        source: &PyImage,
        target: &PyImage,
        max_depth: usize,
    ) -> PyResult<Option<Vec<String>>> {
        let pair = StatePair::new(source.inner.clone(), target.inner.clone()).map_err(value_err)?;
        let solved =
            itsr_core::oracle::bfs_solve(&pair, self.env(), max_depth).map_err(value_err)?;
        Ok(solved.map(|t| t.names(self.env())))
    }

    /// Number of distinct solutions of exactly `length` actions.
    fn count_solutions(&self, source: &PyImage, target: &PyImage, length: usize) -> PyResult<u64> {
        let pair = StatePair::new(source.inner.clone(), target.inner.clone()).map_err(value_err)?;
        itsr_core::oracle::count_solutions(&pair, self.env(), length).map_err(value_err)
    }

    /// Image `index` of the source pool (image environment only).
    fn pool_image(&self, index: usize) -> PyResult<PyImage> {
        match &self.built {
            BuiltEnv::Image(env) => env
                .pool()
                .get(index)
                .map(|img| PyImage { inner: img.clone() })
                .ok_or_else(|| value_err(format!("pool index {index} out of range"))),
            BuiltEnv::Toy(_) => Err(value_err("the toy environment has no source pool")),
        }
    }

    /// Freshly initialized actor-critic model matched to this environment.
    fn fresh_model(&self, seed: u64) -> PyResult<PyModel> {
        let env = self.env();
        let cfg = match &self.built {
            BuiltEnv::Toy(_) => itsr_core::nn::NetworkConfig::toy(
                env.action_count(),
                env.side(),
                itsr_core::nn::HeadKind::ActorCritic,
            ),
            BuiltEnv::Image(_) => itsr_core::nn::NetworkConfig::image(
                env.action_count(),
                env.side(),
                itsr_core::nn::HeadKind::ActorCritic,
            ),
        };
        Ok(PyModel {
            net: PolicyValueNet::new(cfg, seed).map_err(value_err)?,
            kind: "fresh".into(),
        })
    }
}

/// A policy/value network, fresh or loaded from a training checkpoint.
#[pyclass(name = "Model")]
pub struct PyModel {
    net: PolicyValueNet<f32>,
    kind: String,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (net, meta) = checkpoint::load(&path).map_err(io_err)?;
        Ok(Self {
            net,
            kind: meta.kind,
        })
    }

    #[getter]
    fn kind(&self) -> &str {
        &self.kind
    }

    /// Masked action distribution and value estimate for a state pair.
    fn policy(
        &self,
        env: &PyEnv,
        current: &PyImage,
        target: &PyImage,
    ) -> PyResult<(Vec<f64>, f64)> {
        checkpoint::ensure_env_compatible(&self.net, env.env()).map_err(value_err)?;
        let pair =
            StatePair::new(current.inner.clone(), target.inner.clone()).map_err(value_err)?;
        let legal = env.env().legal_mask(&pair.current, &env.env().new_usage());
        let out = self.net.forward(&pair, &legal).map_err(value_err)?;
        Ok((
            out.policy.iter().map(|&p| f64::from(p)).collect(),
            f64::from(out.value),
        ))
    }

    /// Greedy rollout; returns `(success, action_names)`.
    fn single_shot(
        &self,
        env: &PyEnv,
        source: &PyImage,
        target: &PyImage,
    ) -> PyResult<(bool, Vec<String>)> {
        checkpoint::ensure_env_compatible(&self.net, env.env()).map_err(value_err)?;
        let pair = StatePair::new(source.inner.clone(), target.inner.clone()).map_err(value_err)?;
        let evaluator = NetEvaluator::new(&self.net, &pair.target).map_err(value_err)?;
        let result = retrieval::single_shot(env.env(), &pair, &evaluator, env.env().max_depth());
        Ok((result.success, result.trajectory.names(env.env())))
    }

    /// Best-first search with at most `k` expansions; returns
    /// `(success, expansions, action_names_or_none)`.
    fn top_k(
        &self,
        env: &PyEnv,
        source: &PyImage,
        target: &PyImage,
        k: usize,
    ) -> PyResult<(bool, usize, Option<Vec<String>>)> {
        checkpoint::ensure_env_compatible(&self.net, env.env()).map_err(value_err)?;
        let pair = StatePair::new(source.inner.clone(), target.inner.clone()).map_err(value_err)?;
        let evaluator = NetEvaluator::new(&self.net, &pair.target).map_err(value_err)?;
        let result =
            retrieval::top_k_search(env.env(), &pair, &evaluator, k, env.env().max_depth());
        Ok((
            result.success,
            result.expansions,
            result.trajectory.map(|t| t.names(env.env())),
        ))
    }
}

/// Exact count of action sequences under a per-symbol repetition cap.
#[pyfunction]
fn count_sequences(alphabet: usize, cap: usize, min_len: usize, max_len: usize) -> u64 {
    itsr_core::oracle::count_sequences(alphabet, cap, min_len, max_len)
}

#[pymodule]
fn itsr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(count_sequences, m)?)?;
    Ok(())
}
