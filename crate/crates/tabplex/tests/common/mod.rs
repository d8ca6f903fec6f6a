//! Shared fixtures for the integration suites: random model instances,
//! finite-difference gradients, and the independent dense forward oracle.

#![allow(dead_code)]

pub mod oracle;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tabplex::graph::{assemble, EdgeSet, MultiplexGraph};
use tabplex::linalg::Mat;
use tabplex::model::{forward, Mode, Task};
use tabplex::params::{AggKind, ModelDims, Params};
use tabplex::table::FeatureMatrix;
use tabplex::train::loss;

#[derive(Clone)]
pub struct InstanceCfg {
    pub seed: u64,
    pub n: usize,
    pub n_rel: usize,
    pub hidden: usize,
    pub heads: usize,
    pub agg: AggKind,
    pub task: Task,
    pub n_hops: usize,
    pub layer_size: usize,
    pub edge_prob: f64,
}

impl Default for InstanceCfg {
    fn default() -> Self {
        InstanceCfg {
            seed: 0,
            n: 10,
            n_rel: 2,
            hidden: 8,
            heads: 1,
            agg: AggKind::Attention,
            task: Task::Classification,
            n_hops: 1,
            layer_size: 2,
            edge_prob: 0.15,
        }
    }
}

pub struct Instance {
    pub graph: MultiplexGraph,
    pub fm: FeatureMatrix,
    pub y: Vec<f64>,
    pub params: Params,
    pub task: Task,
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, n_rel: usize, p: f64) -> MultiplexGraph {
    let sets = (0..n_rel)
        .map(|r| {
            let mut pairs = Vec::new();
            for u in 0..n as u32 {
                for v in 0..n as u32 {
                    if u != v && rng.gen::<f64>() < p {
                        pairs.push((u, v));
                    }
                }
            }
            EdgeSet::new(format!("r{r}"), pairs, true)
        })
        .collect();
    assemble(n, sets).unwrap()
}

fn build_features(rng: &mut ChaCha8Rng, n: usize) -> FeatureMatrix {
    let vocab = 5usize;
    FeatureMatrix {
        n_rows: n,
        cat_ids: vec![(0..n).map(|_| rng.gen_range(0..vocab as u32)).collect()],
        cat_vocab_sizes: vec![vocab],
        num: Mat::from_vec(n, 2, (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect()),
    }
}

/// Smallest pre-activation magnitude across every rectifier site; instances
/// too close to a kink are regenerated so finite differences stay valid.
fn kink_margin(trace: &tabplex::model::ForwardTrace) -> f64 {
    let mut margin = f64::INFINITY;
    for l in 0..trace.enc.pre.len().saturating_sub(1) {
        for &v in &trace.enc.pre[l].data {
            margin = margin.min(v.abs());
        }
    }
    for hops in &trace.rel {
        for hop in hops {
            for &v in &hop.pre.data {
                margin = margin.min(v.abs());
            }
            for &v in &hop.att_e {
                margin = margin.min(v.abs());
            }
        }
    }
    margin
}

/// Build a random instance whose rectifier inputs keep a safe margin from
/// zero (retries deterministically with derived seeds). The margin keeps
/// central differences with step 1e-4 from crossing a kink.
pub fn random_instance(cfg: &InstanceCfg) -> Instance {
    for attempt in 0..400u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(1000).wrapping_add(attempt));
        let graph = random_graph(&mut rng, cfg.n, cfg.n_rel, cfg.edge_prob);
        let fm = build_features(&mut rng, cfg.n);
        let y: Vec<f64> = (0..cfg.n)
            .map(|_| match cfg.task {
                Task::Classification => {
                    if rng.gen::<f64>() < 0.5 {
                        0.0
                    } else {
                        1.0
                    }
                }
                Task::Regression => rng.gen_range(-1.0..1.0),
            })
            .collect();
        let mut dims = ModelDims::standard(
            fm.cat_vocab_sizes.clone(),
            fm.num.cols,
            cfg.hidden,
            cfg.layer_size,
            cfg.n_rel,
            cfg.heads,
            cfg.agg,
        );
        dims.n_hops = cfg.n_hops;
        let params = Params::init(dims, cfg.seed.wrapping_mul(7919).wrapping_add(attempt));
        let trace = forward(&graph, &fm, &params, cfg.task, Mode::Eval { frozen_beta: None }).unwrap();
        if kink_margin(&trace) > 4e-4 {
            return Instance {
                graph,
                fm,
                y,
                params,
                task: cfg.task,
            };
        }
    }
    panic!("could not build an instance away from rectifier kinks");
}

/// Scalar training loss of the instance at the given parameters.
pub fn loss_at(inst: &Instance, params: &Params, loss_nodes: &[u32]) -> f64 {
    let trace = forward(&inst.graph, &inst.fm, params, inst.task, Mode::Eval { frozen_beta: None })
        .unwrap();
    let y: Vec<f64> = loss_nodes.iter().map(|&i| inst.y[i as usize]).collect();
    let p: Vec<f64> = loss_nodes.iter().map(|&i| trace.yhat[i as usize]).collect();
    loss(&y, &p, inst.task).unwrap()
}

/// Central finite differences of the loss for every parameter.
pub fn fd_gradients(inst: &Instance, loss_nodes: &[u32], step: f64) -> Vec<f64> {
    let mut params = inst.params.clone();
    let mut out = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = params.data[i];
        params.data[i] = orig + step;
        let plus = loss_at(inst, &params, loss_nodes);
        params.data[i] = orig - step;
        let minus = loss_at(inst, &params, loss_nodes);
        params.data[i] = orig;
        out[i] = (plus - minus) / (2.0 * step);
    }
    out
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
