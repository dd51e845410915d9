use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use bdsa::clustering::{self, ClusterInstance};
use bdsa::heron::{HeronKind, HeronReplay};
use bdsa::phiq::{self, PhiQAlgorithm, PhiQCounts, PhiQInstance};
use bdsa::prox::Region;
use bdsa::sampling::RNG_ALGORITHM;
use bdsa::solver::{self, RunResult, StepSizeRule, StopRule};
use bdsa::{exec, SolverConfig};
use serde::Serialize;

use crate::config::{ExperimentConfig, Suite};
use crate::error::{read_file, CliError, CliResult};

/// Everything a suite produces, written by a single collector afterwards.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub csv: Vec<u8>,
    pub summary: String,
    /// `(file name, contents)` for the trace directory.
    pub traces: Vec<(String, Vec<u8>)>,
}

#[derive(Serialize)]
struct Summary<'a, R> {
    suite: Suite,
    rng: &'static str,
    config: &'a ExperimentConfig,
    results: R,
}

/// Per-run data kept after the solver's result is dropped.
struct Outcome {
    iterations: usize,
    varphi: f64,
    elapsed: Duration,
    trace: Option<Vec<u8>>,
}

impl Outcome {
    fn new(res: &RunResult, cfg: &ExperimentConfig) -> CliResult<Self> {
        let trace = match cfg.trace_dir {
            Some(_) => {
                let mut buf = Vec::new();
                solver::write_trace_csv(&res.trace, &mut buf, cfg.timing)
                    .map_err(|e| CliError::io(Path::new("<trace buffer>"), e))?;
                Some(buf)
            }
            None => None,
        };
        Ok(Self {
            iterations: res.iterations,
            varphi: res.varphi,
            elapsed: res.elapsed,
            trace,
        })
    }

    fn time_ms(&self, timing: bool) -> f64 {
        if timing {
            self.elapsed.as_secs_f64() * 1e3
        } else {
            0.0
        }
    }
}

fn solver_config(cfg: &ExperimentConfig, boosted: bool, step: StepSizeRule) -> SolverConfig {
    SolverConfig::new(
        cfg.linesearch(boosted),
        step,
        StopRule::new(cfg.stop.kind(), cfg.tol, cfg.max_iters),
    )
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &str) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header.split(','))
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Config(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Config(e.to_string()))
}

fn summary_json<R: Serialize>(cfg: &ExperimentConfig, results: R) -> String {
    let summary = Summary {
        suite: cfg.suite,
        rng: RNG_ALGORITHM,
        config: cfg,
        results,
    };
    serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

pub fn run_suite(cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    match cfg.suite {
        Suite::Phiq => run_phiq(cfg),
        Suite::Cluster => run_cluster(cfg),
        Suite::HeronConvex => run_heron(cfg, HeronKind::Convex),
        Suite::HeronNonconvex => run_heron(cfg, HeronKind::Nonconvex),
        Suite::Selftest => Err(CliError::Config("selftest has no artifacts".into())),
    }
}

pub const PHIQ_HEADER: &str = "algorithm,n,q,runs,successes,mean_iters,mean_final_varphi,seed";
pub const CLUSTER_HEADER: &str = "instance,seed,algorithm,iters,time_ms,final_f";
pub const HERON_HEADER: &str = "n,m,p,seed,alg,iters,time_ms,final_varphi";

#[derive(Serialize)]
struct PhiqResult {
    algorithm: PhiQAlgorithm,
    runs: usize,
    successes: usize,
    success_rate: f64,
    mean_iters: f64,
}

fn run_phiq(cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    let q = u32::try_from(cfg.q).map_err(|_| CliError::range("q", cfg.q, "q ≤ 1000"))?;
    let inst = PhiQInstance::new(cfg.n, q);
    let algs: Vec<PhiQAlgorithm> = match cfg.alg.as_str() {
        "all" => PhiQAlgorithm::ALL.to_vec(),
        name => vec![name.parse()?],
    };
    let mu = cfg.mu.expect("phiq resolves mu");
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for alg in algs {
        let solver_cfg = solver_config(cfg, alg.is_boosted(), StepSizeRule::fixed(1.0, mu));
        let outcomes = exec::map_indexed(cfg.runs, |i| {
            let start = phiq::sample_start(&inst, cfg.seed, i);
            let res = phiq::run_from(&inst, alg, &start, &solver_cfg)?;
            let success = inst.is_success(&res.point.x);
            let value = phiq::phi_q_value(&inst, &res.point.x);
            Ok((Outcome::new(&res, cfg)?, success, value))
        });
        let outcomes = outcomes.into_iter().collect::<CliResult<Vec<_>>>()?;
        let runs = outcomes.len() as f64;
        rows.push(PhiQCounts {
            algorithm: alg,
            n: cfg.n,
            q,
            runs: outcomes.len(),
            successes: outcomes.iter().filter(|(_, s, _)| *s).count(),
            mean_iters: outcomes.iter().map(|(o, _, _)| o.iterations as f64).sum::<f64>() / runs,
            mean_final_varphi: outcomes.iter().map(|(_, _, v)| v).sum::<f64>() / runs,
            seed: cfg.seed,
            per_run: Vec::new(),
        });
        for (i, (o, _, _)) in outcomes.into_iter().enumerate() {
            if let Some(t) = o.trace {
                traces.push((format!("phiq-{alg}-{i:04}.csv"), t));
            }
        }
    }
    let results: Vec<PhiqResult> = rows
        .iter()
        .map(|r| PhiqResult {
            algorithm: r.algorithm,
            runs: r.runs,
            successes: r.successes,
            success_rate: r.success_rate(),
            mean_iters: r.mean_iters,
        })
        .collect();
    Ok(Artifacts {
        csv: csv_bytes(&rows, PHIQ_HEADER)?,
        summary: summary_json(cfg, results),
        traces,
    })
}

#[derive(Serialize)]
struct ClusterRow {
    instance: usize,
    seed: u64,
    algorithm: &'static str,
    iters: usize,
    time_ms: f64,
    final_f: f64,
}

#[derive(Serialize)]
struct ClusterResult {
    instances: usize,
    num_points: usize,
    infeasible_finals: usize,
    /// Instances where BDSA ends within relative 10⁻³ of GPPA or below.
    bdsa_not_worse: Option<usize>,
    mean_iter_ratio: Option<f64>,
    mean_time_ratio: Option<f64>,
}

/// Relative slack matching GPPA's own stopping accuracy.
pub const CLUSTER_COMPARISON_SLACK: f64 = 1e-3;

fn load_region(path: Option<&Path>) -> CliResult<Region> {
    match path {
        Some(p) => Region::from_json(&read_file(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        None => Ok(clustering::default_region()),
    }
}

fn run_cluster(cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    let region = load_region(cfg.region.as_deref())?;
    if region.dim() != 2 {
        return Err(CliError::Config(format!("region must be 2-D, got dimension {}", region.dim())));
    }
    let shared = match &cfg.points {
        Some(path) => {
            let points = clustering::parse_points_csv(&read_file(path)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let inst = ClusterInstance::new(points, cfg.l, region.clone())
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Some(Arc::new(inst))
        }
        None => None,
    };
    let step = StepSizeRule {
        eta: cfg.eta.expect("cluster resolves eta"),
        ..StepSizeRule::default()
    };
    let bdsa_cfg = solver_config(cfg, true, step);
    let gppa_cfg = solver_config(cfg, false, step);

    let per_instance = exec::map_indexed(cfg.runs, |i| -> CliResult<_> {
        let seed = cfg.seed + i as u64;
        let inst = match &shared {
            Some(inst) => inst.clone(),
            None => Arc::new(clustering::synthetic_instance(seed, cfg.q, cfg.l, cfg.l, region.clone())?),
        };
        let x0 = clustering::random_centroids(&inst, seed);
        let results: Vec<(&'static str, RunResult)> = match cfg.alg.as_str() {
            "both" => {
                let pair = clustering::paired_run_with(inst.clone(), x0, seed, bdsa_cfg, gppa_cfg)?;
                vec![("bdsa", pair.bdsa.result), ("gppa", pair.gppa.result)]
            }
            "bdsa" => vec![("bdsa", clustering::run_clustering(inst.clone(), x0, &bdsa_cfg)?)],
            _ => vec![("gppa", clustering::run_clustering(inst.clone(), x0, &gppa_cfg)?)],
        };
        let infeasible = results.iter().filter(|(_, r)| !inst.is_feasible(&r.point.x)).count();
        let outcomes = results
            .iter()
            .map(|(name, r)| Ok((*name, Outcome::new(r, cfg)?)))
            .collect::<CliResult<Vec<_>>>()?;
        Ok((seed, inst.num_points(), infeasible, outcomes))
    });
    let per_instance = per_instance.into_iter().collect::<CliResult<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut ratios = Vec::new();
    let mut time_ratios = Vec::new();
    let mut not_worse = 0;
    for (i, (seed, _, _, outcomes)) in per_instance.iter().enumerate() {
        for (name, o) in outcomes {
            rows.push(ClusterRow {
                instance: i,
                seed: *seed,
                algorithm: name,
                iters: o.iterations,
                time_ms: o.time_ms(cfg.timing),
                final_f: o.varphi,
            });
            if let Some(t) = &o.trace {
                traces.push((format!("cluster-{name}-{i:04}.csv"), t.clone()));
            }
        }
        if let [(_, b), (_, g)] = outcomes.as_slice() {
            ratios.push(g.iterations as f64 / b.iterations.max(1) as f64);
            time_ratios.push(g.elapsed.as_secs_f64() / b.elapsed.as_secs_f64().max(1e-12));
            if b.varphi <= g.varphi + CLUSTER_COMPARISON_SLACK * g.varphi.abs() {
                not_worse += 1;
            }
        }
    }
    let paired = cfg.alg == "both";
    let results = ClusterResult {
        instances: per_instance.len(),
        num_points: per_instance.first().map_or(0, |p| p.1),
        infeasible_finals: per_instance.iter().map(|p| p.2).sum(),
        bdsa_not_worse: paired.then_some(not_worse),
        mean_iter_ratio: mean(ratios.into_iter()),
        mean_time_ratio: if cfg.timing { mean(time_ratios.into_iter()) } else { None },
    };
    Ok(Artifacts {
        csv: csv_bytes(&rows, CLUSTER_HEADER)?,
        summary: summary_json(cfg, results),
        traces,
    })
}

#[derive(Serialize)]
struct HeronRow {
    n: usize,
    m: usize,
    p: usize,
    seed: u64,
    alg: &'static str,
    iters: usize,
    time_ms: f64,
    final_varphi: f64,
}

#[derive(Serialize)]
struct HeronResult {
    instances: usize,
    /// Instances where BDSA's final value is at most DSA's.
    bdsa_not_worse: Option<usize>,
    /// Largest `φ_BDSA − φ_DSA` over instances.
    max_varphi_gap: Option<f64>,
    mean_iter_ratio: Option<f64>,
    mean_time_ratio: Option<f64>,
}

fn run_heron(cfg: &ExperimentConfig, kind: HeronKind) -> CliResult<Artifacts> {
    let replays: Vec<HeronReplay> = match &cfg.replay {
        Some(path) => {
            let replay = HeronReplay::from_json(&read_file(path)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let matches = matches!(
                (&replay, kind),
                (HeronReplay::Convex { .. }, HeronKind::Convex) | (HeronReplay::Nonconvex { .. }, HeronKind::Nonconvex)
            );
            if !matches {
                return Err(CliError::Config(format!(
                    "{}: replay kind does not match suite {}",
                    path.display(),
                    cfg.suite
                )));
            }
            vec![replay]
        }
        None => (0..cfg.runs)
            .map(|i| HeronReplay::generate(kind, cfg.n, cfg.m, cfg.p, cfg.seed + i as u64))
            .collect(),
    };
    let step = StepSizeRule {
        eta: cfg.eta.expect("heron resolves eta"),
        mu: cfg.mu.expect("heron resolves mu"),
        ..StepSizeRule::default()
    };
    let dsa_cfg = solver_config(cfg, false, step);
    let bdsa_cfg = solver_config(cfg, true, step);
    let algs: Vec<(&'static str, &SolverConfig)> = match cfg.alg.as_str() {
        "both" => vec![("dsa", &dsa_cfg), ("bdsa", &bdsa_cfg)],
        "dsa" => vec![("dsa", &dsa_cfg)],
        _ => vec![("bdsa", &bdsa_cfg)],
    };

    let per_instance = exec::map_slice(&replays, |replay| -> CliResult<_> {
        let prob = replay.problem()?;
        let start = replay.start();
        algs.iter()
            .map(|(name, c)| {
                let res = solver::run(&prob, start.clone(), c)?;
                Ok((*name, Outcome::new(&res, cfg)?))
            })
            .collect::<CliResult<Vec<_>>>()
    });
    let per_instance = per_instance.into_iter().collect::<CliResult<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut ratios = Vec::new();
    let mut time_ratios = Vec::new();
    let mut gaps = Vec::new();
    for (i, (replay, outcomes)) in replays.iter().zip(&per_instance).enumerate() {
        let (n, m, p) = replay.dims();
        for (name, o) in outcomes {
            rows.push(HeronRow {
                n,
                m,
                p,
                seed: replay.seed(),
                alg: name,
                iters: o.iterations,
                time_ms: o.time_ms(cfg.timing),
                final_varphi: o.varphi,
            });
            if let Some(t) = &o.trace {
                traces.push((format!("{}-{name}-{i:04}.csv", cfg.suite), t.clone()));
            }
        }
        if cfg.trace_dir.is_some() {
            traces.push((format!("{}-{i:04}.json", cfg.suite), replay.to_json().into_bytes()));
        }
        if let [(_, d), (_, b)] = outcomes.as_slice() {
            ratios.push(d.iterations as f64 / b.iterations.max(1) as f64);
            time_ratios.push(d.elapsed.as_secs_f64() / b.elapsed.as_secs_f64().max(1e-12));
            gaps.push(b.varphi - d.varphi);
        }
    }
    let paired = cfg.alg == "both";
    let results = HeronResult {
        instances: replays.len(),
        bdsa_not_worse: paired.then(|| gaps.iter().filter(|g| **g <= 0.0).count()),
        max_varphi_gap: gaps.iter().copied().reduce(f64::max),
        mean_iter_ratio: mean(ratios.into_iter()),
        mean_time_ratio: if cfg.timing { mean(time_ratios.into_iter()) } else { None },
    };
    Ok(Artifacts {
        csv: csv_bytes(&rows, HERON_HEADER)?,
        summary: summary_json(cfg, results),
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Settings;

    fn config(suite: Suite, toml: &str) -> ExperimentConfig {
        ExperimentConfig::resolve(suite, Settings::from_toml(toml).unwrap()).unwrap()
    }

    fn lines(bytes: &[u8]) -> Vec<String> {
        String::from_utf8(bytes.to_vec()).unwrap().lines().map(String::from).collect()
    }

    #[test]
    fn phiq_bpdca_rows_and_success() {
        let cfg = config(Suite::Phiq, "runs = 20\nalg = \"bpdca\"");
        let out = run_suite(&cfg).unwrap();
        let csv = lines(&out.csv);
        assert_eq!(csv[0], PHIQ_HEADER);
        assert_eq!(csv.len(), 2);
        assert!(csv[1].starts_with("bpdca,2,3,20,20,"), "{}", csv[1]);
        let summary: serde_json::Value = serde_json::from_str(&out.summary).unwrap();
        assert_eq!(summary["results"][0]["success_rate"], 1.0);
        assert_eq!(summary["rng"], RNG_ALGORITHM);
    }

    #[test]
    fn cluster_rows_per_run() {
        let cfg = config(Suite::Cluster, "runs = 3\nq = 150\nl = 3");
        let out = run_suite(&cfg).unwrap();
        let csv = lines(&out.csv);
        assert_eq!(csv[0], CLUSTER_HEADER);
        assert_eq!(csv.len(), 1 + 2 * 3);
        let summary: serde_json::Value = serde_json::from_str(&out.summary).unwrap();
        assert_eq!(summary["results"]["infeasible_finals"], 0);
    }

    #[test]
    fn heron_single_algorithm_rows() {
        let cfg = config(Suite::HeronConvex, "runs = 2\nalg = \"bdsa\"");
        let out = run_suite(&cfg).unwrap();
        let csv = lines(&out.csv);
        assert_eq!(csv.len(), 3);
        assert!(csv[1].starts_with("5,6,3,1,bdsa,"), "{}", csv[1]);
        assert!(csv[2].starts_with("5,6,3,2,bdsa,"), "{}", csv[2]);
        let summary: serde_json::Value = serde_json::from_str(&out.summary).unwrap();
        assert!(summary["results"]["mean_iter_ratio"].is_null());
    }

    #[test]
    fn timing_off_zeroes_time_column() {
        let cfg = config(Suite::HeronNonconvex, "runs = 1\nn = 6");
        let out = run_suite(&cfg).unwrap();
        for line in lines(&out.csv).iter().skip(1) {
            assert_eq!(line.split(',').nth(6), Some("0.0"), "{line}");
        }
    }

    #[test]
    fn traces_requested_only() {
        let cfg = config(Suite::Phiq, "runs = 2\nalg = \"dga\"");
        assert!(run_suite(&cfg).unwrap().traces.is_empty());
        let cfg = config(Suite::Phiq, "runs = 2\nalg = \"dga\"\ntrace-dir = \"unused\"");
        let names: Vec<String> = run_suite(&cfg).unwrap().traces.into_iter().map(|t| t.0).collect();
        assert_eq!(names, ["phiq-dga-0000.csv", "phiq-dga-0001.csv"]);
    }
}
