use std::sync::Arc;

use bdsa::clustering;
use bdsa::heron::{self, HeronKind, HeronReplay};
use bdsa::phiq::{self, PhiQAlgorithm, PhiQInstance};
use bdsa::PrimalDualPoint;
use nalgebra::{dvector, DVector};

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn line(&self) -> String {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        format!("[{tag}] {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, outcome: bdsa::Result<(bool, String)>) -> Check {
    match outcome {
        Ok((pass, detail)) => Check { name, pass, detail },
        Err(e) => Check {
            name,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn phiq_escape() -> bdsa::Result<(bool, String)> {
    let inst = PhiQInstance::new(2, 3);
    let alg = PhiQAlgorithm::Bpdca;
    let start = PrimalDualPoint::primal(dvector![1.5, -0.5]);
    let res = phiq::run_from(&inst, alg, &start, &alg.config(&inst, 10_000))?;
    let err = (&res.point.x - inst.minimizer()).amax();
    Ok((err < 1e-4, format!("bpdca from (1.5, -0.5) ends {err:.1e} from the minimizer")))
}

fn region_projection() -> bdsa::Result<(bool, String)> {
    let region = clustering::default_region();
    let mut worst = 0.0_f64;
    let mut outside = 0;
    for i in 0..40 {
        for j in 0..40 {
            let z = dvector![-2.0 + 0.5 * i as f64, -2.0 + 0.35 * j as f64];
            let p = region.project(&z);
            if !region.contains(&p) {
                outside += 1;
            }
            worst = worst.max((region.project(&p) - &p).amax());
        }
    }
    Ok((
        outside == 0 && worst == 0.0,
        format!("1600 points, {outside} projections outside, idempotence error {worst:e}"),
    ))
}

fn heron_pair() -> bdsa::Result<(bool, String)> {
    let replay = HeronReplay::generate(HeronKind::Convex, 5, heron::default_m(5), 3, 1);
    let pair = heron::run_pair(
        replay,
        &heron::heron_config(false, 0.99, 0.5, 500_000),
        &heron::heron_config(true, 0.99, 0.5, 500_000),
    )?;
    let gap = pair.bdsa.final_varphi - pair.dsa.final_varphi;
    let violations =
        pair.dsa.result.descent_violations(1e-9).len() + pair.bdsa.result.descent_violations(1e-9).len();
    Ok((
        gap <= 1e-2 && violations == 0,
        format!(
            "dsa {} / bdsa {} iterations, varphi gap {gap:.2e}, {violations} descent violations",
            pair.dsa.iterations, pair.bdsa.iterations
        ),
    ))
}

fn cluster_feasible() -> bdsa::Result<(bool, String)> {
    let inst = Arc::new(clustering::synthetic_instance(1, 200, 3, 3, clustering::default_region())?);
    let x0: DVector<f64> = clustering::random_centroids(&inst, 1);
    let pair = clustering::paired_run(inst.clone(), x0, 1, 100_000)?;
    let feasible = inst.is_feasible(&pair.bdsa.result.point.x) && inst.is_feasible(&pair.gppa.result.point.x);
    Ok((
        feasible,
        format!(
            "bdsa {} / gppa {} iterations, final centroids feasible: {feasible}",
            pair.bdsa.iterations, pair.gppa.iterations
        ),
    ))
}

pub fn run_checks() -> Vec<Check> {
    vec![
        check("phiq-escape", phiq_escape()),
        check("region-projection", region_projection()),
        check("heron-convex-pair", heron_pair()),
        check("cluster-feasible", cluster_feasible()),
    ]
}
