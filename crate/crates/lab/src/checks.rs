//! The verification checks behind `verify`.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toral_core::exec::Executor;
use toral_core::hyperbolicity::{
    branch_pair_spread, classify_ph_at, grid_points, integrate_leaf, max_specialness_spread, Bundle, ConeParams, PhClass,
};
use toral_core::linear::{fixed_point_count, preimage_density, SpectralData};
use toral_core::models::{BranchProbe, Endomorphism, Map3Model, Point3};
use toral_core::periodic::{enumerate_periodic_with, rigidity_report, PeriodicOrbit, SearchOptions};
use toral_core::semiconj::{
    c_h_bound, conj_residual_with, decay_slope, deck_commutation_defect_with, fiber_interval, lambda_atlas_with,
    lambda_membership, plateau_cantor_probe, solve_h, stable_decay_check, unstable_deck_component, SemiConjugacy,
};
use toral_core::torus::{project, DeckVector, LiftPoint, TorusPoint};
use toral_core::util::linear_fit;

use crate::config::{Built, Check, LabConfig, ModelKind, Tol};
use crate::exec::Pool;
use crate::report::{CheckReport, Status};

/// Everything a check needs.
pub struct Ctx<'a> {
    pub cfg: &'a LabConfig,
    pub built: &'a Built,
    pub pool: &'a Pool,
    pub out: &'a Path,
    pub seed: u64,
}

type CheckResult = Result<(), Box<dyn std::error::Error + Send + Sync>>;

pub fn applicable(check: Check, kind: ModelKind) -> bool {
    use ModelKind::*;
    match check {
        Check::PhClassify | Check::SpecialTest | Check::Periodic | Check::Semiconj => kind != T3,
        Check::Rigidity => matches!(kind, Linear | ManeSc | Nonspecial),
        Check::LambdaAtlas => matches!(kind, Linear | ManeSc),
        Check::Conservativity => kind == T3,
        Check::Density => true,
    }
}

/// Runs one check; errors become a failed report rather than an abort.
pub fn run_check(check: Check, ctx: &Ctx<'_>) -> CheckReport {
    let mut r = CheckReport::new(check.as_str());
    let t = Instant::now();
    log::info!("running {check}");
    let res = match check {
        Check::PhClassify => ph_classify(ctx, &mut r),
        Check::SpecialTest => special_test(ctx, &mut r),
        Check::Periodic => periodic(ctx, &mut r),
        Check::Rigidity => rigidity(ctx, &mut r),
        Check::Semiconj => semiconj(ctx, &mut r),
        Check::LambdaAtlas => atlas(ctx, &mut r),
        Check::Conservativity => conservativity(ctx, &mut r),
        Check::Density => density(ctx, &mut r),
    };
    if let Err(e) = res {
        r.status = Status::Fail;
        r.error = Some(e.to_string());
    }
    r.runtime_ms = t.elapsed().as_secs_f64() * 1e3;
    log::info!("{check}: {:?} in {:.0} ms", r.status, r.runtime_ms);
    r
}

fn endo<'a>(ctx: &Ctx<'a>) -> &'a dyn Endomorphism {
    ctx.built.endo().expect("applicability is checked before running")
}

fn spec(ctx: &Ctx<'_>) -> SpectralData {
    match ctx.built {
        Built::T3(m) => m.linear().spectrum,
        _ => endo(ctx).linear().spectrum,
    }
}

/// The unit grid plus dense samples of every perturbation box.
fn sample_points(m: &dyn Endomorphism, grid_n: usize, box_n: usize) -> Vec<LiftPoint> {
    let mut pts = grid_points(grid_n);
    for b in m.perturbation_boxes() {
        pts.extend(b.grid(box_n));
    }
    pts
}

fn write_csv<S: serde::Serialize>(ctx: &Ctx<'_>, r: &mut CheckReport, name: &str, rows: &[S]) -> CheckResult {
    let path = ctx.out.join(name);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    r.files.push(name.to_string());
    Ok(())
}

pub fn cone_for(built: &Built) -> Result<ConeParams, toral_core::hyperbolicity::HypError> {
    match built {
        Built::Linear(m) => ConeParams::eigen(&m.linear().spectrum, 0.2, 2),
        Built::ManeSc(m) => ConeParams::for_mane(&m.linear().spectrum, m.certificate()),
        Built::Nonspecial(m) => Ok(*m.cone()),
        Built::ManeCu(m) => ConeParams::for_cu(&m.linear().spectrum, m.certificate()),
        Built::T3(_) => Err(toral_core::hyperbolicity::HypError::InvalidCone("no planar cone for the T3 model")),
    }
}

fn ph_classify(ctx: &Ctx<'_>, r: &mut CheckReport) -> CheckResult {
    let m = endo(ctx);
    let cone = cone_for(ctx.built)?;
    let n = ctx.cfg.sizes.cone_grid;
    let pts = sample_points(m, n, 60);
    let expected = match ctx.cfg.model {
        ModelKind::Linear => PhClass::Anosov,
        ModelKind::ManeCu => PhClass::Cu,
        _ => PhClass::Sc,
    };
    r.value("expected", expected.as_str());
    match classify_ph_at(ctx.pool, m, &cone, &pts, n) {
        Ok(c) => {
            r.value("classification", c.classification.as_str());
            r.value("invariance_defect", c.invariance_defect);
            r.value("worst_ratio_1", c.worst_ratio_1);
            r.value("worst_ratio_2", c.worst_ratio_2);
            r.value("points", c.points);
            r.value("cone", c.cone);
            r.verdict = Some(c.classification.as_str().to_string());
            r.require("cone-invariance", c.invariance_defect == 0.0);
            r.require("classification", c.classification == expected);
        }
        Err(e) => {
            r.verdict = Some("fail".to_string());
            r.value("classification", "fail");
            r.error = Some(e.to_string());
            r.require("classification", false);
        }
    }
    Ok(())
}

fn probe_of(built: &Built) -> Option<Result<BranchProbe, toral_core::models::ModelError>> {
    match built {
        Built::Nonspecial(m) => Some(m.probe()),
        Built::ManeCu(m) => Some(m.probe()),
        _ => None,
    }
}

fn special_test(ctx: &Ctx<'_>, r: &mut CheckReport) -> CheckResult {
    let m = endo(ctx);
    let lo = ctx.cfg.tol(Tol::SpreadSpecial);
    let hi = ctx.cfg.tol(Tol::SpreadNonspecial);
    r.tolerance(&Tol::SpreadSpecial.key(), lo);
    r.tolerance(&Tol::SpreadNonspecial.key(), hi);
    let spread = match probe_of(ctx.built) {
        Some(p) => {
            let p = p?;
            let s = branch_pair_spread(m, p.x.lift(), &p.through, &p.avoiding)?;
            r.value("method", "two-branch probe");
            r.value("probe", &p);
            s
        }
        None => {
            let n = ctx.cfg.sizes.special_grid;
            let depth = ctx.cfg.sizes.special_depth;
            let pts: Vec<TorusPoint> = grid_points(n).into_iter().map(project).collect();
            let budget = 1usize << depth.min(20);
            r.value("method", "branch enumeration");
            r.value("points", pts.len());
            r.value("depth", depth);
            max_specialness_spread(ctx.pool, m, &pts, depth, budget)?
        }
    };
    r.value("spread", spread);
    let verdict = if spread < lo {
        "SPECIAL"
    } else if spread > hi {
        "NOT-SPECIAL"
    } else {
        "INCONCLUSIVE"
    };
    r.verdict = Some(verdict.to_string());
    r.require("conclusive", verdict != "INCONCLUSIVE");
    Ok(())
}

#[derive(serde::Serialize)]
struct OrbitRow {
    period: u32,
    prime_period: u32,
    x: f64,
    y: f64,
    deck_m1: i64,
    deck_m2: i64,
    lambda_small: f64,
    lambda_big: f64,
    complex: bool,
    residual: f64,
}

fn orbits_up_to(ctx: &Ctx<'_>, max_period: u32) -> Result<Vec<PeriodicOrbit>, Box<dyn std::error::Error + Send + Sync>> {
    let m = endo(ctx);
    let mut all = Vec::new();
    for n in 1..=max_period {
        all.extend(enumerate_periodic_with(ctx.pool, m, n, &SearchOptions::default())?);
    }
    Ok(all)
}

fn periodic(ctx: &Ctx<'_>, r: &mut CheckReport) -> CheckResult {
    let m = endo(ctx);
    let a = m.linearization();
    let tol = ctx.cfg.tol(Tol::PeriodicResidual);
    r.tolerance(&Tol::PeriodicResidual.key(), tol);
    let max_p = ctx.cfg.sizes.max_period;
    let orbits = orbits_up_to(ctx, max_p)?;
    let mut counts = Vec::new();
    for n in 1..=max_p {
        let found = orbits.iter().filter(|o| o.period == n).count() as u64;
        let lefschetz = fixed_point_count(a, n)?;
        counts.push(serde_json::json!({"period": n, "found": found, "lefschetz": lefschetz}));
        // Nonlinear models may add pairs of opposite index.
        if ctx.cfg.model == ModelKind::Linear {
            r.require(&format!("count-{n}"), found == lefschetz);
        } else {
            r.require(&format!("count-{n}"), found >= lefschetz && (found - lefschetz) % 2 == 0);
        }
    }
    let worst = orbits.iter().map(|o| o.residual).fold(0.0, f64::max);
    r.value("counts", counts);
    r.value("max_residual", worst);
    r.require("residual", worst <= tol);
    let rows: Vec<OrbitRow> = orbits
        .iter()
        .map(|o| OrbitRow {
            period: o.period,
            prime_period: o.prime_period,
            x: o.point.x,
            y: o.point.y,
            deck_m1: o.deck_class.n1,
            deck_m2: o.deck_class.n2,
            lambda_small: o.lambda_small,
            lambda_big: o.lambda_big,
            complex: o.complex,
            residual: o.residual,
        })
        .collect();
    write_csv(ctx, r, "periodic.csv", &rows)
}

#[derive(serde::Serialize, serde::Deserialize, Clone, Debug, PartialEq)]
pub struct RigidityCsvRow {
    pub model: String,
    pub period: u32,
    pub deck_m1: i64,
    pub deck_m2: i64,
    pub x: f64,
    pub y: f64,
    pub in_lambda: bool,
    pub lambda_small: f64,
    pub lambda_big: f64,
    pub deviation: f64,
    pub residual: f64,
    pub plateau_interior: bool,
}

/// Whether `x` sits deeper than `tol` inside a nontrivial fiber.
fn plateau_interior(h: &SemiConjugacy<'_, dyn Endomorphism + '_>, x: TorusPoint, tol: f64) -> Result<bool, toral_core::semiconj::SemiError> {
    let f = fiber_interval(h, x.lift(), 64.0 * tol)?;
    Ok(f.t_minus.abs().min(f.t_plus.abs()) > tol)
}

fn rigidity(ctx: &Ctx<'_>, r: &mut CheckReport) -> CheckResult {
    let m = endo(ctx);
    let s = spec(ctx);
    let tol = ctx.cfg.tol(Tol::Rigidity);
    r.tolerance(&Tol::Rigidity.key(), tol);
    let orbits = orbits_up_to(ctx, ctx.cfg.sizes.max_period)?;
    let h = solve_h(m, ctx.cfg.sizes.depth_s, ctx.cfg.sizes.depth_u)?;
    let mtol = ctx.cfg.sizes.atlas_tol;
    let flags = ctx.pool.map(orbits.len(), |i| -> Result<(bool, bool), toral_core::semiconj::SemiError> {
        let p = orbits[i].point;
        Ok((lambda_membership(&h, p, mtol)?, plateau_interior(&h, p, mtol)?))
    });
    let flags: Vec<(bool, bool)> = flags.into_iter().collect::<Result<_, _>>()?;
    let rep = rigidity_report(m, &s, &orbits, |o| {
        let i = orbits.iter().position(|q| q == o).unwrap_or(0);
        flags[i].0
    });
    let consistent = orbits.iter().zip(&flags).all(|(_, &(member, interior))| member != interior);
    let members_dev = rep.max_deviation(true);
    r.value("target", rep.target);
    r.value("orbits", rep.rows.len());
    r.value("members", rep.members());
    r.value("max_deviation_members", members_dev);
    r.value("max_deviation_nonmembers", rep.max_deviation(false));
    r.value("flags_consistent", consistent);
    r.require("rigidity", members_dev <= tol);
    r.require("membership-consistency", consistent);
    let label = ctx.cfg.label();
    let rows: Vec<RigidityCsvRow> = rep
        .rows
        .iter()
        .map(|row| {
            let i = orbits.iter().position(|q| *q == row.orbit).unwrap_or(0);
            RigidityCsvRow {
                model: label.clone(),
                period: row.orbit.period,
                deck_m1: row.orbit.deck_class.n1,
                deck_m2: row.orbit.deck_class.n2,
                x: row.orbit.point.x,
                y: row.orbit.point.y,
                in_lambda: row.in_lambda,
                lambda_small: row.lambda_small,
                lambda_big: row.orbit.lambda_big,
                deviation: row.deviation,
                residual: row.orbit.residual,
                plateau_interior: flags[i].1,
            }
        })
        .collect();
    write_csv(ctx, r, "rigidity.csv", &rows)
}

#[derive(serde::Serialize)]
struct DecayRow {
    k: u32,
    defect: f64,
}

fn semiconj(ctx: &Ctx<'_>, r: &mut CheckReport) -> CheckResult {
    let m = endo(ctx);
    let sz = &ctx.cfg.sizes;
    let h = solve_h(m, sz.depth_s, sz.depth_u)?;
    let bound = c_h_bound(&h.spec, h.delta_norm);
    r.value("depth_s", h.depth_s);
    r.value("depth_u", h.depth_u);
    r.value("trunc_bound", h.trunc_bound);
    r.value("c_h_est", h.c_h_est);
    r.value("c_h_bound", bound);
    r.require("c_h", h.c_h_est <= bound + h.trunc_bound);

    let mut pts = sample_points(m, sz.residual_grid, 50);
    let designed = match ctx.built {
        Built::Nonspecial(g) => Some(g.shifted_sink()),
        _ => None,
    };
    pts.extend(designed);
    let tol_r = ctx.cfg.tol(Tol::ConjResidual);
    r.tolerance(&Tol::ConjResidual.key(), tol_r);
    let res = conj_residual_with(ctx.pool, &h, &pts)?;
    r.value("conj_residual", res);
    r.require("conj-residual", res <= tol_r && res <= (h.spec.mu_u.abs() + 1.0) * h.trunc_bound.max(f64::EPSILON));

    let (d1, d2) = deck_commutation_defect_with(ctx.pool, &h, &pts)?;
    let deck = d1.max(d2);
    let tol_d = ctx.cfg.tol(Tol::DeckDefect);
    r.tolerance(&Tol::DeckDefect.key(), tol_d);
    r.value("deck_defect", [d1, d2]);
    let verdict = if deck <= tol_d {
        "descends"
    } else if deck > 10.0 * h.trunc_bound {
        "does-not-descend"
    } else {
        "inconclusive"
    };
    r.verdict = Some(verdict.to_string());
    match ctx.cfg.model {
        ModelKind::Linear | ModelKind::ManeSc => r.require("deck-defect", verdict == "descends"),
        ModelKind::Nonspecial => r.require("deck-defect", verdict == "does-not-descend"),
        _ => {}
    }

    // Uniqueness: doubled depths.
    let h2 = solve_h(m, 2 * sz.depth_s, 2 * sz.depth_u)?;
    let upts = sample_points(m, 50, 30);
    let diffs = ctx.pool.map(upts.len(), |i| -> Result<f64, toral_core::models::ModelError> {
        Ok((h2.eval(upts[i])? - h.eval(upts[i])?).norm())
    });
    let mut diff = 0.0f64;
    for d in diffs {
        diff = diff.max(d?);
    }
    let tol_u = ctx.cfg.tol(Tol::Uniqueness);
    r.tolerance(&Tol::Uniqueness.key(), tol_u);
    r.value("uniqueness_diff", diff);
    r.require("uniqueness", diff <= tol_u && diff <= h.trunc_bound + h2.trunc_bound + 1e-15);

    // Stable decay, at the designed point when there is one.
    let x = designed.unwrap_or(LiftPoint::new(0.3, 0.2));
    let rows = stable_decay_check(&h, x, 20)?;
    let slope = decay_slope(&rows, 2, 4.0 * h.trunc_bound + 1e-15);
    let log_mu = h.spec.mu_s.abs().ln();
    let within = rows.iter().all(|&(k, d)| d < 2.0 * h.c_h_est * h.spec.mu_s.abs().powi(k as i32) + 4.0 * h.trunc_bound + 1e-15);
    r.value("decay_slope", slope);
    r.value("log_mu_s", log_mu);
    r.value("decay_within_bound", within);
    r.require("decay-bound", within);
    if let Some(s) = slope {
        r.require("decay-rate", s <= log_mu + 0.05);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut worst_u = 0.0f64;
    for _ in 0..50 {
        let x = LiftPoint::new(rng.random::<f64>(), rng.random::<f64>());
        let n = DeckVector::new(rng.random_range(-1000..=1000), rng.random_range(-1000..=1000));
        worst_u = worst_u.max(unstable_deck_component(&h, x, n)?);
    }
    r.value("unstable_deck_component", worst_u);
    // The e_u part vanishes identically for special models only.
    if matches!(ctx.cfg.model, ModelKind::Linear | ModelKind::ManeSc) {
        r.require("unstable-component", worst_u <= 4.0 * h.trunc_bound + 1e-15);
    }

    if let Built::ManeSc(g) = ctx.built {
        let f = fiber_interval(&h, LiftPoint::ORIGIN, 0.01)?;
        let gap = 2.0 * g.saddle_height();
        r.value("fiber_through_0", f);
        r.value("saddle_gap", gap);
        r.require("fiber-diameter", f.diameter >= 0.8 * gap && !f.clipped);
    }
    let decay: Vec<DecayRow> = rows.iter().map(|&(k, defect)| DecayRow { k, defect }).collect();
    write_csv(ctx, r, "semiconj_decay.csv", &decay)
}

fn atlas(ctx: &Ctx<'_>, r: &mut CheckReport) -> CheckResult {
    let m = endo(ctx);
    let sz = &ctx.cfg.sizes;
    let h = solve_h(m, sz.depth_s, sz.depth_u)?;
    let at = lambda_atlas_with(ctx.pool, &h, sz.atlas_grid, sz.atlas_tol)?;
    let tol = ctx.cfg.tol(Tol::AtlasInvariance);
    r.tolerance(&Tol::AtlasInvariance.key(), tol);
    r.value("grid_n", at.grid_n);
    r.value("tol", at.tol);
    r.value("members", at.members);
    r.value("invariance_defect", at.invariance_defect);
    r.value("saturation_defect", at.saturation_defect);
    r.value("min_center_log_deriv", at.min_center_log_deriv);
    r.require("center-expansion", at.min_center_log_deriv > 0.0);
    r.require("invariance", at.invariance_defect < tol);
    if let Built::ManeSc(g) = ctx.built {
        let leaf = integrate_leaf(m, LiftPoint::ORIGIN, Bundle::E2, 0.05, 2e-4)?;
        let f = fiber_interval(&h, LiftPoint::ORIGIN, 0.01)?;
        let beyond = f.t_plus + 10.0 * g.saddle_height();
        let found = plateau_cantor_probe(&h, &leaf, f.t_plus, beyond, toral_core::semiconj::PLATEAU_TOL)?;
        r.value("cantor_probe", found);
        r.require("cantor-probe", found);
    }
    write_csv(ctx, r, "lambda_atlas.csv", &at.rows)
}

fn t3_of<'a>(ctx: &Ctx<'a>) -> &'a Map3Model {
    match ctx.built {
        Built::T3(m) => m,
        _ => unreachable!("applicability is checked before running"),
    }
}

fn conservativity(ctx: &Ctx<'_>, r: &mut CheckReport) -> CheckResult {
    let m = t3_of(ctx);
    let c = m.circle();
    let samples = ctx.cfg.sizes.conservativity_samples;
    let psi_defect = c.conservativity_residual(samples);
    let full = m.conservativity_defect(samples);
    let jac0 = m.jacobian(Point3::default());
    let det = m.linear().spectrum.det as f64 * 2.0;
    let tol = ctx.cfg.tol(Tol::Conservativity);
    r.tolerance(&Tol::Conservativity.key(), tol);
    r.tolerance("psi_conservativity", 1e-8);
    r.value("psi_defect", psi_defect);
    r.value("full_defect", full);
    r.value("psi_0", c.psi(0.0));
    r.value("psi_half", c.psi(0.5) - 1.0);
    r.value("psi_deriv_0", c.psi_deriv(0.0));
    r.value("jacobian_0", jac0);
    r.value("linear_det", det);
    r.require("psi-conservative", psi_defect < 1e-8);
    r.require("psi-fixed-points", c.psi(0.0).abs() < 1e-12 && (c.psi(0.5) - 1.0).abs() < 1e-12);
    r.require("psi-expanding-at-0", c.psi_deriv(0.0) > 2.0);
    r.require("jacobian-above-det", jac0 > det);
    r.require("full-conservative", full < tol);
    Ok(())
}

#[derive(serde::Serialize)]
struct DensityRow {
    k: u32,
    covering_radius: f64,
}

fn density(ctx: &Ctx<'_>, r: &mut CheckReport) -> CheckResult {
    let s = spec(ctx);
    let sz = &ctx.cfg.sizes;
    let rows = preimage_density(s.matrix, TorusPoint::default(), sz.density_k, sz.density_grid)?;
    let pts: Vec<(f64, f64)> = rows.iter().filter(|(k, _)| *k >= 2).map(|&(k, e)| (k as f64, e.ln())).collect();
    let slope = linear_fit(&pts).map(|(a, _)| a).unwrap_or(f64::NAN);
    let target = -0.5 * (s.det.abs() as f64).ln();
    let slack = ctx.cfg.tol(Tol::DensitySlope);
    r.tolerance(&Tol::DensitySlope.key(), slack);
    r.value("slope", slope);
    r.value("target", target);
    r.require("decay-slope", slope <= target + slack);
    let out: Vec<DensityRow> = rows.into_iter().map(|(k, covering_radius)| DensityRow { k, covering_radius }).collect();
    write_csv(ctx, r, "density.csv", &out)
}
