//! Acceptance criteria, one pass/fail line each.
//!
//! Criteria 4 and 5 also score a measured KU100 set when `AMBIROOM_KU100`
//! names an HRTF container; without it those parts are reported as skipped.

use std::f64::consts::{PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ambiroom::array::{
    asm_filters, bsm_filters, design_grid, radial_at, steering_matrix, ArraySpec, Damping, SourceModel,
    SteeringSources, Sphere,
};
use ambiroom::bench::{run_bench, test_scene, BenchConfig, BenchResult, BenchSuite, Cell};
use ambiroom::conv::{convolve_direct, convolve_ola, ConvMode, ConvPlan};
use ambiroom::decoders::{BinauralDecoder, Processor};
use ambiroom::eval::{lsd, lsd_signals, lsd_spectra, render_brir, LsdOptions};
use ambiroom::fft::{next_pow2, n_bins};
use ambiroom::grid::{angles_to_cartesian, cartesian_to_angles, DirectionGrid};
use ambiroom::hrtf::{default_fc, magls, project_ls, resample_hrtf, HrtfSet, ShHrtf};
use ambiroom::ism::{compute_images, Absorption, RoomSpec};
use ambiroom::sh::rotation::{mat_mul, mat_vec};
use ambiroom::sh::{n_coeffs, sh_basis, sh_vector, wigner_d_matrix, EulerZyz};
use ambiroom::synth::{generate_synthetic_hrtf, SyntheticHrtfParams};
use ambiroom::SpatialSignal;
use ndarray::{s, Array2, Array3};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const KU100_ENV: &str = "AMBIROOM_KU100";
const FS: f64 = 48000.0;

// criterion 1
const IMAGE_COUNTS: [(usize, usize); 8] = [(1, 7), (2, 25), (3, 63), (4, 129), (5, 231), (6, 377), (7, 575), (8, 833)];
const IMAGE_BUDGET: Duration = Duration::from_secs(1);

// criterion 2
const ORTHONORMAL_TOL: f64 = 1e-8;
const ORTHONORMAL_MAX_ORDER: usize = 10;
const WIGNER_TOL: f64 = 1e-10;
const ROTATION_EVAL_TOL: f64 = 1e-8;
const ROTATION_TRIALS: usize = 100;
const ROTATION_MAX_ORDER: usize = 5;
const SH_BUDGET: Duration = Duration::from_secs(30);

// criterion 3
const IDENTITY_ORDER: usize = 30;
const IDENTITY_LSD_DB: f64 = 0.5;
const IDENTITY_DIRECTIONS: usize = 24;

// criteria 4 and 5
const REFERENCE_ORDER: usize = 30;
const TABLE_ISM_ORDER: usize = 5;
const KU100_TOL_DB: f64 = 1.5;
/// Published avg LSD per (order, LS, MagLS).
const KU100_ROWS: [(usize, f64, f64); 5] = [(1, 17.23, 3.45), (3, 13.85, 2.57), (5, 11.36, 2.02), (7, 9.89, 2.12), (9, 6.98, 2.09)];
const TRANSPARENCY_DB: f64 = 2.5;
const LSD_BUDGET: Duration = Duration::from_secs(300);

// criterion 6
const SOURCE_GROWTH_MAX: f64 = 3.0;
const DECODE_SPREAD_MAX: f64 = 0.20;
const TRIALS: usize = 10;

// criterion 7
const CACHE_SPEEDUP_MIN: f64 = 5.0;
const ROTATION_FRAMES: usize = 600;

// criterion 8
const OLA_SIGNAL_LENGTHS: [usize; 5] = [64, 500, 1024, 4800, 48000];
const OLA_FIR_LENGTHS: [usize; 4] = [8, 32, 128, 512];
const OLA_REL_TOL: f64 = 1e-9;
const OLA_TIMING_RUNS: usize = 7;

// criterion 9
const EXPANSION_TOL: f64 = 1e-3;
const EXPANSION_KA_MAX: f64 = 3.0;
const EXPANSION_SM_ORDER: usize = 25;
const ASM_ORDER: usize = 3;
const ASM_RADIUS: f64 = 0.042;
const ASM_SM_ORDER: usize = 8;
const ASM_DAMPING: Damping = Damping::Relative(1e-9);
const ASM_ROUND_TRIP_DB: f64 = -20.0;
const ASM_RANDOM_FIELDS: usize = 20;
const BSM_ORDER: usize = 6;
const BSM_RADIUS: f64 = 0.1;
const BSM_LSD_DB: f64 = 1.0;
const BSM_HRTF_ORDER: usize = 15;
const FAR_FIELD_DISTANCE: f64 = 100.0;
const FAR_FIELD_TOL: f64 = 1e-2;
const BAND_LO: f64 = 200.0;
const ENCODER_NFFT: usize = 512;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

impl Outcome {
    fn check(ok: bool, detail: String) -> Self {
        Self {
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
        }
    }

    fn skip(detail: impl Into<String>) -> Self {
        Self {
            status: Status::Skip,
            detail: detail.into(),
        }
    }
}

fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn synthetic_set() -> HrtfSet {
    generate_synthetic_hrtf(&SyntheticHrtfParams::default()).expect("synthetic HRTF")
}

fn ku100() -> Option<Result<HrtfSet, String>> {
    let path = std::env::var_os(KU100_ENV)?;
    let load = || -> ambiroom::Result<HrtfSet> {
        let set = HrtfSet::load(&path)?;
        if (set.fs() - FS).abs() > 1e-9 {
            return resample_hrtf(&set, FS);
        }
        Ok(set)
    };
    Some(load().map_err(|e| format!("{}: {e}", path.to_string_lossy())))
}

fn image_counts() -> Outcome {
    let t = Instant::now();
    let mut wrong = Vec::new();
    for (order, expected) in IMAGE_COUNTS {
        let room = RoomSpec::new([6.0, 5.0, 3.0], Absorption::uniform(0.4), order, FS).unwrap();
        let n = compute_images(&room, [4.0, 4.0, 1.5], [2.0, 2.0, 1.5]).unwrap().len();
        if n != expected {
            wrong.push(format!("order {order}: {n} != {expected}"));
        }
    }
    let took = t.elapsed();
    Outcome::check(
        wrong.is_empty() && took < IMAGE_BUDGET,
        format!(
            "orders 1..8 {} in {:.3} s (budget {:.0} s)",
            if wrong.is_empty() { "exact".to_string() } else { wrong.join(", ") },
            took.as_secs_f64(),
            IMAGE_BUDGET.as_secs_f64()
        ),
    )
}

/// Intrinsic z-y-z angles of a rotation matrix.
fn euler_of(r: [[f64; 3]; 3]) -> EulerZyz {
    let beta = r[2][2].clamp(-1.0, 1.0).acos();
    if beta.sin() < 1e-9 {
        // only alpha + gamma (or alpha - gamma) is defined
        let a = r[1][0].atan2(r[0][0]);
        return EulerZyz::new(a, beta, 0.0);
    }
    EulerZyz::new(r[1][2].atan2(r[0][2]), beta, r[2][1].atan2(-r[2][0]))
}

fn random_euler(rng: &mut StdRng) -> EulerZyz {
    EulerZyz::new(rng.random_range(0.0..TAU), rng.random_range(0.0..PI), rng.random_range(0.0..TAU))
}

fn sh_machinery() -> Outcome {
    let t = Instant::now();
    let mut ortho: f64 = 0.0;
    for n in 0..=ORTHONORMAL_MAX_ORDER {
        let grid = DirectionGrid::for_order(n);
        let y = sh_basis(&grid, n).into_inner();
        let mut yw = y.clone();
        for (mut row, w) in yw.rows_mut().into_iter().zip(grid.weights()) {
            row *= *w;
        }
        let g = y.t().dot(&yw);
        ortho = ortho.max(max_abs(&g, &Array2::eye(n_coeffs(n))));
    }

    let mut rng = StdRng::seed_from_u64(2024);
    let (mut orth_d, mut compose, mut eval) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..ROTATION_TRIALS {
        let order = i % (ROTATION_MAX_ORDER + 1);
        let (e1, e2) = (random_euler(&mut rng), random_euler(&mut rng));
        let d1 = wigner_d_matrix(order, e1.alpha, e1.beta, e1.gamma).matrix();
        let d2 = wigner_d_matrix(order, e2.alpha, e2.beta, e2.gamma).matrix();
        let eye = Array2::eye(n_coeffs(order));
        orth_d = orth_d.max(max_abs(&d1.t().dot(&d1), &eye));
        let e12 = euler_of(mat_mul(e1.matrix(), e2.matrix()));
        let d12 = wigner_d_matrix(order, e12.alpha, e12.beta, e12.gamma).matrix();
        compose = compose.max(max_abs(&d1.dot(&d2), &d12));

        // rotated coefficients seen at x equal the original field at R^-1 x
        let c: Vec<f64> = (0..n_coeffs(order)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rotated = d1.dot(&ndarray::Array1::from(c.clone()));
        let r_inv = e1.inverse().matrix();
        for _ in 0..5 {
            let x = angles_to_cartesian(rng.random_range(0.0..TAU), rng.random_range(-1.5..1.5));
            let (az, el) = cartesian_to_angles(x);
            let (az0, el0) = cartesian_to_angles(mat_vec(r_inv, x));
            let lhs: f64 = sh_vector(order, az, el).iter().zip(rotated.iter()).map(|(y, v)| y * v).sum();
            let rhs: f64 = sh_vector(order, az0, el0).iter().zip(&c).map(|(y, v)| y * v).sum();
            eval = eval.max((lhs - rhs).abs());
        }
    }
    let took = t.elapsed();
    Outcome::check(
        ortho < ORTHONORMAL_TOL && orth_d < WIGNER_TOL && compose < WIGNER_TOL && eval < ROTATION_EVAL_TOL && took < SH_BUDGET,
        format!(
            "orthonormality {ortho:.1e} (< {ORTHONORMAL_TOL:.0e}, N <= {ORTHONORMAL_MAX_ORDER}); D^T D {orth_d:.1e}, \
             composition {compose:.1e} (< {WIGNER_TOL:.0e}); rotate-then-evaluate {eval:.1e} (< {ROTATION_EVAL_TOL:.0e}, \
             {ROTATION_TRIALS} rotations, N <= {ROTATION_MAX_ORDER}); {:.2} s",
            took.as_secs_f64()
        ),
    )
}

/// Worst LSD of a plane wave from grid directions, decoded at `order`,
/// against the stored HRIR pair.
fn identity_lsd(set: &HrtfSet, order: usize) -> f64 {
    let h = project_ls(set, order, next_pow2(set.taps())).unwrap();
    let dec = BinauralDecoder::new(&h);
    let opts = LsdOptions::default();
    let step = (set.n_dirs() / IDENTITY_DIRECTIONS).max(1);
    let mut worst: f64 = 0.0;
    for idx in (0..set.n_dirs()).step_by(step) {
        let (az, el) = set.grid().direction(idx);
        let y = sh_vector(order, az, el);
        let x = Array3::from_shape_fn((1, y.len(), 1), |(_, q, _)| y[q]);
        let sig = SpatialSignal::time_sh(x, set.fs(), order).unwrap();
        let out = dec.process(&sig).unwrap();
        let brir = out.real().unwrap().slice(s![0, .., ..]).to_owned();
        let hrir = set.irs().slice(s![idx, .., ..]).to_owned();
        worst = worst.max(lsd(brir.view(), hrir.view(), set.fs(), &opts).unwrap().lsd_avg);
    }
    worst
}

fn binaural_identity(ku: &Option<Result<HrtfSet, String>>) -> Outcome {
    let synth = identity_lsd(&synthetic_set(), IDENTITY_ORDER);
    let mut ok = synth <= IDENTITY_LSD_DB;
    let mut detail = format!("synthetic set, N={IDENTITY_ORDER} LS: worst {synth:.3} dB over {IDENTITY_DIRECTIONS} directions (<= {IDENTITY_LSD_DB} dB)");
    match ku {
        Some(Ok(set)) => {
            let v = identity_lsd(set, IDENTITY_ORDER);
            ok &= v <= IDENTITY_LSD_DB;
            detail += &format!("; KU100 worst {v:.3} dB");
        }
        Some(Err(e)) => {
            ok = false;
            detail += &format!("; KU100 unreadable: {e}");
        }
        None => detail += &format!("; KU100 skipped ({KU100_ENV} unset)"),
    }
    Outcome::check(ok, detail)
}

struct LsdTable {
    /// `(order, LS avg, MagLS avg)`.
    rows: Vec<(usize, f64, f64)>,
}

impl LsdTable {
    fn avg(&self, order: usize, magls: bool) -> f64 {
        let r = self.rows.iter().find(|r| r.0 == order).expect("order in table");
        if magls {
            r.2
        } else {
            r.1
        }
    }
}

fn lsd_table(set: &HrtfSet, orders: &[usize]) -> LsdTable {
    let nfft = next_pow2(set.taps());
    let opts = LsdOptions::default();
    let brir = |order: usize, h: &ShHrtf| {
        let scene = test_scene(TABLE_ISM_ORDER, order, 1, FS).unwrap();
        render_brir(&scene, &BinauralDecoder::new(h)).unwrap()
    };
    let reference = brir(REFERENCE_ORDER, &project_ls(set, REFERENCE_ORDER, nfft).unwrap());
    let rows = orders
        .iter()
        .map(|&n| {
            let ls = brir(n, &project_ls(set, n, nfft).unwrap());
            let mag = brir(n, &magls(set, n, default_fc(n), nfft).unwrap());
            (
                n,
                lsd_signals(&ls, &reference, &opts).unwrap().lsd_avg,
                lsd_signals(&mag, &reference, &opts).unwrap().lsd_avg,
            )
        })
        .collect();
    LsdTable { rows }
}

fn magls_ordering(ku: &Option<Result<HrtfSet, String>>, ku_table: &Option<LsdTable>) -> Outcome {
    let t = Instant::now();
    let tab = lsd_table(&synthetic_set(), &[3, 7]);
    let (m3, l7, l3) = (tab.avg(3, true), tab.avg(7, false), tab.avg(3, false));
    let mut ok = m3 < l7 && l7 < l3;
    let mut detail = format!("synthetic: N=3 MagLS {m3:.2} < N=7 LS {l7:.2} < N=3 LS {l3:.2} dB");
    match (ku, ku_table) {
        (Some(Ok(_)), Some(kt)) => {
            let mut worst: f64 = 0.0;
            for (n, ls, mag) in KU100_ROWS {
                worst = worst.max((kt.avg(n, false) - ls).abs()).max((kt.avg(n, true) - mag).abs());
            }
            ok &= worst <= KU100_TOL_DB;
            let rows: Vec<String> = kt.rows.iter().map(|(n, l, m)| format!("N={n} {l:.2}/{m:.2}")).collect();
            detail += &format!("; KU100 LS/MagLS {}, worst deviation {worst:.2} dB (<= {KU100_TOL_DB})", rows.join(" "));
        }
        (Some(Err(e)), _) => {
            ok = false;
            detail += &format!("; KU100 unreadable: {e}");
        }
        _ => detail += &format!("; KU100 table skipped ({KU100_ENV} unset)"),
    }
    let took = t.elapsed();
    ok &= took < LSD_BUDGET;
    detail += &format!("; {:.1} s", took.as_secs_f64());
    Outcome::check(ok, detail)
}

fn transparency(ku: &Option<Result<HrtfSet, String>>, ku_table: &Option<LsdTable>) -> Outcome {
    match (ku, ku_table) {
        (Some(Ok(_)), Some(kt)) => {
            let v = kt.avg(5, true);
            Outcome::check(v <= TRANSPARENCY_DB, format!("KU100 N=5 MagLS avg LSD {v:.2} dB (<= {TRANSPARENCY_DB} dB)"))
        }
        (Some(Err(e)), _) => Outcome::check(false, format!("KU100 unreadable: {e}")),
        _ => Outcome::skip(format!("needs the measured KU100 set; set {KU100_ENV} to an HRTF container")),
    }
}

fn bench_config() -> BenchConfig {
    BenchConfig {
        trials: TRIALS,
        ..Default::default()
    }
}

fn timing_median(r: &BenchResult, name: &str) -> f64 {
    r.timing(name).unwrap_or_else(|| panic!("{} lacks {name}", r.scenario)).median
}

fn decode_amortization(sources: &[BenchResult]) -> Outcome {
    let total: Vec<f64> = sources.iter().map(|r| timing_median(r, "sh_pipeline")).collect();
    let decode: Vec<f64> = sources.iter().map(|r| timing_median(r, "decode")).collect();
    let growth = total[total.len() - 1] / total[0];
    let (lo, hi) = decode.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    let spread = hi / lo - 1.0;
    let means: Vec<String> = sources
        .iter()
        .map(|r| format!("{:.4}", r.timing("sh_pipeline").unwrap().mean))
        .collect();
    Outcome::check(
        growth <= SOURCE_GROWTH_MAX && spread < DECODE_SPREAD_MAX,
        format!(
            "K=8/K=1 pipeline x{growth:.2} (<= {SOURCE_GROWTH_MAX}); decode spread {:.1}% (< {:.0}%) over K=1,2,4,8; \
             medians of {TRIALS} trials, means {} s",
            100.0 * spread,
            100.0 * DECODE_SPREAD_MAX,
            means.join("/")
        ),
    )
}

fn rotation_caching(rotation: &BenchResult) -> Outcome {
    let build = timing_median(rotation, "frame_build_apply");
    let cached = timing_median(rotation, "frame_cached");
    let ratio = build / cached;
    let ism = rotation.count("ism_runs_during_cached");
    let frames = rotation.count("frames");
    Outcome::check(
        ratio >= CACHE_SPEEDUP_MIN && ism == Some(0) && frames == Some(ROTATION_FRAMES as u64),
        format!(
            "N=3 per frame build+apply {:.3} ms vs cached {:.3} ms, x{ratio:.1} (>= {CACHE_SPEEDUP_MIN}); \
             ISM runs during the {ROTATION_FRAMES}-frame cached sweep: {}",
            1e3 * build,
            1e3 * cached,
            ism.map_or("missing".into(), |v| v.to_string())
        ),
    )
}

fn ola_plan(n_fir: usize) -> ConvPlan {
    let block = 4 * next_pow2(n_fir);
    ConvPlan {
        mode: ConvMode::OverlapAdd,
        block,
        nfft: next_pow2(block + n_fir - 1),
    }
}

fn ola_engine() -> Outcome {
    let mut rng = StdRng::seed_from_u64(88);
    let (mut rule_errors, mut worst) = (0, 0.0f64);
    for n_sig in OLA_SIGNAL_LENGTHS {
        for n_fir in OLA_FIR_LENGTHS {
            let expect_ola = n_fir * 8 < n_sig;
            if (ConvPlan::new(n_sig, n_fir).mode == ConvMode::OverlapAdd) != expect_ola {
                rule_errors += 1;
            }
            let x: Vec<f64> = (0..n_sig).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..n_fir).map(|_| rng.random_range(-1.0..1.0)).collect();
            let direct = convolve_direct(&x, &h);
            let ola = convolve_ola(&x, &h, ola_plan(n_fir));
            let peak = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = direct.iter().zip(&ola).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(if ola.len() == direct.len() { err / peak } else { f64::INFINITY });
        }
    }
    let x: Vec<f64> = (0..48000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
    let plan = ConvPlan::new(x.len(), h.len());
    let time = |f: &dyn Fn() -> Vec<f64>| {
        median(
            (0..OLA_TIMING_RUNS)
                .map(|_| {
                    let t = Instant::now();
                    std::hint::black_box(f());
                    t.elapsed().as_secs_f64()
                })
                .collect(),
        )
    };
    let t_direct = time(&|| convolve_direct(&x, &h));
    let t_ola = time(&|| convolve_ola(&x, &h, plan));
    let cases = OLA_SIGNAL_LENGTHS.len() * OLA_FIR_LENGTHS.len();
    Outcome::check(
        rule_errors == 0 && worst < OLA_REL_TOL && plan.mode == ConvMode::OverlapAdd && t_ola < t_direct,
        format!(
            "rule exact on {}/{cases} cases; OLA vs direct {worst:.1e} relative (< {OLA_REL_TOL:.0e}); \
             48000x128: OLA {:.2} ms vs direct {:.2} ms",
            cases - rule_errors,
            1e3 * t_ola,
            1e3 * t_direct
        ),
    )
}

/// Worst `|V - exp(i k r_p . x_s)|` for an open sphere at `ka <= 3`.
fn expansion_error() -> f64 {
    let a = ASM_RADIUS;
    let caps = Arc::new(DirectionGrid::icosadodecahedral32());
    let spec = ArraySpec::new(caps.clone(), a, Sphere::Open, SourceModel::PlaneWave, EXPANSION_SM_ORDER, FS)
        .unwrap()
        .with_mask(None);
    let src = Arc::new(DirectionGrid::for_order(3));
    let v = steering_matrix(&spec, &SteeringSources::Directions(src.clone()), ENCODER_NFFT).unwrap();
    let mut worst: f64 = 0.0;
    for (b, f) in v.freqs.iter().enumerate() {
        let k = TAU * f / spec.c;
        if k * a > EXPANSION_KA_MAX {
            break;
        }
        for p in 0..caps.n_dirs() {
            let xp = caps.unit_vector(p);
            for si in 0..src.n_dirs() {
                let xs = src.unit_vector(si);
                let cos = xp[0] * xs[0] + xp[1] * xs[1] + xp[2] * xs[2];
                let exact = Complex64::from_polar(1.0, k * a * cos);
                worst = worst.max((v.v[[b, p, si]] - exact).norm());
            }
        }
    }
    worst
}

/// Worst per-bin `10 log10(|W p - c|^2 / |c|^2)` over random order-3
/// fields in `[200 Hz, f_alias]`; `p` is built from `B_n` and capsule
/// harmonics directly.
fn asm_round_trip_db() -> (f64, f64) {
    let caps = Arc::new(DirectionGrid::icosadodecahedral32());
    let spec = ArraySpec::new(caps.clone(), ASM_RADIUS, Sphere::Rigid, SourceModel::PlaneWave, ASM_SM_ORDER, FS)
        .unwrap()
        .with_mask(None);
    let f_alias = spec.aliasing_frequency(ASM_ORDER);
    let v = steering_matrix(&spec, &SteeringSources::Directions(Arc::new(design_grid(ASM_ORDER, ASM_SM_ORDER))), ENCODER_NFFT)
        .unwrap();
    let w = asm_filters(&v, ASM_ORDER, ASM_DAMPING).unwrap();
    let q = n_coeffs(ASM_ORDER);
    let y_caps: Vec<Vec<f64>> = (0..caps.n_dirs())
        .map(|p| {
            let (az, el) = caps.direction(p);
            sh_vector(ASM_ORDER, az, el)
        })
        .collect();
    let mut rng = StdRng::seed_from_u64(5);
    let fields: Vec<Vec<f64>> = (0..ASM_RANDOM_FIELDS)
        .map(|_| (0..q).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for (b, f) in v.freqs.iter().enumerate() {
        if *f < BAND_LO || *f > f_alias {
            continue;
        }
        let radial = radial_at(Sphere::Rigid, ASM_RADIUS, TAU * f / spec.c, None, ASM_ORDER).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for c in &fields {
            let p: Vec<Complex64> = y_caps
                .iter()
                .map(|yp| {
                    (0..q)
                        .map(|i| radial[ambiroom::sh::degree_order(i).0] * yp[i] * c[i])
                        .sum()
                })
                .collect();
            for i in 0..q {
                let est: Complex64 = (0..caps.n_dirs()).map(|m| w[[b, i, m]] * p[m]).sum();
                num += (est - c[i]).norm_sqr();
                den += c[i] * c[i];
            }
        }
        worst = worst.max(10.0 * (num / den).log10());
    }
    (worst, f_alias)
}

/// Worst LSD between BSM output and ASM followed by an SH binaural decode,
/// for plane waves on a high-order rigid array below its aliasing frequency.
fn bsm_vs_asm_lsd() -> (f64, f64) {
    let caps = Arc::new(DirectionGrid::for_order(BSM_ORDER));
    let sm_order = BSM_ORDER + 6;
    let spec = ArraySpec::new(caps.clone(), BSM_RADIUS, Sphere::Rigid, SourceModel::PlaneWave, sm_order, FS)
        .unwrap()
        .with_mask(None);
    let f_alias = spec.aliasing_frequency(BSM_ORDER);
    let set = generate_synthetic_hrtf(&SyntheticHrtfParams {
        max_order: BSM_HRTF_ORDER,
        grid: Arc::new(DirectionGrid::for_order(BSM_HRTF_ORDER)),
        ..Default::default()
    })
    .unwrap();
    let damping = Damping::default();
    let v = steering_matrix(&spec, &SteeringSources::Directions(Arc::new(design_grid(BSM_ORDER, sm_order))), ENCODER_NFFT)
        .unwrap();
    let w_asm = asm_filters(&v, BSM_ORDER, damping).unwrap();
    let v_h = steering_matrix(&spec, &SteeringSources::Directions(set.grid().clone()), ENCODER_NFFT).unwrap();
    let w_bsm = bsm_filters(&v_h, &set, damping, None).unwrap();
    let h = project_ls(&set, BSM_ORDER, ENCODER_NFFT).unwrap();
    let test = Arc::new(DirectionGrid::for_order(3));
    let vt = steering_matrix(&spec, &SteeringSources::Directions(test.clone()), ENCODER_NFFT).unwrap();
    let opts = LsdOptions {
        f_lo: BAND_LO,
        f_hi: f_alias,
        ..Default::default()
    };
    let (q, m, nb) = (n_coeffs(BSM_ORDER), caps.n_dirs(), n_bins(ENCODER_NFFT));
    let mut worst: f64 = 0.0;
    for si in 0..test.n_dirs() {
        let mut bsm = Array2::<Complex64>::zeros((2, nb));
        let mut asm = Array2::<Complex64>::zeros((2, nb));
        for b in 0..nb {
            let coeffs: Vec<Complex64> = (0..q).map(|i| (0..m).map(|p| w_asm[[b, i, p]] * vt.v[[b, p, si]]).sum()).collect();
            for e in 0..2 {
                bsm[[e, b]] = (0..m).map(|p| w_bsm[[e, b, p]] * vt.v[[b, p, si]]).sum();
                asm[[e, b]] = (0..q).map(|i| h.coeffs()[[i, e, b]] * coeffs[i]).sum();
            }
        }
        worst = worst.max(lsd_spectra(bsm.view(), asm.view(), &vt.freqs, &opts).unwrap().lsd_avg);
    }
    (worst, f_alias)
}

/// Relative distance between point-source and plane-wave steering at 100 m.
fn far_field_error() -> f64 {
    let caps = Arc::new(DirectionGrid::icosadodecahedral32());
    let dirs = Arc::new(DirectionGrid::for_order(2));
    let plane = ArraySpec::new(caps.clone(), ASM_RADIUS, Sphere::Rigid, SourceModel::PlaneWave, ASM_SM_ORDER, FS).unwrap();
    let point = ArraySpec::new(caps, ASM_RADIUS, Sphere::Rigid, SourceModel::PointSource, ASM_SM_ORDER, FS).unwrap();
    let positions: Vec<[f64; 3]> = (0..dirs.n_dirs())
        .map(|i| dirs.unit_vector(i).map(|c| c * FAR_FIELD_DISTANCE))
        .collect();
    let vp = steering_matrix(&plane, &SteeringSources::Directions(dirs), ENCODER_NFFT).unwrap();
    let vs = steering_matrix(&point, &SteeringSources::Positions(positions), ENCODER_NFFT).unwrap();
    let num: f64 = vp.v.iter().zip(vs.v.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = vp.v.iter().map(|a| a.norm_sqr()).sum();
    (num / den).sqrt()
}

fn encoder_suite() -> Outcome {
    let expansion = expansion_error();
    let (asm, f_asm) = asm_round_trip_db();
    let (bsm, f_bsm) = bsm_vs_asm_lsd();
    let far = far_field_error();
    Outcome::check(
        expansion < EXPANSION_TOL && asm < ASM_ROUND_TRIP_DB && bsm <= BSM_LSD_DB && far < FAR_FIELD_TOL,
        format!(
            "plane-wave expansion {expansion:.1e} (< {EXPANSION_TOL:.0e}, ka <= {EXPANSION_KA_MAX}); \
             ASM N={ASM_ORDER} round trip worst {asm:.1} dB in [{BAND_LO:.0}, {f_asm:.0}] Hz (< {ASM_ROUND_TRIP_DB}); \
             BSM vs ASM+decode worst {bsm:.2} dB in [{BAND_LO:.0}, {f_bsm:.0}] Hz (<= {BSM_LSD_DB}); \
             point vs plane at {FAR_FIELD_DISTANCE:.0} m {far:.1e} (< {FAR_FIELD_TOL:.0e})"
        ),
    )
}

fn names(r: &BenchResult) -> Vec<&str> {
    r.cells.iter().map(|(n, _)| n.as_str()).collect()
}

fn table_shapes(sh: &[BenchResult], ism: &[BenchResult], sources: &[BenchResult], rotation: &[BenchResult]) -> Outcome {
    let mut problems = Vec::new();
    let mut expect = |ok: bool, what: String| {
        if !ok {
            problems.push(what);
        }
    };
    let sh_cols = ["n", "channels", "images", "arir", "decode", "sh_pipeline", "sh_baseline", "nn_baseline", "sh_pipeline_over_nn"];
    let sh_rows: Vec<(u64, u64)> = [1u64, 3, 5, 7, 9, 12].iter().map(|&n| (n, (n + 1) * (n + 1))).collect();
    expect(sh.len() == sh_rows.len(), format!("SH-order rows {}", sh.len()));
    for (r, (n, ch)) in sh.iter().zip(&sh_rows) {
        expect(names(r) == sh_cols, format!("SH-order columns {:?}", names(r)));
        expect(r.count("n") == Some(*n) && r.count("channels") == Some(*ch), format!("{} channels", r.scenario));
        expect(r.count("images") == Some(231), format!("{} images", r.scenario));
    }
    let ism_cols = ["order", "images", "sh_pipeline", "sh_baseline", "nn_baseline", "sh_pipeline_over_nn"];
    expect(ism.len() == IMAGE_COUNTS.len(), format!("ISM-order rows {}", ism.len()));
    for (r, (o, n)) in ism.iter().zip(IMAGE_COUNTS) {
        expect(names(r) == ism_cols, format!("ISM-order columns {:?}", names(r)));
        expect(r.count("order") == Some(o as u64) && r.count("images") == Some(n as u64), format!("{} images", r.scenario));
    }
    let src_cols = ["sources", "images", "arir", "decode", "sh_pipeline", "sh_baseline", "nn_baseline", "sh_pipeline_over_nn"];
    expect(sources.len() == 4, format!("source rows {}", sources.len()));
    for (r, k) in sources.iter().zip([1u64, 2, 4, 8]) {
        expect(names(r) == src_cols, format!("source columns {:?}", names(r)));
        expect(r.count("sources") == Some(k) && r.count("images") == Some(231 * k), format!("{} images", r.scenario));
    }
    let rot_rows = ["SH pipeline N=3", "NN baseline (ISM 5)", "SH baseline N=3 (ISM 5)"];
    let rot_cols = [
        "frames",
        "channels",
        "images",
        "init",
        "frame_build_apply",
        "frame_cached",
        "sweep_build_apply",
        "sweep_cached",
        "build_over_cached",
        "ism_runs_during_cached",
    ];
    expect(
        rotation.iter().map(|r| r.scenario.as_str()).collect::<Vec<_>>() == rot_rows,
        format!("rotation rows {:?}", rotation.iter().map(|r| &r.scenario).collect::<Vec<_>>()),
    );
    for r in rotation {
        expect(names(r) == rot_cols, format!("rotation columns {:?}", names(r)));
        expect(
            r.count("frames") == Some(ROTATION_FRAMES as u64) && r.count("channels") == Some(16),
            format!("{} frames/channels", r.scenario),
        );
        let cached_only = matches!(r.get("frame_cached"), Some(Cell::Time(_)));
        expect(cached_only == r.scenario.starts_with("SH pipeline"), format!("{} cached cells", r.scenario));
    }
    let rows = sh.len() + ism.len() + sources.len() + rotation.len();
    let mut csv = Vec::new();
    let csv_ok = ambiroom::bench::write_csv(
        &sh.iter().chain(ism).chain(sources).chain(rotation).cloned().collect::<Vec<_>>(),
        &bench_config(),
        &mut csv,
    )
    .is_ok();
    let csv_lines = String::from_utf8_lossy(&csv).lines().count();
    expect(csv_ok && csv_lines == rows + 4, format!("CSV lines {csv_lines}"));
    Outcome::check(
        problems.is_empty(),
        if problems.is_empty() {
            format!("SH-order 6x{}, ISM-order 8x{}, sources 4x{}, rotation 3x{} cells; image and channel counts exact; CSV {rows} rows in 4 blocks", sh_cols.len(), ism_cols.len(), src_cols.len(), rot_cols.len())
        } else {
            problems.join("; ")
        },
    )
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Outcome::check(false, format!("panicked: {msg}"))
    });
    let tag = match outcome.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Skip => "SKIP",
    };
    println!("criterion {id:>2} [{tag}] {name}: {} ({:.1} s)", outcome.detail, t.elapsed().as_secs_f64());
    !matches!(outcome.status, Status::Fail)
}

fn main() -> ExitCode {
    let ku = ku100();
    let ku_table = match &ku {
        Some(Ok(set)) => Some(lsd_table(set, &KU100_ROWS.map(|r| r.0))),
        _ => None,
    };
    let mut ok = true;
    ok &= run(1, "image counts", image_counts);
    ok &= run(2, "SH machinery", sh_machinery);
    ok &= run(3, "binaural identity", || binaural_identity(&ku));
    ok &= run(4, "MagLS ordering", || magls_ordering(&ku, &ku_table));
    ok &= run(5, "perceptual transparency", || transparency(&ku, &ku_table));

    let cfg = bench_config();
    let sources = run_bench(&[BenchSuite::Sources], &cfg);
    let rotation = run_bench(
        &[BenchSuite::Rotation],
        &BenchConfig {
            rotation_baselines: false,
            ..cfg.clone()
        },
    );
    ok &= run(6, "decode amortization", || decode_amortization(sources.as_ref().expect("sources suite")));
    ok &= run(7, "rotation caching", || rotation_caching(&rotation.as_ref().expect("rotation suite")[0]));
    ok &= run(8, "OLA engine", ola_engine);
    ok &= run(9, "steering and encoders", encoder_suite);
    ok &= run(10, "bench table shapes", || {
        let quick = BenchConfig {
            trials: 1,
            warmup: 0,
            ..Default::default()
        };
        let sh = run_bench(&[BenchSuite::ShOrder], &quick).unwrap();
        let ism = run_bench(&[BenchSuite::IsmOrder], &quick).unwrap();
        let rot = run_bench(&[BenchSuite::Rotation], &quick).unwrap();
        table_shapes(&sh, &ism, sources.as_ref().expect("sources suite"), &rot)
    });
    println!("acceptance: {}", if ok { "all criteria met" } else { "FAILED" });
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
