//! Exponent algebra, admissibility windows, the Gronwall envelope for `L_n`, the
//! short-time bound, the smallness threshold and run verification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::MomentSeries;

/// Hölder conjugate `r' = r / (r - 1)`; `1 <-> inf`.
pub fn conjugate(r: f64) -> f64 {
    if r == 1.0 {
        f64::INFINITY
    } else if r.is_infinite() {
        1.0
    } else {
        r / (r - 1.0)
    }
}

/// `beta_n = (n r' + d) / (n + 1)`, infinite when `r' = inf`.
pub fn beta(n: usize, r_conj: f64, d: usize) -> f64 {
    if r_conj.is_infinite() {
        f64::INFINITY
    } else {
        (n as f64 * r_conj + d as f64) / (n as f64 + 1.0)
    }
}

/// `p'_n = r' + d / n`.
pub fn p_conj(n: usize, r_conj: f64, d: usize) -> f64 {
    r_conj + d as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentSet {
    pub d: usize,
    pub n: usize,
    pub r: f64,
    pub b: f64,
    pub r_conj: f64,
    pub a: f64,
    pub beta_4: f64,
    pub beta_n: f64,
    pub p_n_conj: f64,
    /// `p'_{n,k}` for `k = 0, 2, ..., n` (last entry infinite).
    pub p_nk_conj: Vec<f64>,
    pub theta: f64,
    #[serde(rename = "Theta")]
    pub big_theta: f64,
    #[serde(rename = "Theta0")]
    pub theta0: f64,
    #[serde(rename = "Theta1")]
    pub theta1: f64,
    /// Moment-growth exponents (`n >= 6` only; `None` otherwise).
    pub theta_regu: Option<f64>,
    pub theta0_regu: Option<f64>,
    #[serde(rename = "Theta2")]
    pub theta2: Option<f64>,
    pub eps_regu: Option<f64>,
    /// Growth exponent of `M_n`; `None` when the recurrence does not close.
    pub c_n: Option<f64>,
    /// Smallest even `n0 > d` and the matching minimal even `n` of the semiclassical estimate.
    pub n0: usize,
    pub n_semiclassical: Option<usize>,
    /// `b` in `(max(d/3, beta_4, beta_n), d/2)`.
    pub gate_k1: bool,
    /// `b` in `(max(beta_4, d/3), d/2)`.
    pub gate_k2: bool,
    /// The theorems are stated for `d >= 3`.
    pub dimension_ok: bool,
}

pub const DEFAULT_C4: f64 = 0.1;

fn regu_exponents(d: usize, n: usize, r_conj: f64, b: f64) -> (f64, f64, f64) {
    let df = d as f64;
    let nf = n as f64;
    let big = 1.0 + (nf - 1.0) / 2.0 * (beta(n - 2, r_conj, d) / b - 1.0);
    let eps = (nf * r_conj + df) / ((nf - 2.0) * r_conj + 3.0 * df)
        * (((nf - 2.0) * r_conj + df) / b - (nf - 2.0));
    let t0 = (1.0 - eps) * (1.5 - r_conj / p_conj(n - 2, r_conj, d));
    (big, t0, eps)
}

/// `c_n` through `c_n = (1 + Theta0 c_{n-2}) / (1 - Theta)` from `c_4`.
pub fn growth_exponent(d: usize, n: usize, r: f64, b: f64, c4: f64) -> Option<f64> {
    if n < 4 || n % 2 == 1 {
        return None;
    }
    let rc = conjugate(r);
    if rc.is_infinite() {
        return None;
    }
    let mut c = c4;
    let mut m = 6;
    while m <= n {
        let (big, t0, _) = regu_exponents(d, m, rc, b);
        if !(big < 1.0) {
            return None;
        }
        c = (1.0 + t0 * c) / (1.0 - big);
        m += 2;
    }
    Some(c)
}

pub fn exponents(d: usize, n: usize, r: f64, b: f64) -> ExponentSet {
    exponents_with_c4(d, n, r, b, DEFAULT_C4)
}

pub fn exponents_with_c4(d: usize, n: usize, r: f64, b: f64, c4: f64) -> ExponentSet {
    let df = d as f64;
    let nf = n as f64;
    let rc = conjugate(r);
    let a = df / b - 1.0;
    let beta_4 = beta(4, rc, d);
    let beta_n = beta(n, rc, d);
    let pn = p_conj(n, rc, d);
    let p_nk_conj = (0..=n)
        .step_by(2)
        .map(|k| if k == n { f64::INFINITY } else { nf / (nf - k as f64) * pn })
        .collect();
    let (theta_regu, theta0_regu, eps_regu) = if n >= 6 && rc.is_finite() {
        let (x, y, z) = regu_exponents(d, n, rc, b);
        (Some(x), Some(y), Some(z))
    } else {
        (None, None, None)
    };
    let theta1 = rc / b;
    let lower1 = (df / 3.0).max(beta_4).max(beta_n);
    let lower2 = beta_4.max(df / 3.0);
    let n0 = 2 * (d / 2 + 1);
    let n_semiclassical = if b > 1.0 {
        let bound = (df + b * (n0 as f64 - 1.0)) / (b - 1.0);
        let mut k = bound.ceil() as usize;
        if k % 2 == 1 {
            k += 1;
        }
        Some(k)
    } else {
        None
    };
    ExponentSet {
        d,
        n,
        r,
        b,
        r_conj: rc,
        a,
        beta_4,
        beta_n,
        p_n_conj: pn,
        p_nk_conj,
        theta: rc / pn,
        big_theta: 1.0 + a / nf,
        theta0: 1.0 - a / nf - rc / b,
        theta1,
        theta_regu,
        theta0_regu,
        theta2: theta0_regu.map(|t0| 1.5 - theta1 - t0),
        eps_regu,
        c_n: if n == 4 { Some(c4) } else { growth_exponent(d, n, r, b, c4) },
        n0,
        n_semiclassical,
        gate_k1: b > lower1 && b < df / 2.0,
        gate_k2: b > lower2 && b < df / 2.0,
        dimension_ok: d >= 3,
    }
}

impl ExponentSet {
    /// SHA-256 prefix of the exponent ledger, used to tag output files.
    pub fn ledger_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).unwrap_or_default();
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// `C_drive = c * ||grad K||_{L^{b,inf}} M_0^{Theta0} ||rho_hat||_{L^r}^{r'/b}`.
pub fn drive_constant(c: f64, weak_norm: f64, m0: f64, lebesgue: f64, exps: &ExponentSet) -> f64 {
    c * weak_norm * m0.powf(exps.theta0) * lebesgue.powf(exps.theta1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verdict {
    GlobalBound { sup: f64 },
    BlowUpHorizon { t_star: f64 },
    Inconclusive { reason: String },
}

/// Closed-form solution of `L' = C_drive L^{1 + a/n} t^{-a}` from `L(tau) = L_tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub a: f64,
    pub n: usize,
    pub c_drive: f64,
    pub l_tau: f64,
    pub tau: f64,
    /// `A = (1 - 1/a) n / C_drive` (infinite without interaction).
    pub big_a: f64,
    pub verdict: Verdict,
}

impl Envelope {
    pub fn new(a: f64, n: usize, c_drive: f64, l_tau: f64, tau: f64) -> Result<Self> {
        if !(c_drive >= 0.0) {
            return Err(Error::invalid("C_drive", "must be >= 0"));
        }
        if !(l_tau > 0.0) {
            return Err(Error::invalid("L_tau", "must be > 0"));
        }
        if !(tau > 0.0) {
            return Err(Error::invalid("tau", "must be > 0"));
        }
        let nf = n as f64;
        let big_a = if c_drive == 0.0 { f64::INFINITY } else { (1.0 - 1.0 / a) * nf / c_drive };
        let mut env = Envelope { a, n, c_drive, l_tau, tau, big_a, verdict: Verdict::Inconclusive { reason: String::new() } };
        env.verdict = if !(a > 1.0) {
            Verdict::Inconclusive { reason: format!("a = {a} <= 1: t^-a is not integrable at infinity") }
        } else {
            let head = l_tau.powf(-a / nf);
            let tail = 1.0 / (big_a * tau.powf(a - 1.0));
            if head > tail {
                Verdict::GlobalBound { sup: (head - tail).powf(-nf / a) }
            } else {
                let base = tau.powf(1.0 - a) - big_a * head;
                Verdict::BlowUpHorizon { t_star: base.powf(1.0 / (1.0 - a)) }
            }
        };
        Ok(env)
    }

    /// `[L_tau^{-a/n} - (tau^{1-a} - t^{1-a}) / A]`.
    pub fn bracket(&self, t: f64) -> f64 {
        let head = self.l_tau.powf(-self.a / self.n as f64);
        if self.big_a.is_infinite() {
            return head;
        }
        head - (self.tau.powf(1.0 - self.a) - t.powf(1.0 - self.a)) / self.big_a
    }

    /// Envelope value for `t >= tau`; infinite at and beyond a blow-up horizon.
    pub fn value(&self, t: f64) -> Result<f64> {
        if t < self.tau {
            return Err(Error::Domain(format!("envelope starts at tau = {}, got t = {t}", self.tau)));
        }
        if self.c_drive == 0.0 {
            return Ok(self.l_tau);
        }
        if let Verdict::Inconclusive { .. } = self.verdict {
            return Ok(f64::INFINITY);
        }
        let br = self.bracket(t);
        if br <= 0.0 {
            Ok(f64::INFINITY)
        } else {
            Ok(br.powf(-(self.n as f64) / self.a))
        }
    }
}

pub fn gronwall_envelope(c_drive: f64, exps: &ExponentSet, l_tau: f64, tau: f64) -> Result<Envelope> {
    Envelope::new(exps.a, exps.n, c_drive, l_tau, tau)
}

/// Sharp constant of `|u + v|^n <= 2|u|^n + C |v|^n` on the real line.
pub fn default_quasi_convexity(n: usize) -> f64 {
    let f = |s: f64| ((1.0 + s).powi(n as i32) - 2.0) / s.powi(n as i32);
    let (mut lo, mut hi) = (1e-3_f64.ln(), 1e3_f64.ln());
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let x1 = hi - golden * (hi - lo);
        let x2 = lo + golden * (hi - lo);
        if f(x1.exp()) > f(x2.exp()) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    f((0.5 * (lo + hi)).exp()).max(1.0)
}

/// Constants of the short-time bound for `L_n` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortTime {
    pub n: usize,
    pub n_init: f64,
    /// `C_T = m^{1/n} + hbar n (d + n - 2) M_0^{1/n}`.
    pub c_t: f64,
    /// Coefficient `2^n ((C_T^n + C_n m) T^{n/2} + C_n hbar M_0)` of `t^{n/2}`.
    pub coefficient: f64,
    pub t_max: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn short_time_constants(
    n_init: f64,
    m: f64,
    m0: f64,
    t_max: f64,
    hbar: f64,
    d: usize,
    n: usize,
    c_n: f64,
) -> ShortTime {
    let nf = n as f64;
    let c_t = m.powf(1.0 / nf) + hbar * nf * (d as f64 + nf - 2.0) * m0.powf(1.0 / nf);
    let inner = (c_t.powi(n as i32) + c_n * m) * t_max.powf(nf / 2.0) + c_n * hbar * m0;
    ShortTime { n, n_init, c_t, coefficient: 2f64.powi(n as i32) * inner, t_max }
}

impl ShortTime {
    pub fn bound(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.t_max) {
            return Err(Error::Domain(format!("t = {t} outside [0, T = {}]", self.t_max)));
        }
        Ok(2f64.powi(self.n as i32) * self.n_init + self.coefficient * t.powf(self.n as f64 / 2.0))
    }
}

/// `2^n (N_n^0 + t^{n/2}((C_T^n + C_n m) T^{n/2} + C_n hbar M_0))`, with the default
/// quasi-convexity constant.
#[allow(clippy::too_many_arguments)]
pub fn short_time_bound(
    n_init: f64,
    m: f64,
    m0: f64,
    t_max: f64,
    hbar: f64,
    d: usize,
    n: usize,
    t: f64,
) -> Result<f64> {
    short_time_constants(n_init, m, m0, t_max, hbar, d, n, default_quasi_convexity(n)).bound(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub a: f64,
    pub n: usize,
    #[serde(rename = "A")]
    pub big_a: f64,
    #[serde(rename = "C_T")]
    pub c_t: f64,
    #[serde(rename = "T")]
    pub t_max: f64,
    pub tau0: f64,
    pub threshold: f64,
    /// `2^n N_n^0`; absent for a pure threshold computation.
    pub start: Option<f64>,
    pub uniform_bound: Option<f64>,
    pub envelope: Option<Envelope>,
    pub envelope_samples: Vec<[f64; 2]>,
    pub verdict: Verdict,
}

/// `tau0 = min(T, (A C_T^{-a/n})^{2/(2-a)})` and
/// `threshold = 2^{-n}(A^{n/a} tau0^{n/a'} - C_T tau0^{n/2})`; `C_T` is the coefficient of
/// `t^{n/2}` in the short-time bound.
pub fn threshold_parts(a: f64, n: usize, big_a: f64, c_t: f64, t_max: f64) -> Result<(f64, f64)> {
    if !(a > 1.0 && a < 2.0) {
        return Err(Error::Regime(format!("a = {a} outside (1, 2), i.e. b outside (d/3, d/2)")));
    }
    let nf = n as f64;
    if big_a.is_infinite() {
        return Ok((t_max, f64::INFINITY));
    }
    let cap = (big_a * c_t.powf(-a / nf)).powf(2.0 / (2.0 - a));
    if cap <= t_max {
        // The two terms cancel exactly at the cap.
        return Ok((cap, 0.0));
    }
    let a_conj = a / (a - 1.0);
    let threshold =
        2f64.powi(-(n as i32)) * (big_a.powf(nf / a) * t_max.powf(nf / a_conj) - c_t * t_max.powf(nf / 2.0));
    Ok((t_max, threshold.max(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    pub exps_a: f64,
    pub n: usize,
    pub c_drive: f64,
    pub short: ShortTime,
}

pub fn smallness_threshold(p: &ThresholdParams) -> Result<CertificateReport> {
    let a = p.exps_a;
    let nf = p.n as f64;
    let big_a = if p.c_drive == 0.0 { f64::INFINITY } else { (1.0 - 1.0 / a) * nf / p.c_drive };
    let (tau0, threshold) = threshold_parts(a, p.n, big_a, p.short.coefficient, p.short.t_max)?;
    let start = 2f64.powi(p.n as i32) * p.short.n_init;
    let l_tau = start + p.short.coefficient * tau0.powf(nf / 2.0);
    let envelope = Envelope::new(a, p.n, p.c_drive, l_tau, tau0)?;
    let samples = (0..=32)
        .map(|i| {
            let t = tau0 * 10f64.powf(3.0 * i as f64 / 32.0);
            [t, envelope.value(t).unwrap_or(f64::INFINITY)]
        })
        .collect();
    let uniform_bound = match envelope.verdict {
        Verdict::GlobalBound { sup } => Some(sup),
        _ if p.c_drive == 0.0 => Some(l_tau),
        _ => None,
    };
    let verdict = if p.c_drive == 0.0 { Verdict::GlobalBound { sup: l_tau } } else { envelope.verdict.clone() };
    Ok(CertificateReport {
        a,
        n: p.n,
        big_a,
        c_t: p.short.coefficient,
        t_max: p.short.t_max,
        tau0,
        threshold,
        start: Some(start),
        uniform_bound,
        envelope: Some(envelope),
        envelope_samples: samples,
        verdict,
    })
}

impl CertificateReport {
    /// Certified upper bound on `L_n(t)`.
    pub fn bound_at(&self, t: f64) -> f64 {
        let nf = self.n as f64;
        if t <= self.tau0 {
            return self.start.unwrap_or(f64::INFINITY) + self.c_t * t.powf(nf / 2.0);
        }
        match &self.envelope {
            Some(e) if e.c_drive == 0.0 => e.l_tau,
            Some(e) => e.value(t).unwrap_or(f64::INFINITY),
            None => f64::INFINITY,
        }
    }
}

/// Least-squares slope of `log y` against `log t`.
pub fn loglog_slope(ts: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(ys)
        .filter(|(t, y)| **t > 0.0 && **y > 0.0)
        .map(|(t, y)| (t.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Samples in the last decade `[t_end / 10, t_end]`, if the series spans one.
fn last_decade(ts: &[f64], ys: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let t_end = *ts.last()?;
    let t_first = ts.iter().copied().find(|t| *t > 0.0)?;
    if t_end < 10.0 * t_first * (1.0 - 1e-12) {
        return None;
    }
    let pairs: Vec<(f64, f64)> =
        ts.iter().zip(ys).filter(|(t, _)| **t >= t_end / 10.0 * (1.0 - 1e-12)).map(|(t, y)| (*t, *y)).collect();
    Some(pairs.into_iter().unzip())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Pass,
    Fail,
    FitUnavailable,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub claim: String,
    pub measured: Option<f64>,
    pub bound: f64,
    pub margin: Option<f64>,
    pub status: RowStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub c_n: f64,
    /// `p'` of the density decay claim.
    pub p_conj: f64,
    pub lp_exponent: f64,
    /// Relative slack allowed on fitted slopes.
    pub slope_tolerance: f64,
}

pub fn verify_run(series: &MomentSeries, report: &CertificateReport, opts: &VerifyOptions) -> Result<Vec<VerdictRow>> {
    let n = report.n;
    if series.order_index(n).is_none() {
        return Err(Error::invalid("series", format!("no moment columns for n = {n}")));
    }
    let d = series.meta.d as f64;
    let ts = series.times();
    let mut rows = Vec::new();

    let l = series.column_l(n).unwrap_or_default();
    let mut worst = f64::INFINITY;
    let mut peak: f64 = 0.0;
    let mut beyond_horizon = false;
    for (t, v) in ts.iter().zip(&l) {
        let b = report.bound_at(*t);
        if b.is_infinite() {
            beyond_horizon = true;
            continue;
        }
        peak = peak.max(*v);
        worst = worst.min((b - v) / b);
    }
    let bound = report.uniform_bound.unwrap_or(f64::INFINITY);
    let status = if worst < 0.0 {
        RowStatus::Fail
    } else if beyond_horizon {
        RowStatus::Inconclusive
    } else {
        RowStatus::Pass
    };
    rows.push(VerdictRow {
        claim: format!("L_{n} below certificate envelope"),
        measured: Some(peak),
        bound,
        margin: worst.is_finite().then_some(worst),
        status,
    });

    let growth = |ys: Vec<f64>, target: f64, claim: String| -> VerdictRow {
        match last_decade(&ts, &ys).and_then(|(t, y)| loglog_slope(&t, &y)) {
            Some(s) => VerdictRow {
                claim,
                measured: Some(s),
                bound: target,
                margin: Some(target - s),
                status: if s <= target * (1.0 + opts.slope_tolerance) + 1e-12 { RowStatus::Pass } else { RowStatus::Fail },
            },
            None => VerdictRow { claim, measured: None, bound: target, margin: None, status: RowStatus::FitUnavailable },
        }
    };
    rows.push(growth(series.column_m(n).unwrap_or_default(), opts.c_n, format!("M_{n} growth exponent <= c_{n}")));
    rows.push(growth(
        series.column_n(n).unwrap_or_default(),
        n as f64 * (opts.c_n + 1.0),
        format!("N_{n} growth exponent <= n(c_{n}+1)"),
    ));

    let target = -d / opts.p_conj;
    let claim = format!("||rho||_L^{:.4} decay slope <= -d/p'", opts.lp_exponent);
    let row = match series
        .column_lp(opts.lp_exponent)
        .and_then(|ys| last_decade(&ts, &ys))
        .and_then(|(t, y)| loglog_slope(&t, &y))
    {
        Some(s) => VerdictRow {
            claim,
            measured: Some(s),
            bound: target,
            margin: Some(target * (1.0 - opts.slope_tolerance) - s),
            status: if s <= target * (1.0 - opts.slope_tolerance) { RowStatus::Pass } else { RowStatus::Fail },
        },
        None => VerdictRow { claim, measured: None, bound: target, margin: None, status: RowStatus::FitUnavailable },
    };
    rows.push(row);
    Ok(rows)
}
