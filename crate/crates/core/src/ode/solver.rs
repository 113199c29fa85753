//! Adaptive Dormand–Prince 5(4) and fixed-step RK4 on flat state vectors,
//! with cubic Hermite dense output over the stored nodes.

use crate::{Error, Result};

/// Absolute/relative tolerance pair for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tol {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tol {
    fn default() -> Self {
        Tol {
            abs: 1e-9,
            rel: 1e-9,
        }
    }
}

impl Tol {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tol { abs, rel }
    }
}

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub tol: Tol,
    pub h_max: f64,
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            tol: Tol::default(),
            h_max: 1.0,
            h_init: None,
            max_steps: 50_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: Tol) -> Self {
        OdeOptions {
            tol,
            ..OdeOptions::default()
        }
    }
}

/// Accepted integration nodes: times, states, and state derivatives, flat
/// row-major with `dim` entries per node. Adaptive runs also carry the
/// method's quartic dense-output coefficients per interval; paths built
/// from plain nodes fall back to cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct RawPath {
    pub dim: usize,
    pub ts: Vec<f64>,
    pub ys: Vec<f64>,
    pub dys: Vec<f64>,
    /// Dense-output extras, 3 vectors of `dim` per interval (empty for
    /// node-only paths).
    pub cont: Vec<f64>,
}

impl RawPath {
    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    pub fn y(&self, node: usize) -> &[f64] {
        &self.ys[node * self.dim..(node + 1) * self.dim]
    }

    pub fn dy(&self, node: usize) -> &[f64] {
        &self.dys[node * self.dim..(node + 1) * self.dim]
    }

    pub fn t_start(&self) -> f64 {
        self.ts[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    fn span_contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.t_start() <= self.t_end() {
            (self.t_start(), self.t_end())
        } else {
            (self.t_end(), self.t_start())
        };
        t >= lo - 1e-12 * (1.0 + hi.abs()) && t <= hi + 1e-12 * (1.0 + hi.abs())
    }

    /// Index of the node interval containing `t` (monotone ts, either
    /// direction).
    fn locate(&self, t: f64) -> usize {
        let n = self.ts.len();
        let forward = self.ts[n - 1] >= self.ts[0];
        let idx = if forward {
            self.ts.partition_point(|&s| s <= t)
        } else {
            self.ts.partition_point(|&s| s >= t)
        };
        idx.clamp(1, n - 1) - 1
    }

    /// Dense evaluation of the state at `t`: the solver's own quartic
    /// interpolant when available, cubic Hermite otherwise.
    pub fn eval(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if !self.span_contains(t) {
            let (lo, hi) = (
                self.t_start().min(self.t_end()),
                self.t_start().max(self.t_end()),
            );
            return Err(Error::OutOfRange { t, lo, hi });
        }
        let i = self.locate(t);
        let (t0, t1) = (self.ts[i], self.ts[i + 1]);
        let h = t1 - t0;
        if h == 0.0 {
            out.copy_from_slice(self.y(i));
            return Ok(());
        }
        let s = (t - t0) / h;
        let y0 = self.y(i);
        let y1 = self.y(i + 1);
        if !self.cont.is_empty() {
            let s1 = 1.0 - s;
            let c = &self.cont[i * 3 * self.dim..(i + 1) * 3 * self.dim];
            let (bspl, rest) = c.split_at(self.dim);
            let (c4, c5) = rest.split_at(self.dim);
            for j in 0..self.dim {
                let ydiff = y1[j] - y0[j];
                out[j] = y0[j] + s * (ydiff + s1 * (bspl[j] + s * (c4[j] + s1 * c5[j])));
            }
            return Ok(());
        }
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let d0 = self.dy(i);
        let d1 = self.dy(i + 1);
        for j in 0..self.dim {
            out[j] = h00 * y0[j] + h * h10 * d0[j] + h01 * y1[j] + h * h11 * d1[j];
        }
        Ok(())
    }

    pub fn eval_vec(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval(t, &mut out)?;
        Ok(out)
    }

    /// Append a continuation path that starts where `self` ends; the
    /// duplicated seam node keeps the left-side derivative.
    pub fn append(&mut self, other: RawPath) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let seam = *self.ts.last().unwrap();
        if (other.ts[0] - seam).abs() > 1e-9 * (1.0 + seam.abs()) {
            return Err(Error::GridMismatch(format!(
                "segment starts at {} but previous ends at {seam}",
                other.ts[0]
            )));
        }
        if self.len() > 1 && other.len() > 1 && self.cont.is_empty() != other.cont.is_empty() {
            return Err(Error::GridMismatch(
                "cannot mix dense-output and node-only segments".into(),
            ));
        }
        self.ts.extend_from_slice(&other.ts[1..]);
        self.ys.extend_from_slice(&other.ys[self.dim..]);
        self.dys.extend_from_slice(&other.dys[self.dim..]);
        self.cont.extend_from_slice(&other.cont);
        Ok(())
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
/// 5th-order weights minus the embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Dense-output coefficients of the quartic continuous extension.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Integrate `dy/dt = f(t, y)` from `t0` to `t1` (either direction).
/// Steps never straddle a breakpoint: each breakpoint inside the span
/// becomes an integration node.
pub fn dopri5<F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    breakpoints: &[f64],
    opts: &OdeOptions,
) -> Result<RawPath>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let dim = y0.len();
    let posneg = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    if span == 0.0 {
        return Err(Error::InvalidInput("empty integration span".into()));
    }

    // Breakpoints strictly inside the span, ordered along the direction of
    // integration.
    let mut bps: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| (b - t0) * posneg > 1e-14 * span && (t1 - b) * posneg > 1e-14 * span)
        .collect();
    bps.sort_by(|a, b| (a * posneg).partial_cmp(&(b * posneg)).unwrap());
    bps.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * span);
    bps.push(t1);
    let mut next_bp = 0usize;

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; dim]).collect();
    let mut y_stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];

    let check_finite = |v: &[f64], t: f64, context: &'static str| -> Result<()> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { context, t })
        }
    };

    check_finite(&y, t, "initial state")?;
    f(t, &y, &mut k[0])?;
    check_finite(&k[0], t, "derivative")?;

    let mut path = RawPath {
        dim,
        ts: vec![t],
        ys: y.clone(),
        dys: k[0].clone(),
        cont: Vec::new(),
    };

    let mut h = opts
        .h_init
        .unwrap_or_else(|| (1e-3 * span).clamp(1e-8, opts.h_max))
        .min(opts.h_max)
        * posneg;

    let mut steps = 0usize;
    while (t1 - t) * posneg > 1e-14 * span {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::NoConvergence {
                iterations: steps,
                gap: (t1 - t).abs(),
            });
        }
        // Clamp to the next breakpoint (the final one is t1 itself).
        let target = bps[next_bp];
        if (target - t - h) * posneg < 0.0 {
            h = target - t;
        }
        if h.abs() < 1e-13 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }

        // Six fresh stages; k[0] holds f(t, y) from FSAL.
        for stage in 0..6 {
            for j in 0..dim {
                let mut acc = 0.0;
                for (s, ks) in k.iter().enumerate().take(stage + 1) {
                    let a = A[stage][s];
                    if a != 0.0 {
                        acc += a * ks[j];
                    }
                }
                y_stage[j] = y[j] + h * acc;
            }
            let ts = t + C[stage] * h;
            f(ts, &y_stage, &mut k[stage + 1])?;
            check_finite(&k[stage + 1], ts, "derivative")?;
        }
        // Stage 7 input is the 5th-order solution itself (FSAL).
        y_new.copy_from_slice(&y_stage);
        check_finite(&y_new, t + h, "state")?;

        // Scaled max-norm error: conservative for mixed state/cost systems.
        let mut err: f64 = 0.0;
        for j in 0..dim {
            let mut e = 0.0;
            for (s, ks) in k.iter().enumerate() {
                if E[s] != 0.0 {
                    e += E[s] * ks[j];
                }
            }
            e *= h;
            let scale = opts.tol.abs + opts.tol.rel * y[j].abs().max(y_new[j].abs());
            err = err.max((e / scale).abs());
        }

        if !err.is_finite() {
            return Err(Error::NonFinite {
                context: "error estimate",
                t,
            });
        }

        if err <= 1.0 {
            // Quartic dense-output coefficients for this interval.
            for j in 0..dim {
                let ydiff = y_new[j] - y[j];
                let bspl = h * k[0][j] - ydiff;
                path.cont.push(bspl);
            }
            for j in 0..dim {
                let ydiff = y_new[j] - y[j];
                let bspl = h * k[0][j] - ydiff;
                path.cont.push(ydiff - h * k[6][j] - bspl);
            }
            for j in 0..dim {
                let mut s = 0.0;
                for (stage, ks) in k.iter().enumerate() {
                    if D[stage] != 0.0 {
                        s += D[stage] * ks[j];
                    }
                }
                path.cont.push(h * s);
            }

            t += h;
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
            path.ts.push(t);
            path.ys.extend_from_slice(&y);
            path.dys.extend_from_slice(&k[0]);
            if (bps[next_bp] - t).abs() <= 1e-12 * span && next_bp + 1 < bps.len() {
                next_bp += 1;
            }
            let factor = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
            h = (h.abs() * factor).min(opts.h_max) * posneg;
        } else {
            let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= factor;
        }
    }
    Ok(path)
}

/// Fixed-step classic RK4 with `n_steps` uniform steps (plus breakpoint
/// nodes), for reproducibility runs.
pub fn rk4<F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    breakpoints: &[f64],
    n_steps: usize,
) -> Result<RawPath>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let dim = y0.len();
    if n_steps == 0 {
        return Err(Error::InvalidInput("rk4 needs at least one step".into()));
    }
    let posneg = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();

    // Merge the uniform schedule with the breakpoints.
    let mut nodes: Vec<f64> = (0..=n_steps)
        .map(|i| t0 + (t1 - t0) * i as f64 / n_steps as f64)
        .collect();
    for &b in breakpoints {
        if (b - t0) * posneg > 1e-14 * span && (t1 - b) * posneg > 1e-14 * span {
            nodes.push(b);
        }
    }
    nodes.sort_by(|a, b| (a * posneg).partial_cmp(&(b * posneg)).unwrap());
    nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * span);

    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];

    f(nodes[0], &y, &mut k1)?;
    let mut path = RawPath {
        dim,
        ts: vec![nodes[0]],
        ys: y.clone(),
        dys: k1.clone(),
        cont: Vec::new(),
    };

    for w in nodes.windows(2) {
        let (t, tn) = (w[0], w[1]);
        let h = tn - t;
        f(t, &y, &mut k1)?;
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * h * k1[j];
        }
        f(t + 0.5 * h, &tmp, &mut k2)?;
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * h * k2[j];
        }
        f(t + 0.5 * h, &tmp, &mut k3)?;
        for j in 0..dim {
            tmp[j] = y[j] + h * k3[j];
        }
        f(tn, &tmp, &mut k4)?;
        for j in 0..dim {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "state",
                t: tn,
            });
        }
        f(tn, &y, &mut k1)?;
        path.ts.push(tn);
        path.ys.extend_from_slice(&y);
        path.dys.extend_from_slice(&k1);
    }
    Ok(path)
}
