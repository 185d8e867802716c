#![allow(dead_code)]

use fredjost::matdet::AnalyticMatrixFamily;
use fredjost::volterra::{jost_function, JostMethod, Potential1D};
use fredjost::{c, CMat, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `exp(-1/(1-t^2))` on `|t| < 1`, zero outside.
pub fn bump(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct BumpSum {
    pub v_infinity: f64,
    pub terms: Vec<(f64, f64, f64)>,
}

impl BumpSum {
    pub fn random(r: &mut impl Rng) -> Self {
        let n = r.gen_range(1..=3);
        let terms = (0..n)
            .map(|_| (r.gen_range(-2.5..2.5), r.gen_range(-5.0..5.0), r.gen_range(1.5..3.0)))
            .collect();
        BumpSum { v_infinity: r.gen_range(0.5..2.0), terms }
    }

    /// Negative single-signed profile, suitable for coupling-constant tuning.
    pub fn random_well(r: &mut impl Rng) -> Self {
        let n = r.gen_range(1..=2);
        let terms = (0..n)
            .map(|_| (-r.gen_range(0.5..1.5), r.gen_range(-3.0..3.0), r.gen_range(2.0..3.5)))
            .collect();
        BumpSum { v_infinity: r.gen_range(0.5..2.0), terms }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|(a, x0, w)| a * bump((x - x0) / w)).sum()
    }

    pub fn potential(&self) -> Potential1D {
        let s = self.clone();
        Potential1D::new(self.v_infinity, 20.0, 4001, 0.0, move |x| s.eval(x))
            .unwrap()
            .with_label("bumps")
    }
}

/// Coupling `g` at which `g W` first acquires an eigenvalue at 0.
pub fn tune_zero_mode(p: &Potential1D) -> f64 {
    let f = |g: f64| jost_function(&p.scaled(g), c(0.0), JostMethod::Wronskian).unwrap().re;
    let mut lo = 0.0;
    let mut flo = 1.0;
    let mut hi = 0.25;
    let mut fhi = f(hi);
    while flo * fhi > 0.0 {
        lo = hi;
        flo = fhi;
        hi += 0.25;
        fhi = f(hi);
        assert!(hi < 200.0, "no zero mode within coupling range");
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || hi - lo < 1e-15 * hi {
            return mid;
        }
        if fm * flo > 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn random_cmat(r: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> CMat {
    CMat::from_fn(rows, cols, |_, _| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)) * scale)
}

/// Family whose `A0` has eigenvalue 1 with algebraic multiplicity `n0` and
/// `n0 - nu0` Jordan blocks; the rest of the spectrum stays in `|zeta| <= 0.4`.
pub struct EngineeredFamily {
    pub family: AnalyticMatrixFamily,
    pub n0: usize,
    pub nu0: usize,
    /// `A0 = S T S^{-1}`.
    pub s: CMat,
    pub t: CMat,
}

pub fn engineered_family(r: &mut impl Rng, dim: usize, n0: usize, nu0: usize) -> EngineeredFamily {
    assert!(n0 >= 1 && nu0 < n0 && n0 <= dim);
    let blocks = n0 - nu0;
    // block sizes summing to n0
    let mut sizes = vec![1usize; blocks];
    for i in 0..nu0 {
        sizes[i % blocks] += 1;
    }
    let mut t = CMat::zeros(dim, dim);
    let mut k = 0;
    for s in sizes {
        for i in 0..s {
            t[(k + i, k + i)] = c(1.0);
            if i + 1 < s {
                t[(k + i, k + i + 1)] = c(1.0);
            }
        }
        k += s;
    }
    for i in n0..dim {
        t[(i, i)] = C64::from_polar(r.gen_range(0.0..0.4), r.gen_range(0.0..std::f64::consts::TAU));
    }
    let s = CMat::identity(dim, dim) + random_cmat(r, dim, dim, 0.3 / (dim as f64).sqrt());
    let sinv = s.clone().try_inverse().unwrap();
    let a0 = &s * &t * sinv;
    let a1 = random_cmat(r, dim, dim, 1.0 / (dim as f64).sqrt());
    let a2 = random_cmat(r, dim, dim, 0.5 / (dim as f64).sqrt());
    EngineeredFamily { family: AnalyticMatrixFamily::new(vec![a0, a1, a2], 1.0).unwrap(), n0, nu0, s, t }
}

pub fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm()
}
