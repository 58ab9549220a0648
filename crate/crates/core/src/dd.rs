//! Double-double arithmetic (~31 significant digits) for the gradient
//! checker's reference evaluations.
//!
//! Central differences of a ~30-nat log-probability at h = 1e-5 need function
//! values good to ~1e-12 before the difference is taken, which plain f64
//! forward passes cannot deliver. Carrying the checker's forward pass in
//! double-double removes that rounding floor, leaving only the O(h^2)
//! truncation the checker is supposed to measure.

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

// ln 2 as a double-double: the f64 constant plus its residual.
const LN2_HI: f64 = std::f64::consts::LN_2;
const LN2_LO: f64 = 2.319_046_813_846_299_6e-17;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn sub(self, o: Dd) -> Dd {
        self.add(Dd {
            hi: -o.hi,
            lo: -o.lo,
        })
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    #[inline]
    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul_f64(self, o: f64) -> Dd {
        let (p, e) = two_prod(self.hi, o);
        let e = e + self.lo * o;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f64(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f64(q2));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from_f64(q3))
    }

    fn ldexp(self, k: i32) -> Dd {
        Dd {
            hi: libm_ldexp(self.hi, k),
            lo: libm_ldexp(self.lo, k),
        }
    }

    /// exp via range reduction to |r| <= ln2/2, a scaled Taylor series, and
    /// repeated squaring.
    pub fn exp(self) -> Dd {
        if self.hi > 700.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2_HI).round();
        let r = self.sub(Dd { hi: LN2_HI, lo: LN2_LO }.mul_f64(k));
        // Scale down by 2^9 so the series converges in a dozen terms.
        let r = r.ldexp(-9);
        let mut term = r;
        let mut sum = Dd::ONE.add(r);
        for n in 2..=14u32 {
            term = term.mul(r).mul_f64(1.0 / n as f64);
            sum = sum.add(term);
        }
        // Undo the scaling: exp(r * 2^9) = exp(r)^(2^9).
        for _ in 0..9 {
            sum = sum.mul(sum);
        }
        sum.ldexp(k as i32)
    }

    /// ln via a Newton correction of the f64 logarithm.
    pub fn ln(self) -> Dd {
        debug_assert!(self.hi > 0.0);
        let mut y = Dd::from_f64(self.hi.ln());
        // y <- y + x * exp(-y) - 1, twice.
        for _ in 0..2 {
            let e = self.mul(y.neg().exp());
            y = y.add(e).sub(Dd::ONE);
        }
        y
    }

    pub fn tanh(self) -> Dd {
        if self.hi > 40.0 {
            return Dd::ONE;
        }
        if self.hi < -40.0 {
            return Dd::ONE.neg();
        }
        let e = self.mul_f64(2.0).exp();
        e.sub(Dd::ONE).div(e.add(Dd::ONE))
    }

    pub fn sigmoid(self) -> Dd {
        Dd::ONE.div(Dd::ONE.add(self.neg().exp()))
    }
}

fn libm_ldexp(x: f64, k: i32) -> f64 {
    // Powers of two scale exactly; split extreme shifts so the scale factor
    // itself stays representable.
    if (-1021..=1023).contains(&k) {
        x * f64::from_bits(((1023 + k) as u64) << 52)
    } else {
        let half = k / 2;
        libm_ldexp(libm_ldexp(x, half), k - half)
    }
}
