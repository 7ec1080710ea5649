//! The cutoff `ℓ`: even, `≡ 1` on `[-1/4, 1/4]`, `≡ 0` for `|r| ≥ 3/4`, with
//! quintic smoothstep transitions so that `ℓ` is C² and `∫ℓ = 1` exactly.
//!
//! The transition occupies `[1/4, 3/4]` rather than all of `[1/4, 1]`: the
//! plateau carries mass 1/2, so each shoulder has to carry exactly 1/4, and a
//! monotone C² shoulder of width 1/2 does that by symmetry about its midpoint.

/// Inner edge of the plateau.
pub const PLATEAU: f64 = 0.25;
/// `ℓ` vanishes identically for `|r|` at or beyond this radius.
pub const SUPPORT: f64 = 0.75;
const WIDTH: f64 = SUPPORT - PLATEAU;

fn smoothstep(u: f64) -> f64 {
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpFunction {
    c0: f64,
    c1: f64,
    c2: f64,
}

/// Builds `ℓ` and caches its sup norms.
pub fn make_bump() -> BumpFunction {
    // |ℓ'| peaks at u = 1/2, |ℓ''| at u = (3 - √3)/6.
    let u2 = (3.0 - 3f64.sqrt()) / 6.0;
    BumpFunction {
        c0: 1.0,
        c1: 60.0 / 16.0,
        c2: 240.0 * u2 * (1.0 - u2) * (1.0 - 2.0 * u2),
    }
}

impl Default for BumpFunction {
    fn default() -> Self {
        make_bump()
    }
}

impl BumpFunction {
    pub fn value(&self, r: f64) -> f64 {
        ell(r)
    }

    pub fn d1(&self, r: f64) -> f64 {
        ell_d1(r)
    }

    pub fn d2(&self, r: f64) -> f64 {
        ell_d2(r)
    }

    /// `∫_{-∞}^r ℓ`.
    pub fn antiderivative(&self, r: f64) -> f64 {
        ell_integral(r)
    }

    pub fn integral(&self) -> f64 {
        ell_integral(SUPPORT)
    }

    pub fn c0_norm(&self) -> f64 {
        self.c0
    }

    pub fn c1_norm(&self) -> f64 {
        self.c1
    }

    /// `max(sup|ℓ|, sup|ℓ'|, sup|ℓ''|)`.
    pub fn c2_norm(&self) -> f64 {
        self.c0.max(self.c1).max(self.c2)
    }
}

pub fn ell(r: f64) -> f64 {
    let a = r.abs();
    if a <= PLATEAU {
        1.0
    } else if a >= SUPPORT {
        0.0
    } else {
        1.0 - smoothstep((a - PLATEAU) / WIDTH)
    }
}

pub fn ell_d1(r: f64) -> f64 {
    let a = r.abs();
    if a <= PLATEAU || a >= SUPPORT {
        return 0.0;
    }
    let u = (a - PLATEAU) / WIDTH;
    let w = 1.0 - u;
    -r.signum() * 60.0 * u * u * w * w
}

pub fn ell_d2(r: f64) -> f64 {
    let a = r.abs();
    if a <= PLATEAU || a >= SUPPORT {
        return 0.0;
    }
    let u = (a - PLATEAU) / WIDTH;
    -240.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
}

pub fn ell_integral(r: f64) -> f64 {
    if r >= PLATEAU {
        return 1.0 - ell_integral(-r);
    }
    if r <= -SUPPORT {
        return 0.0;
    }
    if r <= -PLATEAU {
        let v = (r + SUPPORT) / WIDTH;
        let v4 = v * v * v * v;
        return WIDTH * v4 * (2.5 + v * (-3.0 + v));
    }
    0.25 + (r + PLATEAU)
}
