//! GF(2^8) arithmetic over the primitive polynomial x^8 + x^4 + x^3 + x^2 + 1 (0x11D).
//!
//! Log/antilog tables are computed at compile time; the full 64 KiB product
//! table used by the slice kernels is built once on first use.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};
use std::sync::LazyLock;

/// Reduction polynomial, including the x^8 term.
pub const POLY: u16 = 0x11D;

const fn build_exp_log() -> ([u8; 512], [u8; 256]) {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= POLY;
        }
        i += 1;
    }
    // Doubled so that exp[log a + log b] never needs a modulo.
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    (exp, log)
}

const TABLES: ([u8; 512], [u8; 256]) = build_exp_log();
const EXP: [u8; 512] = TABLES.0;
const LOG: [u8; 256] = TABLES.1;

static MUL_TABLE: LazyLock<Box<[[u8; 256]; 256]>> = LazyLock::new(|| {
    let mut t = Box::new([[0u8; 256]; 256]);
    for a in 1..256usize {
        for b in 1..256usize {
            t[a][b] = EXP[LOG[a] as usize + LOG[b] as usize];
        }
    }
    t
});

/// An element of GF(2^8).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Gf(pub u8);

impl Gf {
    pub const ZERO: Gf = Gf(0);
    pub const ONE: Gf = Gf(1);

    /// Multiplicative inverse. Panics on zero.
    pub fn inv(self) -> Gf {
        assert!(self.0 != 0, "zero has no multiplicative inverse in GF(2^8)");
        Gf(EXP[255 - LOG[self.0 as usize] as usize])
    }

    pub fn pow(self, e: u32) -> Gf {
        if e == 0 {
            return Gf::ONE;
        }
        if self.0 == 0 {
            return Gf::ZERO;
        }
        let l = (LOG[self.0 as usize] as u64 * e as u64) % 255;
        Gf(EXP[l as usize])
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Debug for Gf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf({:#04x})", self.0)
    }
}

impl Add for Gf {
    type Output = Gf;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Gf) -> Gf {
        Gf(self.0 ^ rhs.0)
    }
}

impl AddAssign for Gf {
    #[allow(clippy::suspicious_op_assign_impl)]
    fn add_assign(&mut self, rhs: Gf) {
        self.0 ^= rhs.0;
    }
}

impl Sub for Gf {
    type Output = Gf;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn sub(self, rhs: Gf) -> Gf {
        Gf(self.0 ^ rhs.0)
    }
}

impl Mul for Gf {
    type Output = Gf;
    fn mul(self, rhs: Gf) -> Gf {
        gf_mul(self, rhs)
    }
}

impl MulAssign for Gf {
    fn mul_assign(&mut self, rhs: Gf) {
        *self = gf_mul(*self, rhs);
    }
}

impl Div for Gf {
    type Output = Gf;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Gf) -> Gf {
        self * rhs.inv()
    }
}

/// Field multiplication.
pub fn gf_mul(a: Gf, b: Gf) -> Gf {
    if a.0 == 0 || b.0 == 0 {
        return Gf::ZERO;
    }
    Gf(EXP[LOG[a.0 as usize] as usize + LOG[b.0 as usize] as usize])
}

/// `dst[i] ^= c * src[i]`
pub fn mul_add_slice(dst: &mut [u8], src: &[u8], c: Gf) {
    debug_assert_eq!(dst.len(), src.len());
    match c.0 {
        0 => {}
        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
        _ => {
            let row = &MUL_TABLE[c.0 as usize];
            dst.iter_mut()
                .zip(src)
                .for_each(|(d, s)| *d ^= row[*s as usize]);
        }
    }
}

/// `dst[i] = c * src[i]`
pub fn mul_slice(dst: &mut [u8], src: &[u8], c: Gf) {
    debug_assert_eq!(dst.len(), src.len());
    match c.0 {
        0 => dst.fill(0),
        1 => dst.copy_from_slice(src),
        _ => {
            let row = &MUL_TABLE[c.0 as usize];
            dst.iter_mut()
                .zip(src)
                .for_each(|(d, s)| *d = row[*s as usize]);
        }
    }
}

/// In-place `buf[i] = c * buf[i]`.
pub fn scale_slice(buf: &mut [u8], c: Gf) {
    if c.0 == 1 {
        return;
    }
    let row = &MUL_TABLE[c.0 as usize];
    buf.iter_mut().for_each(|b| *b = row[*b as usize]);
}

pub fn xor_slice(dst: &mut [u8], src: &[u8]) {
    mul_add_slice(dst, src, Gf::ONE);
}
