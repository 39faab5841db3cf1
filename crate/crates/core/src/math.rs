//! Small numeric helpers shared across modules.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[inline]
pub(crate) fn sq(x: f64) -> f64 {
    x * x
}

/// Square design matrices whose null vector can be extracted.
pub(crate) trait NullVector<const N: usize> {
    /// Right singular vector of the smallest singular value, plus the
    /// singular values sorted ascending.
    fn null_vector(self) -> Option<(SVector<f64, N>, [f64; N])>;
}

macro_rules! impl_null_vector {
    ($($n:literal),*) => {$(
        impl NullVector<$n> for SMatrix<f64, $n, $n> {
            fn null_vector(self) -> Option<(SVector<f64, $n>, [f64; $n])> {
                let svd = self.try_svd(false, true, f64::EPSILON, 500)?;
                let v_t = svd.v_t?;
                let mut order: [usize; $n] = core::array::from_fn(|i| i);
                order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
                let sorted: [f64; $n] = core::array::from_fn(|i| svd.singular_values[order[i]]);
                Some((v_t.row(order[0]).transpose(), sorted))
            }
        }
    )*};
}

impl_null_vector!(4, 9, 12);

pub(crate) fn null_vector<const N: usize>(
    design: SMatrix<f64, N, N>,
) -> Option<(SVector<f64, N>, [f64; N])>
where
    SMatrix<f64, N, N>: NullVector<N>,
{
    design.null_vector()
}

/// 3x3 SVD with singular values sorted descending: `(U, s, V^T)`.
pub(crate) fn svd3(m: &Matrix3<f64>) -> (Matrix3<f64>, Vector3<f64>, Matrix3<f64>) {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut u_s = Matrix3::zeros();
    let mut vt_s = Matrix3::zeros();
    let mut s_s = Vector3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        u_s.set_column(dst, &u.column(src));
        vt_s.set_row(dst, &v_t.row(src));
        s_s[dst] = s[src];
    }
    (u_s, s_s, vt_s)
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

/// 64-bit FNV-1a.
pub(crate) struct Fnv1a(u64);

impl Fnv1a {
    pub(crate) fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub(crate) fn write_f64(&mut self, x: f64) {
        self.write(&x.to_bits().to_le_bytes());
    }

    pub(crate) fn write_u64(&mut self, x: u64) {
        self.write(&x.to_le_bytes());
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

/// Exact binomial coefficient; `None` on overflow of `u128`.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}
