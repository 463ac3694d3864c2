use super::Real;

/// 3×3 convolution, stride 2, zero padding 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvGeom {
    pub fn ho(&self) -> usize {
        self.h.div_ceil(2)
    }

    pub fn wo(&self) -> usize {
        self.w.div_ceil(2)
    }

    pub fn patch(&self) -> usize {
        self.cin * 9
    }

    pub fn positions(&self) -> usize {
        self.ho() * self.wo()
    }
}

/// Unfolds the input (`cin × h × w`) into a `cin·9 × ho·wo` matrix.
fn im2col<T: Real>(input: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (ho, wo, p) = (g.ho(), g.wo(), g.positions());
    for ci in 0..g.cin {
        let plane = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * p..][..p];
                for oy in 0..ho {
                    let iy = (2 * oy + ky) as isize - 1;
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (2 * ox + kx) as isize - 1;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
fn col2im_add<T: Real>(cols: &[T], g: &ConvGeom, d_input: &mut [T]) {
    let (ho, wo, p) = (g.ho(), g.wo(), g.positions());
    for ci in 0..g.cin {
        let plane = &mut d_input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * p..][..p];
                for oy in 0..ho {
                    let iy = (2 * oy + ky) as isize - 1;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..wo {
                        let ix = (2 * ox + kx) as isize - 1;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] = dst[ix as usize] + row[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Returns `(cols, relu(W·cols + b))`.
pub(crate) fn conv_relu_forward<T: Real>(
    input: &[T],
    g: &ConvGeom,
    weight: &[T],
    bias: &[T],
) -> (Vec<T>, Vec<T>) {
    let (k, p) = (g.patch(), g.positions());
    let mut cols = vec![T::zero(); k * p];
    im2col(input, g, &mut cols);
    let mut out = vec![T::zero(); g.cout * p];
    for (o, row) in out.chunks_exact_mut(p).enumerate() {
        row.fill(bias[o]);
    }
    T::gemm(
        g.cout, k, p, T::one(), weight, k as isize, 1, &cols, p as isize, 1, T::one(), &mut out,
        p as isize, 1,
    );
    for v in out.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    (cols, out)
}

/// Backward through conv + ReLU. `d_out` is the gradient w.r.t. the
/// post-ReLU output and is masked in place.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_relu_backward<T: Real>(
    g: &ConvGeom,
    cols: &[T],
    out: &[T],
    weight: &[T],
    d_out: &mut [T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    d_input: Option<&mut [T]>,
) {
    let (k, p) = (g.patch(), g.positions());
    for (d, o) in d_out.iter_mut().zip(out) {
        if *o <= T::zero() {
            *d = T::zero();
        }
    }
    for (o, row) in d_out.chunks_exact(p).enumerate() {
        d_bias[o] = d_bias[o] + row.iter().copied().sum::<T>();
    }
    // dW (cout×k) += dOut (cout×p) · colsᵀ (p×k)
    T::gemm(
        g.cout, p, k, T::one(), d_out, p as isize, 1, cols, 1, p as isize, T::one(), d_weight,
        k as isize, 1,
    );
    if let Some(d_input) = d_input {
        // dCols (k×p) = Wᵀ (k×cout) · dOut (cout×p)
        let mut d_cols = vec![T::zero(); k * p];
        T::gemm(
            k, g.cout, p, T::one(), weight, 1, k as isize, d_out, p as isize, 1, T::zero(),
            &mut d_cols, p as isize, 1,
        );
        col2im_add(&d_cols, g, d_input);
    }
}

/// `y = W·x + b` with `W` stored `out × in`.
pub(crate) fn linear_forward<T: Real>(x: &[T], weight: &[T], bias: &[T], out_dim: usize) -> Vec<T> {
    let in_dim = x.len();
    (0..out_dim)
        .map(|o| {
            let row = &weight[o * in_dim..(o + 1) * in_dim];
            bias[o] + row.iter().zip(x).map(|(w, v)| *w * *v).sum::<T>()
        })
        .collect()
}

/// Accumulates parameter gradients and returns `dL/dx`.
pub(crate) fn linear_backward<T: Real>(
    x: &[T],
    weight: &[T],
    d_y: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
) -> Vec<T> {
    let in_dim = x.len();
    let mut d_x = vec![T::zero(); in_dim];
    for (o, &g) in d_y.iter().enumerate() {
        d_bias[o] = d_bias[o] + g;
        let row = &weight[o * in_dim..(o + 1) * in_dim];
        let d_row = &mut d_weight[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            d_row[i] = d_row[i] + g * x[i];
            d_x[i] = d_x[i] + g * row[i];
        }
    }
    d_x
}

pub(crate) fn relu<T: Real>(v: &mut [T]) {
    for x in v.iter_mut() {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

pub(crate) fn relu_mask<T: Real>(d: &mut [T], activated: &[T]) {
    for (g, a) in d.iter_mut().zip(activated) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}

pub(crate) fn softplus<T: Real>(a: T) -> T {
    if a > T::of(30.0) {
        a
    } else {
        a.exp().ln_1p()
    }
}

pub(crate) fn sigmoid<T: Real>(a: T) -> T {
    T::one() / (T::one() + (-a).exp())
}

/// Returns `(v/‖v‖, ‖v‖)`.
pub(crate) fn l2_normalize<T: Real>(v: &[T]) -> (Vec<T>, T) {
    let n = v.iter().map(|x| *x * *x).sum::<T>().sqrt();
    let n_safe = n.max(T::of(1e-12));
    (v.iter().map(|x| *x / n_safe).collect(), n_safe)
}

/// Backward through `u = v/‖v‖` given the normalized output `u`.
pub(crate) fn l2_normalize_backward<T: Real>(u: &[T], norm: T, d_u: &[T]) -> Vec<T> {
    let dot: T = u.iter().zip(d_u).map(|(a, b)| *a * *b).sum();
    u.iter().zip(d_u).map(|(a, g)| (*g - *a * dot) / norm).collect()
}
