//! Central finite differences for mixed partial derivatives of two-argument functions.

/// Weights of the central stencil at offsets -1, 0, +1 (in units of `h`) for order 0, 1, 2.
fn stencil(order: usize) -> [f64; 3] {
    match order {
        0 => [0.0, 1.0, 0.0],
        1 => [-0.5, 0.0, 0.5],
        2 => [1.0, -2.0, 1.0],
        _ => panic!("stencil order {order} not supported"),
    }
}

/// `d^a/ds^a d^b/dt^b g(s, t)` at the origin with step `h`; error `O(h^2)`.
pub fn mixed_partial<G: Fn(f64, f64) -> f64>(g: &G, a: usize, b: usize, h: f64) -> f64 {
    let ws = stencil(a);
    let wt = stencil(b);
    let mut acc = 0.0;
    for (i, wi) in ws.iter().enumerate() {
        if *wi == 0.0 {
            continue;
        }
        for (j, wj) in wt.iter().enumerate() {
            if *wj == 0.0 {
                continue;
            }
            acc += wi * wj * g((i as f64 - 1.0) * h, (j as f64 - 1.0) * h);
        }
    }
    acc / h.powi((a + b) as i32)
}

/// One Richardson step on [`mixed_partial`]; error `O(h^4)`.
pub fn mixed_partial_richardson<G: Fn(f64, f64) -> f64>(g: &G, a: usize, b: usize, h: f64) -> f64 {
    let coarse = mixed_partial(g, a, b, h);
    let fine = mixed_partial(g, a, b, 0.5 * h);
    (4.0 * fine - coarse) / 3.0
}
