//! Dense matrix exponential by scaling-and-squaring with Pade approximants
//! (Higham's method).
//!
//! Used as the small-grid oracle against which the eigenexpansion semigroup
//! is validated; the production path never exponentiates a full-size matrix.

use nalgebra::DMatrix;

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

fn pade_uv(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    match b.len() {
        4 => {
            let u = a * (b[3] * &a2 + b[1] * &id);
            let v = b[2] * &a2 + b[0] * &id;
            (u, v)
        }
        6 => {
            let a4 = &a2 * &a2;
            let u = a * (b[5] * &a4 + b[3] * &a2 + b[1] * &id);
            let v = b[4] * &a4 + b[2] * &a2 + b[0] * &id;
            (u, v)
        }
        8 => {
            let a4 = &a2 * &a2;
            let a6 = &a4 * &a2;
            let u = a * (b[7] * &a6 + b[5] * &a4 + b[3] * &a2 + b[1] * &id);
            let v = b[6] * &a6 + b[4] * &a4 + b[2] * &a2 + b[0] * &id;
            (u, v)
        }
        10 => {
            let a4 = &a2 * &a2;
            let a6 = &a4 * &a2;
            let a8 = &a6 * &a2;
            let u = a * (b[9] * &a8 + b[7] * &a6 + b[5] * &a4 + b[3] * &a2 + b[1] * &id);
            let v = b[8] * &a8 + b[6] * &a6 + b[4] * &a4 + b[2] * &a2 + b[0] * &id;
            (u, v)
        }
        14 => {
            let a4 = &a2 * &a2;
            let a6 = &a4 * &a2;
            let w = b[13] * &a6 + b[11] * &a4 + b[9] * &a2;
            let u = a * (&a6 * w + b[7] * &a6 + b[5] * &a4 + b[3] * &a2 + b[1] * &id);
            let w2 = b[12] * &a6 + b[10] * &a4 + b[8] * &a2;
            let v = &a6 * w2 + b[6] * &a6 + b[4] * &a4 + b[2] * &a2 + b[0] * &id;
            (u, v)
        }
        _ => unreachable!("unsupported Pade order"),
    }
}

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn l1_norm(a: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    best
}

/// exp(A) for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), a.ncols());
    let norm = l1_norm(a);
    let (u, v, squarings) = if norm < THETA_3 {
        let (u, v) = pade_uv(a, &B3);
        (u, v, 0u32)
    } else if norm < THETA_5 {
        let (u, v) = pade_uv(a, &B5);
        (u, v, 0)
    } else if norm < THETA_7 {
        let (u, v) = pade_uv(a, &B7);
        (u, v, 0)
    } else if norm < THETA_9 {
        let (u, v) = pade_uv(a, &B9);
        (u, v, 0)
    } else {
        let s = ((norm / THETA_13).log2().ceil() as i32).max(0) as u32;
        let scaled = a.map(|x| x * 2f64.powi(-(s as i32)));
        let (u, v) = pade_uv(&scaled, &B13);
        (u, v, s)
    };
    let numer = &u + &v;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .expect("Pade denominator must be invertible");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}
