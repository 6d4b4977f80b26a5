/// 2×2 real matrix, row major.
pub type Matrix2 = [[f64; 2]; 2];

/// Eigenvalue magnitudes of a 2×2 matrix, largest first.
///
/// Roots of `λ² − tr·λ + det`; a negative discriminant gives a conjugate
/// pair whose common magnitude is `sqrt(det)`.
pub fn eig_2x2(m: &Matrix2) -> (f64, f64) {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = 0.25 * tr * tr - det;
    let (a, b) = if disc >= 0.0 {
        let sq = disc.sqrt();
        let half = 0.5 * tr;
        // Stable pairing: the larger root from the sum, the other from det.
        let big = if half >= 0.0 { half + sq } else { half - sq };
        let small = if big != 0.0 { det / big } else { half - sq };
        (big.abs(), small.abs())
    } else {
        let mag = det.sqrt();
        (mag, mag)
    };
    if a >= b {
        (a, b)
    } else {
        (b, a)
    }
}
