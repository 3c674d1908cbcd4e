//! Published per-size confusion matrices and the summary metrics printed
//! alongside them, used as fixtures.
#![allow(dead_code)]

pub const SIZES: [&str; 5] = ["256", "299", "512", "1024", "2095"];

pub const PIRC: [[[u64; 5]; 5]; 5] = [
    [[2982, 147, 99, 0, 1], [500, 250, 92, 0, 0], [343, 187, 2040, 27, 0], [13, 8, 279, 82, 0], [3, 0, 51, 24, 1]],
    [[3027, 142, 60, 0, 0], [438, 283, 121, 0, 0], [197, 198, 2128, 74, 0], [6, 5, 215, 154, 2], [4, 0, 45, 25, 5]],
    [[3178, 36, 15, 0, 0], [296, 440, 104, 2, 0], [114, 201, 2088, 193, 1], [3, 3, 119, 256, 1], [4, 0, 21, 40, 14]],
    [[3106, 95, 28, 0, 0], [149, 579, 111, 0, 3], [54, 195, 2257, 89, 2], [4, 2, 138, 222, 16], [4, 0, 16, 18, 41]],
    [[3185, 27, 16, 1, 0], [169, 517, 156, 0, 0], [81, 143, 2304, 69, 0], [3, 1, 188, 189, 1], [4, 0, 25, 47, 3]],
];

pub const PIMEC: [[[u64; 4]; 4]; 5] = [
    [[6053, 49, 38, 22], [98, 332, 32, 3], [80, 61, 259, 38], [30, 10, 66, 133]],
    [[5977, 79, 70, 36], [64, 353, 42, 6], [63, 45, 295, 35], [21, 9, 95, 114]],
    [[6015, 51, 78, 18], [60, 374, 29, 2], [57, 49, 317, 15], [19, 8, 91, 121]],
    [[6078, 45, 29, 10], [63, 364, 36, 2], [70, 55, 268, 45], [30, 6, 67, 136]],
    [[6024, 68, 51, 19], [42, 388, 29, 6], [47, 69, 262, 60], [14, 6, 71, 148]],
];

pub const QRDR: [[[u64; 3]; 3]; 5] = [
    [[1084, 45, 3], [18, 3736, 255], [0, 401, 2684]],
    [[1093, 38, 1], [35, 3717, 257], [0, 311, 2774]],
    [[1108, 22, 2], [50, 3786, 173], [1, 271, 2813]],
    [[1115, 16, 1], [78, 3732, 199], [0, 218, 2867]],
    [[1069, 63, 0], [22, 3926, 61], [1, 472, 2612]],
];

/// (accuracy, quadratic-weighted kappa) per size.
pub const PIRC_SUMMARY: [(f64, f64); 5] =
    [(0.751, 0.772), (0.785, 0.834), (0.838, 0.894), (0.870, 0.915), (0.869, 0.910)];
pub const PIMEC_SUMMARY: [(f64, f64); 5] =
    [(0.928, 0.813), (0.923, 0.803), (0.935, 0.832), (0.937, 0.846), (0.934, 0.856)];
pub const QRDR_SUMMARY: [(f64, f64); 5] =
    [(0.912, 0.901), (0.922, 0.914), (0.937, 0.930), (0.938, 0.932), (0.925, 0.914)];

pub fn rows<const K: usize>(m: &[[u64; K]; K]) -> Vec<Vec<u64>> {
    m.iter().map(|r| r.to_vec()).collect()
}

/// Every matrix with its system name, size and printed (accuracy, kappa).
pub fn all_matrices() -> Vec<(&'static str, &'static str, Vec<Vec<u64>>, (f64, f64))> {
    let mut out = Vec::new();
    for i in 0..5 {
        out.push(("PIRC", SIZES[i], rows(&PIRC[i]), PIRC_SUMMARY[i]));
        out.push(("PIMEC", SIZES[i], rows(&PIMEC[i]), PIMEC_SUMMARY[i]));
        out.push(("QRDR", SIZES[i], rows(&QRDR[i]), QRDR_SUMMARY[i]));
    }
    out
}
