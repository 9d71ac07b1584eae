//! Registry of the benchmark test problems.
//!
//! Every entry is a smooth unconstrained problem with analytic gradients.
//! Dimensions, boxes and convexity flags follow the benchmark catalog; the
//! objective formulas are transcribed from the literature behind each
//! descriptor's `source` key. Problems listed as maximizations in their source
//! have been negated.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mop::{MopProblem, Objective};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemDescriptor {
    pub id: &'static str,
    pub n: usize,
    pub m: usize,
    pub box_low: Vec<f64>,
    pub box_high: Vec<f64>,
    pub convex: bool,
    pub source: &'static str,
    /// Known mismatch between the catalog flags and the transcribed formulas.
    pub note: Option<&'static str>,
}

impl ProblemDescriptor {
    /// Whether the transcribed objectives are expected to pass a
    /// midpoint-convexity probe over the box.
    pub fn convexity_probe_applies(&self) -> bool {
        self.convex && self.note.is_none()
    }
}

pub const PROBLEM_IDS: [&str; 23] = [
    "SD", "PNR", "JOS1a", "JOS1b", "DGO1", "DGO2", "Lov1", "Lov2", "Lov3", "Lov4", "SK1", "BK1", "SLCDT1",
    "MOP1", "MOP2", "LDTZ", "Hil1", "AP2", "AP3", "FF1", "KW2", "MHHM1", "MHHM2",
];

fn cube(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    (vec![lo; n], vec![hi; n])
}

fn descriptor(id: &str) -> Option<ProblemDescriptor> {
    let d = |id: &'static str,
             n: usize,
             m: usize,
             bounds: (Vec<f64>, Vec<f64>),
             convex: bool,
             source: &'static str,
             note: Option<&'static str>| ProblemDescriptor {
        id,
        n,
        m,
        box_low: bounds.0,
        box_high: bounds.1,
        convex,
        source,
        note,
    };
    let out = match id {
        "SD" => d(
            "SD",
            4,
            2,
            (vec![1.0, -SQRT_2, -SQRT_2, 1.0], vec![3.0; 4]),
            true,
            "SD",
            Some("the catalog box lets x2, x3 cross the pole of 1/x at zero, so f2 is not convex on it"),
        ),
        "PNR" => d(
            "PNR",
            2,
            2,
            cube(2, -2.0, 2.0),
            true,
            "PNR",
            Some("f1 has an indefinite Hessian near the origin although the catalog flags the problem convex"),
        ),
        "JOS1a" => d("JOS1a", 50, 2, cube(50, -2.0, 2.0), true, "JOS", None),
        "JOS1b" => d("JOS1b", 100, 2, cube(100, -2.0, 2.0), true, "JOS", None),
        "DGO1" => d("DGO1", 1, 2, cube(1, -10.0, 13.0), false, "test review", None),
        "DGO2" => d("DGO2", 1, 2, cube(1, -9.0, 9.0), true, "test review", None),
        "Lov1" => d("Lov1", 2, 2, cube(2, -10.0, 10.0), true, "LOV", None),
        "Lov2" => d("Lov2", 2, 2, cube(2, -0.75, 0.75), false, "LOV", None),
        "Lov3" => d("Lov3", 2, 2, cube(2, -20.0, 20.0), false, "LOV", None),
        "Lov4" => d("Lov4", 2, 2, cube(2, -20.0, 20.0), false, "LOV", None),
        "SK1" => d("SK1", 1, 2, cube(1, -100.0, 100.0), false, "test review", None),
        "BK1" => d("BK1", 2, 2, cube(2, -5.0, 10.0), true, "test review", None),
        "SLCDT1" => d(
            "SLCDT1",
            2,
            2,
            cube(2, -1.5, 1.5),
            false,
            "SLCDT",
            None,
        ),
        "MOP1" => d("MOP1", 1, 2, cube(1, -1e5, 1e5), true, "test review", None),
        "MOP2" => d("MOP2", 2, 2, cube(2, -4.0, 4.0), false, "test review", None),
        "LDTZ" => d("LDTZ", 3, 3, cube(3, 0.0, 1.0), false, "LDTZ", None),
        "Hil1" => d("Hil1", 2, 2, cube(2, 0.0, 1.0), false, "Hil", None),
        "AP2" => d("AP2", 1, 2, cube(1, -100.0, 100.0), true, "modified", None),
        "AP3" => d("AP3", 2, 2, cube(2, -100.0, 100.0), false, "modified", None),
        "FF1" => d("FF1", 2, 2, cube(2, -1.0, 1.0), false, "test review", None),
        "KW2" => d("KW2", 2, 2, cube(2, -3.0, 3.0), false, "KW2", None),
        "MHHM1" => d("MHHM1", 1, 3, cube(1, 0.0, 1.0), true, "test review", None),
        "MHHM2" => d("MHHM2", 2, 3, cube(2, 0.0, 1.0), true, "test review", None),
        _ => return None,
    };
    Some(out)
}

/// All registered descriptors, in catalog order.
pub fn descriptors() -> Vec<ProblemDescriptor> {
    PROBLEM_IDS
        .iter()
        .map(|id| descriptor(id).expect("registered id"))
        .collect()
}

pub fn get_descriptor(id: &str) -> Result<ProblemDescriptor> {
    descriptor(id).ok_or_else(|| Error::UnknownProblem(id.to_string()))
}

fn v(values: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(values)
}

fn obj(
    value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
) -> Objective {
    Objective::new(value, gradient)
}

/// Squared distance to a fixed point, used by several convex problems.
fn shifted_square(center: Vec<f64>, weight: f64) -> Objective {
    let c = DVector::from_vec(center);
    let c2 = c.clone();
    obj(
        move |x| weight * (x - &c).norm_squared(),
        move |x| 2.0 * weight * (x - &c2),
    )
}

fn objectives(id: &str, n: usize) -> Vec<Objective> {
    match id {
        // f1 = 2 x1 + sqrt2 x2 + sqrt2 x3 + x4, f2 = 2/x1 + 2 sqrt2/x2 + 2 sqrt2/x3 + 2/x4.
        "SD" => vec![
            obj(
                |x| 2.0 * x[0] + SQRT_2 * x[1] + SQRT_2 * x[2] + x[3],
                |_| v(vec![2.0, SQRT_2, SQRT_2, 1.0]),
            ),
            obj(
                |x| 2.0 / x[0] + 2.0 * SQRT_2 / x[1] + 2.0 * SQRT_2 / x[2] + 2.0 / x[3],
                |x| {
                    v(vec![
                        -2.0 / (x[0] * x[0]),
                        -2.0 * SQRT_2 / (x[1] * x[1]),
                        -2.0 * SQRT_2 / (x[2] * x[2]),
                        -2.0 / (x[3] * x[3]),
                    ])
                },
            ),
        ],
        "PNR" => vec![
            obj(
                |x| {
                    x[0].powi(4) + x[1].powi(4) - x[0] * x[0] + x[1] * x[1] - 10.0 * x[0] * x[1]
                        + 0.25 * x[0]
                        + 20.0
                },
                |x| {
                    v(vec![
                        4.0 * x[0].powi(3) - 2.0 * x[0] - 10.0 * x[1] + 0.25,
                        4.0 * x[1].powi(3) + 2.0 * x[1] - 10.0 * x[0],
                    ])
                },
            ),
            obj(
                |x| (x[0] - 1.0).powi(2) + x[1] * x[1],
                |x| v(vec![2.0 * (x[0] - 1.0), 2.0 * x[1]]),
            ),
        ],
        // f1 = mean(x_i^2), f2 = mean((x_i - 2)^2).
        "JOS1a" | "JOS1b" => {
            let w = 1.0 / n as f64;
            vec![shifted_square(vec![0.0; n], w), shifted_square(vec![2.0; n], w)]
        }
        "DGO1" => vec![
            obj(|x| x[0].sin(), |x| v(vec![x[0].cos()])),
            obj(|x| (x[0] + 0.7).sin(), |x| v(vec![(x[0] + 0.7).cos()])),
        ],
        // f2 = 9 - sqrt(81 - x^2); only defined for |x| <= 9.
        "DGO2" => vec![
            obj(|x| x[0] * x[0], |x| v(vec![2.0 * x[0]])),
            obj(
                |x| 9.0 - (81.0 - x[0] * x[0]).sqrt(),
                |x| v(vec![x[0] / (81.0 - x[0] * x[0]).sqrt()]),
            ),
        ],
        "Lov1" => vec![
            obj(
                |x| 1.05 * x[0] * x[0] + 0.98 * x[1] * x[1],
                |x| v(vec![2.1 * x[0], 1.96 * x[1]]),
            ),
            obj(
                |x| 0.99 * (x[0] - 3.0).powi(2) + 1.03 * (x[1] - 2.5).powi(2),
                |x| v(vec![1.98 * (x[0] - 3.0), 2.06 * (x[1] - 2.5)]),
            ),
        ],
        // f2 = -(x2 - x1^3) / (x1 + 1); singular at x1 = -1, outside the box.
        "Lov2" => vec![
            obj(|x| x[1], |_| v(vec![0.0, 1.0])),
            obj(
                |x| (x[0].powi(3) - x[1]) / (x[0] + 1.0),
                |x| {
                    let q = x[0] + 1.0;
                    v(vec![
                        (3.0 * x[0] * x[0] * q - (x[0].powi(3) - x[1])) / (q * q),
                        -1.0 / q,
                    ])
                },
            ),
        ],
        "Lov3" => vec![
            shifted_square(vec![0.0, 0.0], 1.0),
            obj(
                |x| (x[0] - 6.0).powi(2) - (x[1] + 0.3).powi(2),
                |x| v(vec![2.0 * (x[0] - 6.0), -2.0 * (x[1] + 0.3)]),
            ),
        ],
        "Lov4" => vec![
            obj(
                |x| {
                    let e1 = (-(x[0] + 2.0).powi(2) - x[1] * x[1]).exp();
                    let e2 = (-(x[0] - 2.0).powi(2) - x[1] * x[1]).exp();
                    x[0] * x[0] + x[1] * x[1] + 4.0 * (e1 + e2)
                },
                |x| {
                    let e1 = (-(x[0] + 2.0).powi(2) - x[1] * x[1]).exp();
                    let e2 = (-(x[0] - 2.0).powi(2) - x[1] * x[1]).exp();
                    v(vec![
                        2.0 * x[0] - 8.0 * ((x[0] + 2.0) * e1 + (x[0] - 2.0) * e2),
                        2.0 * x[1] - 8.0 * x[1] * (e1 + e2),
                    ])
                },
            ),
            obj(
                |x| (x[0] - 6.0).powi(2) + (x[1] + 0.5).powi(2),
                |x| v(vec![2.0 * (x[0] - 6.0), 2.0 * (x[1] + 0.5)]),
            ),
        ],
        // Minimization form of the original maximization problem.
        "SK1" => vec![
            obj(
                |x| {
                    let t = x[0];
                    t.powi(4) + 3.0 * t.powi(3) - 10.0 * t * t - 10.0 * t - 10.0
                },
                |x| {
                    let t = x[0];
                    v(vec![4.0 * t.powi(3) + 9.0 * t * t - 20.0 * t - 10.0])
                },
            ),
            obj(
                |x| {
                    let t = x[0];
                    0.5 * t.powi(4) - 2.0 * t.powi(3) - 10.0 * t * t + 10.0 * t - 5.0
                },
                |x| {
                    let t = x[0];
                    v(vec![2.0 * t.powi(3) - 6.0 * t * t - 20.0 * t + 10.0])
                },
            ),
        ],
        "BK1" => vec![
            shifted_square(vec![0.0, 0.0], 1.0),
            shifted_square(vec![5.0, 5.0], 1.0),
        ],
        "SLCDT1" => {
            const C: f64 = 0.85;
            let parts = |x: &DVector<f64>| {
                let p = x[0] + x[1];
                let q = x[0] - x[1];
                let a = (1.0 + p * p).sqrt();
                let b = (1.0 + q * q).sqrt();
                let e = (-q * q).exp();
                (p, q, a, b, e)
            };
            vec![
                obj(
                    move |x| {
                        let (_, q, a, b, e) = parts(x);
                        0.5 * (a + b + q) + C * e
                    },
                    move |x| {
                        let (p, q, a, b, e) = parts(x);
                        v(vec![
                            0.5 * (p / a + q / b + 1.0) - 2.0 * C * q * e,
                            0.5 * (p / a - q / b - 1.0) + 2.0 * C * q * e,
                        ])
                    },
                ),
                obj(
                    move |x| {
                        let (_, q, a, b, e) = parts(x);
                        0.5 * (a + b - q) + C * e
                    },
                    move |x| {
                        let (p, q, a, b, e) = parts(x);
                        v(vec![
                            0.5 * (p / a + q / b - 1.0) - 2.0 * C * q * e,
                            0.5 * (p / a - q / b + 1.0) + 2.0 * C * q * e,
                        ])
                    },
                ),
            ]
        }
        "MOP1" => vec![shifted_square(vec![0.0], 1.0), shifted_square(vec![2.0], 1.0)],
        // Fonseca-Fleming with n = 2: f_{1,2} = 1 - exp(-|x -+ 1/sqrt(n)|^2).
        "MOP2" => {
            let gaussian = |shift: f64| {
                obj(
                    move |x| 1.0 - (-x.map(|xi| (xi - shift).powi(2)).sum()).exp(),
                    move |x| {
                        let e = (-x.map(|xi| (xi - shift).powi(2)).sum()).exp();
                        x.map(|xi| 2.0 * (xi - shift) * e)
                    },
                )
            };
            vec![gaussian(FRAC_1_SQRT_2), gaussian(-FRAC_1_SQRT_2)]
        }
        // f1 = 3 - (1 + x3) cos(h x1) cos(h x2), f2 = 3 - (1 + x3) cos(h x1) sin(h x2),
        // f3 = 3 - (1 + x3) sin(h x1), h = pi / 2.
        "LDTZ" => {
            const H: f64 = PI / 2.0;
            vec![
                obj(
                    |x| 3.0 - (1.0 + x[2]) * (H * x[0]).cos() * (H * x[1]).cos(),
                    |x| {
                        let r = 1.0 + x[2];
                        let (s1, c1) = (H * x[0]).sin_cos();
                        let (s2, c2) = (H * x[1]).sin_cos();
                        v(vec![r * H * s1 * c2, r * H * c1 * s2, -c1 * c2])
                    },
                ),
                obj(
                    |x| 3.0 - (1.0 + x[2]) * (H * x[0]).cos() * (H * x[1]).sin(),
                    |x| {
                        let r = 1.0 + x[2];
                        let (s1, c1) = (H * x[0]).sin_cos();
                        let (s2, c2) = (H * x[1]).sin_cos();
                        v(vec![r * H * s1 * s2, -r * H * c1 * c2, -c1 * s2])
                    },
                ),
                obj(
                    |x| 3.0 - (1.0 + x[2]) * (H * x[0]).sin(),
                    |x| {
                        let r = 1.0 + x[2];
                        let (s1, c1) = (H * x[0]).sin_cos();
                        v(vec![-r * H * c1, 0.0, -s1])
                    },
                ),
            ]
        }
        // a(x1) = 2 pi / 360 (45 + 40 sin(2 pi x1) + 25 sin(2 pi x1)), b(x2) = 1 + 0.5 cos(2 pi x2),
        // f1 = cos(a) b, f2 = sin(a) b, as the formula is commonly stated.
        "Hil1" => {
            const K: f64 = 2.0 * PI / 360.0;
            let angle = |t: f64| {
                let s = (2.0 * PI * t).sin();
                K * (45.0 + 40.0 * s + 25.0 * s)
            };
            let angle_prime = |t: f64| K * 65.0 * 2.0 * PI * (2.0 * PI * t).cos();
            let radius = |t: f64| 1.0 + 0.5 * (2.0 * PI * t).cos();
            let radius_prime = |t: f64| -PI * (2.0 * PI * t).sin();
            vec![
                obj(
                    move |x| angle(x[0]).cos() * radius(x[1]),
                    move |x| {
                        let a = angle(x[0]);
                        v(vec![
                            -a.sin() * angle_prime(x[0]) * radius(x[1]),
                            a.cos() * radius_prime(x[1]),
                        ])
                    },
                ),
                obj(
                    move |x| angle(x[0]).sin() * radius(x[1]),
                    move |x| {
                        let a = angle(x[0]);
                        v(vec![
                            a.cos() * angle_prime(x[0]) * radius(x[1]),
                            a.sin() * radius_prime(x[1]),
                        ])
                    },
                ),
            ]
        }
        "AP2" => vec![
            obj(|x| x[0] * x[0] - 4.0, |x| v(vec![2.0 * x[0]])),
            shifted_square(vec![1.0], 1.0),
        ],
        "AP3" => vec![
            obj(
                |x| 0.25 * ((x[0] - 1.0).powi(4) + 2.0 * (x[1] - 2.0).powi(4)),
                |x| v(vec![(x[0] - 1.0).powi(3), 2.0 * (x[1] - 2.0).powi(3)]),
            ),
            obj(
                |x| (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
                |x| {
                    let r = x[1] - x[0] * x[0];
                    v(vec![-4.0 * x[0] * r - 2.0 * (1.0 - x[0]), 2.0 * r])
                },
            ),
        ],
        "FF1" => {
            let well = |c0: f64, c1: f64| {
                obj(
                    move |x| 1.0 - (-(x[0] - c0).powi(2) - (x[1] - c1).powi(2)).exp(),
                    move |x| {
                        let e = (-(x[0] - c0).powi(2) - (x[1] - c1).powi(2)).exp();
                        v(vec![2.0 * (x[0] - c0) * e, 2.0 * (x[1] - c1) * e])
                    },
                )
            };
            vec![well(1.0, -1.0), well(-1.0, 1.0)]
        }
        "KW2" => vec![obj(kw2_f1, kw2_g1), obj(kw2_f2, kw2_g2)],
        "MHHM1" => vec![
            shifted_square(vec![0.8], 1.0),
            shifted_square(vec![0.85], 1.0),
            shifted_square(vec![0.9], 1.0),
        ],
        "MHHM2" => vec![
            shifted_square(vec![0.8, 0.6], 1.0),
            shifted_square(vec![0.85, 0.7], 1.0),
            shifted_square(vec![0.9, 0.6], 1.0),
        ],
        _ => unreachable!("objectives requested for unregistered id {id}"),
    }
}

fn kw2_f1(x: &DVector<f64>) -> f64 {
    let (a, b) = (x[0], x[1]);
    -3.0 * (1.0 - a).powi(2) * (-a * a - (b + 1.0).powi(2)).exp()
        + 10.0 * (a / 5.0 - a.powi(3) - b.powi(5)) * (-a * a - b * b).exp()
        + 3.0 * (-(a + 2.0).powi(2) - b * b).exp()
        - 0.5 * (2.0 * a + b)
}

fn kw2_g1(x: &DVector<f64>) -> DVector<f64> {
    let (a, b) = (x[0], x[1]);
    let e1 = (-a * a - (b + 1.0).powi(2)).exp();
    let p = (1.0 - a).powi(2);
    let e2 = (-a * a - b * b).exp();
    let q = a / 5.0 - a.powi(3) - b.powi(5);
    let e3 = (-(a + 2.0).powi(2) - b * b).exp();
    v(vec![
        6.0 * (1.0 - a) * e1 + 6.0 * a * p * e1 + 10.0 * e2 * ((0.2 - 3.0 * a * a) - 2.0 * a * q)
            - 6.0 * (a + 2.0) * e3
            - 1.0,
        6.0 * p * (b + 1.0) * e1 + 10.0 * e2 * (-5.0 * b.powi(4) - 2.0 * b * q) - 6.0 * b * e3 - 0.5,
    ])
}

fn kw2_f2(x: &DVector<f64>) -> f64 {
    let (a, b) = (x[0], x[1]);
    -3.0 * (1.0 + b).powi(2) * (-b * b - (1.0 - a).powi(2)).exp()
        + 10.0 * (-b / 5.0 + b.powi(3) + a.powi(5)) * (-a * a - b * b).exp()
        + 3.0 * (-(2.0 - b).powi(2) - a * a).exp()
}

fn kw2_g2(x: &DVector<f64>) -> DVector<f64> {
    let (a, b) = (x[0], x[1]);
    let e1 = (-b * b - (1.0 - a).powi(2)).exp();
    let p = (1.0 + b).powi(2);
    let e2 = (-a * a - b * b).exp();
    let q = -b / 5.0 + b.powi(3) + a.powi(5);
    let e3 = (-(2.0 - b).powi(2) - a * a).exp();
    v(vec![
        -6.0 * p * (1.0 - a) * e1 + 10.0 * e2 * (5.0 * a.powi(4) - 2.0 * a * q) - 6.0 * a * e3,
        -6.0 * (1.0 + b) * e1 + 6.0 * b * p * e1 + 10.0 * e2 * ((-0.2 + 3.0 * b * b) - 2.0 * b * q)
            + 6.0 * (2.0 - b) * e3,
    ])
}

/// Builds the registered problem `id`.
pub fn get_problem(id: &str) -> Result<MopProblem> {
    let desc = get_descriptor(id)?;
    let objs = objectives(desc.id, desc.n);
    debug_assert_eq!(objs.len(), desc.m);
    MopProblem::new(desc.id, desc.box_low, desc.box_high, objs)
}

/// `count` starting points drawn uniformly from the box. The stream depends
/// only on `seed`, so every method sees the same starts.
pub fn sample_starts(problem: &MopProblem, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| problem.sample_point(&mut rng)).collect()
}
