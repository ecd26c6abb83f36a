//! System parameters, random deployment geometry, large-scale fading and pilot assignment.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result, Violation, Violations};
use crate::linalg::{CMatrix, ONE};
use crate::rng::Seed;

/// Distance-based large-scale fading in dB:
/// `intercept_db - slope_db * log10(d / 1 m)` plus log-normal shadowing.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PathLossModel {
    pub intercept_db: f64,
    pub slope_db: f64,
    pub shadowing_std_db: f64,
    /// Vertical AP/user separation folded into the 3-D distance.
    pub height_diff_m: f64,
    /// Distances are clamped from below to this value.
    pub d_min_m: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self { intercept_db: -30.5, slope_db: 36.7, shadowing_std_db: 4.0, height_diff_m: 10.0, d_min_m: 1.0 }
    }
}

impl PathLossModel {
    /// 3-D distance between a ground point pair, floored at `d_min_m`.
    pub fn distance(&self, a: Point, b: Point) -> f64 {
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        let d = libm::sqrt(dx * dx + dy * dy + self.height_diff_m * self.height_diff_m);
        d.max(self.d_min_m)
    }

    /// Median gain in dB at distance `d` (already floored or not).
    pub fn gain_db(&self, d: f64) -> f64 {
        self.intercept_db - self.slope_db * libm::log10(d.max(self.d_min_m))
    }

    /// Linear gain with a standard-normal shadowing draw `z`.
    pub fn gain(&self, d: f64, z: f64) -> f64 {
        db_to_linear(self.gain_db(d) + self.shadowing_std_db * z)
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        let fields = [
            ("intercept_db", self.intercept_db, self.intercept_db.is_finite()),
            ("slope_db", self.slope_db, self.slope_db.is_finite() && self.slope_db >= 0.0),
            ("shadowing_std_db", self.shadowing_std_db, self.shadowing_std_db.is_finite() && self.shadowing_std_db >= 0.0),
            ("height_diff_m", self.height_diff_m, self.height_diff_m.is_finite() && self.height_diff_m >= 0.0),
            ("d_min_m", self.d_min_m, self.d_min_m.is_finite() && self.d_min_m > 0.0),
        ];
        for (field, value, ok) in fields {
            if !ok {
                out.push(Violation::PathLoss { field, value });
            }
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

/// Scalar system parameters. Powers are linear and normalized by the noise power.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemConfig {
    /// Number of APs.
    pub l: usize,
    /// Antennas per AP.
    pub n: usize,
    /// Number of users.
    pub k: usize,
    /// Antennas per user.
    pub m: usize,
    pub tau_p: usize,
    pub tau_c: usize,
    /// Number of mutually orthogonal pilot matrices.
    pub k_prime: usize,
    /// Uplink pilot power per user.
    pub q_ul: f64,
    /// Per-AP downlink power budget.
    pub rho_d: f64,
    pub area_side_m: f64,
    pub path_loss: PathLossModel,
}

impl Default for SystemConfig {
    fn default() -> Self {
        // 100 mW uplink and 1 W per AP against a -94 dBm noise floor.
        Self {
            l: 10,
            n: 4,
            k: 5,
            m: 2,
            tau_p: 10,
            tau_c: 200,
            k_prime: 5,
            q_ul: db_to_linear(114.0),
            rho_d: db_to_linear(124.0),
            area_side_m: 1000.0,
            path_loss: PathLossModel::default(),
        }
    }
}

impl SystemConfig {
    /// Every broken invariant, or `Ok` if there are none.
    pub fn validate(&self) -> core::result::Result<(), Violations> {
        let mut v = Vec::new();
        for (field, value) in [
            ("L", self.l),
            ("N", self.n),
            ("K", self.k),
            ("M", self.m),
            ("tau_p", self.tau_p),
            ("tau_c", self.tau_c),
            ("K_prime", self.k_prime),
        ] {
            if value == 0 {
                v.push(Violation::NonPositive { field });
            }
        }
        for (field, value) in [("q_ul", self.q_ul), ("rho_d", self.rho_d), ("area_side_m", self.area_side_m)] {
            if !(value > 0.0 && value.is_finite()) {
                v.push(Violation::NonPositive { field });
            }
        }
        if self.tau_p != self.k_prime * self.m {
            v.push(Violation::PilotLength { tau_p: self.tau_p, k_prime: self.k_prime, m: self.m });
        }
        if 2 * self.tau_p >= self.tau_c {
            v.push(Violation::PrelogNotPositive { tau_p: self.tau_p, tau_c: self.tau_c });
        }
        if self.k_prime > self.k {
            v.push(Violation::TooManyPilotGroups { k_prime: self.k_prime, k: self.k });
        } else if self.k_prime > 0 && !self.k.is_multiple_of(self.k_prime) {
            v.push(Violation::UnevenPilotGroups { k: self.k, k_prime: self.k_prime });
        }
        self.path_loss.violations(&mut v);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Violations(v))
        }
    }

    pub fn check(&self) -> Result<()> {
        self.validate().map_err(Error::Config)
    }

    /// Pre-log factor for bounds that spend only the uplink pilot phase.
    pub fn prelog_single(&self) -> f64 {
        1.0 - self.tau_p as f64 / self.tau_c as f64
    }

    /// Pre-log factor when downlink pilots are sent as well.
    pub fn prelog_double(&self) -> f64 {
        1.0 - 2.0 * self.tau_p as f64 / self.tau_c as f64
    }

    /// Total AP antennas `L N`.
    pub fn ln(&self) -> usize {
        self.l * self.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Geometry {
    pub ap_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    /// `beta[l * K + k]`, linear gain.
    beta: Vec<f64>,
    k: usize,
}

impl Geometry {
    /// Builds a geometry from explicit large-scale gains, laid out `[l][k]`.
    pub fn from_beta(ap_positions: Vec<Point>, user_positions: Vec<Point>, beta: Vec<Vec<f64>>) -> Self {
        let k = user_positions.len();
        assert_eq!(beta.len(), ap_positions.len());
        let flat: Vec<f64> = beta.into_iter().flat_map(|row| {
            assert_eq!(row.len(), k);
            row
        }).collect();
        Self { ap_positions, user_positions, beta: flat, k }
    }

    /// Unit positions with constant gain, for tests and synthetic setups.
    pub fn uniform(l: usize, k: usize, beta: f64) -> Self {
        let origin = Point { x: 0.0, y: 0.0 };
        Self { ap_positions: vec![origin; l], user_positions: vec![origin; k], beta: vec![beta; l * k], k }
    }

    #[inline]
    pub fn beta(&self, l: usize, k: usize) -> f64 {
        self.beta[l * self.k + k]
    }

    pub fn set_beta(&mut self, l: usize, k: usize, value: f64) {
        self.beta[l * self.k + k] = value;
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.k
    }
}

/// Drops `L` APs and `K` users uniformly in the square and draws their large-scale gains.
///
/// Draw order is fixed: AP coordinates, then user coordinates, then shadowing
/// in `(l, k)` row-major order.
pub fn generate_geometry(config: &SystemConfig, seed: Seed) -> Geometry {
    let mut rng = seed.rng();
    let side = config.area_side_m;
    let draw_point = |rng: &mut crate::rng::SimRng| Point { x: rng.random::<f64>() * side, y: rng.random::<f64>() * side };
    let ap_positions: Vec<Point> = (0..config.l).map(|_| draw_point(&mut rng)).collect();
    let user_positions: Vec<Point> = (0..config.k).map(|_| draw_point(&mut rng)).collect();
    let pl = &config.path_loss;
    let mut beta = Vec::with_capacity(config.l * config.k);
    for ap in &ap_positions {
        for user in &user_positions {
            let z: f64 = rng.sample(StandardNormal);
            beta.push(pl.gain(pl.distance(*ap, *user), z));
        }
    }
    Geometry { ap_positions, user_positions, beta, k: config.k }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PilotBook {
    /// `K'` matrices of size `tau_p × M` with orthonormal columns.
    pub pilot_matrices: Vec<CMatrix>,
    /// User index → pilot matrix index.
    pub assignment: Vec<usize>,
    /// For each user, the sorted users sharing its pilot matrix (itself included).
    pub sharing_sets: Vec<Vec<usize>>,
}

impl PilotBook {
    /// Builds a book from an explicit assignment.
    pub fn from_assignment(tau_p: usize, m: usize, k_prime: usize, assignment: Vec<usize>) -> Result<Self> {
        if k_prime * m > tau_p {
            return Err(Error::PilotsDoNotFit { k_prime, m, tau_p });
        }
        let pilot_matrices = (0..k_prime)
            .map(|j| {
                let mut phi = CMatrix::zeros(tau_p, m);
                for c in 0..m {
                    phi[(j * m + c, c)] = ONE;
                }
                phi
            })
            .collect();
        let sharing_sets = assignment
            .iter()
            .map(|&g| assignment.iter().enumerate().filter(|&(_, &h)| h == g).map(|(i, _)| i).collect())
            .collect();
        Ok(Self { pilot_matrices, assignment, sharing_sets })
    }

    /// Every user on its own pilot matrix.
    pub fn orthogonal(config: &SystemConfig) -> Result<Self> {
        Self::from_assignment(config.tau_p, config.m, config.k, (0..config.k).collect())
    }

    pub fn pilot(&self, user: usize) -> &CMatrix {
        &self.pilot_matrices[self.assignment[user]]
    }

    pub fn sharing_set(&self, user: usize) -> &[usize] {
        &self.sharing_sets[user]
    }

    /// Users other than `user` on the same pilot.
    pub fn contaminators(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        self.sharing_sets[user].iter().copied().filter(move |&i| i != user)
    }
}

/// Identity-column-block pilots with users grouped uniformly at random.
pub fn build_pilot_book(config: &SystemConfig, seed: Seed) -> Result<PilotBook> {
    let (k, kp, m, tau_p) = (config.k, config.k_prime, config.m, config.tau_p);
    if kp * m > tau_p {
        return Err(Error::PilotsDoNotFit { k_prime: kp, m, tau_p });
    }
    if kp == 0 || kp > k || k % kp != 0 {
        return Err(Error::Config(Violations(vec![Violation::UnevenPilotGroups { k, k_prime: kp }])));
    }
    let mut users: Vec<usize> = (0..k).collect();
    users.shuffle(&mut seed.rng());
    let group = k / kp;
    let mut assignment = vec![0; k];
    for (slot, &u) in users.iter().enumerate() {
        assignment[u] = slot / group;
    }
    PilotBook::from_assignment(tau_p, m, kp, assignment)
}
