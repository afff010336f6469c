//! Named experiment presets for the figure suite.

use spde_core::{InitialDatum, Problem, SchemeKind, Space};

pub const FEM_N: usize = 100;
pub const SPECTRAL_N: usize = 256;
pub const TAUS: [f64; 3] = [0.1, 0.01, 0.001];
/// Horizon of the long-time figures.
pub const LONG_T: f64 = 100.0;
/// Horizon of the short-time figures.
pub const SHORT_T: f64 = 1.0;
pub const DEFAULT_TRIALS: usize = 10_000;

pub const HUNDRED_GRADIENT_CAVEAT: &str =
    "moments plateau far above the other schemes (beyond a shared vertical scale); \
     compare on its own axis";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataKind {
    Zero,
    One,
    Hundred,
    Sine,
}

impl DataKind {
    pub const ALL: [DataKind; 4] = [
        DataKind::Zero,
        DataKind::One,
        DataKind::Hundred,
        DataKind::Sine,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DataKind::Zero => "zero",
            DataKind::One => "one",
            DataKind::Hundred => "hundred",
            DataKind::Sine => "sine",
        }
    }

    /// `10 sin(10 pi x)` on the FEM interval, `10 sin(10 x)` on the torus.
    pub fn datum(self, space: &Space) -> InitialDatum {
        match (self, space) {
            (DataKind::Zero, _) => InitialDatum::Constant(0.0),
            (DataKind::One, _) => InitialDatum::Constant(1.0),
            (DataKind::Hundred, _) => InitialDatum::Constant(100.0),
            (DataKind::Sine, Space::FemDirichlet { .. }) => InitialDatum::SineDirichlet {
                amplitude: 10.0,
                frequency: 10,
            },
            (DataKind::Sine, Space::SpectralPeriodic { .. }) => InitialDatum::SinePeriodic {
                amplitude: 10.0,
                frequency: 10,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Fem,
    Spectral,
}

impl SpaceKind {
    pub fn label(self) -> &'static str {
        match self {
            SpaceKind::Fem => "fem",
            SpaceKind::Spectral => "spectral",
        }
    }

    pub fn space(self) -> Space {
        match self {
            SpaceKind::Fem => Space::FemDirichlet { n: FEM_N },
            SpaceKind::Spectral => Space::SpectralPeriodic { n: SPECTRAL_N },
        }
    }
}

/// One (data, space, scheme) combination, run at every step in [`TAUS`].
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub data: DataKind,
    pub space: SpaceKind,
    pub scheme: &'static str,
    pub caveat: Option<&'static str>,
}

impl Preset {
    pub fn name(&self) -> String {
        format!(
            "{}-{}-{}",
            self.data.label(),
            self.space.label(),
            self.scheme
        )
    }

    pub fn problem(&self) -> Problem {
        let space = self.space.space();
        Problem::cubic(space, self.data.datum(&space))
    }

    pub fn scheme_kind(&self) -> SchemeKind {
        let problem = self.problem();
        SchemeKind::from_name(self.scheme, problem.alpha()).expect("preset scheme names are valid")
    }
}

pub fn all_presets() -> Vec<Preset> {
    let mut out = Vec::with_capacity(56);
    for space in [SpaceKind::Fem, SpaceKind::Spectral] {
        for data in DataKind::ALL {
            for scheme in spde_core::schemes::SCHEME_NAMES {
                let caveat = (data == DataKind::Hundred
                    && space == SpaceKind::Spectral
                    && scheme == "tame-gradient")
                    .then_some(HUNDRED_GRADIENT_CAVEAT);
                out.push(Preset {
                    data,
                    space,
                    scheme,
                    caveat,
                });
            }
        }
    }
    out
}

pub fn find_preset(name: &str) -> Option<Preset> {
    all_presets().into_iter().find(|p| p.name() == name)
}

const SHORT_SCHEMES: [&str; 5] = ["fie", "gyongy", "tame-pointwise", "gtem", "tame-global"];

/// Presets and horizon of a figure, `fig1` to `fig11`.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub id: String,
    pub title: &'static str,
    pub presets: Vec<Preset>,
    pub t_final: f64,
}

pub const FIGURE_IDS: [&str; 11] = [
    "fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11",
];

pub fn figure(id: &str) -> Option<Figure> {
    let pick = |data: DataKind, space: SpaceKind, schemes: &[&str]| -> Vec<Preset> {
        all_presets()
            .into_iter()
            .filter(|p| p.data == data && p.space == space && schemes.contains(&p.scheme))
            .collect()
    };
    let all = &spde_core::schemes::SCHEME_NAMES[..];
    let (title, presets, t_final) = match id {
        "fig1" => (
            "FEM, u0 = 0",
            pick(DataKind::Zero, SpaceKind::Fem, all),
            LONG_T,
        ),
        "fig2" => (
            "FEM, u0 = 1",
            pick(DataKind::One, SpaceKind::Fem, all),
            LONG_T,
        ),
        "fig3" => (
            "FEM, u0 = 100",
            pick(DataKind::Hundred, SpaceKind::Fem, all),
            LONG_T,
        ),
        "fig4" => (
            "FEM, u0 = 10 sin(10 pi x)",
            pick(DataKind::Sine, SpaceKind::Fem, all),
            LONG_T,
        ),
        "fig5" => (
            "spectral, u0 = 0",
            pick(DataKind::Zero, SpaceKind::Spectral, all),
            LONG_T,
        ),
        "fig6" => (
            "spectral, u0 = 1",
            pick(DataKind::One, SpaceKind::Spectral, all),
            LONG_T,
        ),
        "fig7" => (
            "spectral, u0 = 100",
            pick(DataKind::Hundred, SpaceKind::Spectral, all),
            LONG_T,
        ),
        "fig8" => (
            "spectral, u0 = 10 sin(10 x)",
            pick(DataKind::Sine, SpaceKind::Spectral, all),
            LONG_T,
        ),
        "fig9" => (
            "spectral tame-gradient observables, u0 = 100",
            pick(DataKind::Hundred, SpaceKind::Spectral, &["tame-gradient"]),
            LONG_T,
        ),
        "fig10" => (
            "FEM short time, u0 = 100",
            pick(DataKind::Hundred, SpaceKind::Fem, &SHORT_SCHEMES),
            SHORT_T,
        ),
        "fig11" => (
            "spectral short time, u0 = 100",
            pick(DataKind::Hundred, SpaceKind::Spectral, &SHORT_SCHEMES),
            SHORT_T,
        ),
        _ => return None,
    };
    Some(Figure {
        id: id.into(),
        title,
        presets,
        t_final,
    })
}
