//! The litter taxonomy shared by the scene generator, the reference
//! detector, and the on-disk annotation formats.
//!
//! Four classes, each with a fixed prototype color.  The generator shades
//! objects around the prototype and keeps the riverbed background well away
//! from every prototype; the detector thresholds on distance to the same
//! prototypes.  Keeping the palette here, in one place, is what makes that
//! contract hold.

/// Litter classes, in canonical id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LitterClass {
    PlasticBottle = 0,
    GlassBottle = 1,
    Can = 2,
    PlasticBag = 3,
}

impl LitterClass {
    pub const ALL: [LitterClass; 4] = [
        LitterClass::PlasticBottle,
        LitterClass::GlassBottle,
        LitterClass::Can,
        LitterClass::PlasticBag,
    ];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn from_id(id: u32) -> Option<LitterClass> {
        Self::ALL.get(id as usize).copied()
    }

    /// Stable wire name used in annotation and detection JSON.
    pub fn name(self) -> &'static str {
        match self {
            LitterClass::PlasticBottle => "plastic_bottle",
            LitterClass::GlassBottle => "glass_bottle",
            LitterClass::Can => "can",
            LitterClass::PlasticBag => "plastic_bag",
        }
    }

    pub fn from_name(name: &str) -> Option<LitterClass> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Prototype color in linear [0, 1] RGB.
    ///
    /// Pairwise Euclidean distance between prototypes is >= 0.15, and the
    /// riverbed palette in `scenegen` keeps at least the detector's default
    /// color tolerance away from all four.  Checked by tests on both sides.
    pub fn prototype_rgb(self) -> [f32; 3] {
        match self {
            // Icy translucent blue-white.
            LitterClass::PlasticBottle => [0.78, 0.86, 0.90],
            // Deep bottle green.
            LitterClass::GlassBottle => [0.02, 0.26, 0.06],
            // Weathered red-brown aluminium.
            LitterClass::Can => [0.66, 0.26, 0.22],
            // Pale sun-bleached film.
            LitterClass::PlasticBag => [0.92, 0.89, 0.70],
        }
    }
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
