//! Measurements of the angular bias in activation energy and in where
//! nearest-neighbour matches land on the image plane.

mod circular;
mod energy;
mod matches;

pub use circular::{circular_stats, AngularStats};
pub use energy::{aggregate_energy, EnergySummary, RadialProfile, SECTORS};
pub use matches::{
    angular_stats, class_report, conditional_match_distribution, confusion_radius, match_histogram,
    match_locations, radial_tangential_variance, write_class_report, ClassSymmetryRow,
    ConditionalHistogram, MatchPoint, MatchSet, Pairing, RadTanVariance, Weighting,
};
