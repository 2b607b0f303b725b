//! Exchange rounds on static topologies.

mod common;

use common::delivery;

#[test]
fn line_end_to_end_takes_diameter_rounds() {
    delivery::line_end_to_end_takes_diameter_rounds();
}

#[test]
fn line_from_middle() {
    delivery::line_from_middle();
}

#[test]
fn ring_takes_half_the_circumference() {
    delivery::ring_takes_half_the_circumference();
}

#[test]
fn grid_corner_to_corner() {
    delivery::grid_corner_to_corner();
}
