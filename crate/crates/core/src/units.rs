//! Grid/metric unit conversion. The survey grid is indexed by ceiling tile;
//! one tile is 2 ft on a side, exactly 0.6096 m.

/// Side of one ceiling tile in meters (2 ft, exact).
pub const TILE_METERS: f64 = 0.6096;

/// Side of one ceiling tile in feet.
pub const TILE_FEET: f64 = 2.0;

/// Convert a tile-count delta to meters. Linear and exact: `delta * 0.6096`.
pub fn tiles_to_meters(delta_tiles: f64) -> f64 {
    delta_tiles * TILE_METERS
}

/// Convert a tile-count delta to feet.
pub fn tiles_to_feet(delta_tiles: f64) -> f64 {
    delta_tiles * TILE_FEET
}

/// Convert meters back to tile units.
pub fn meters_to_tiles(meters: f64) -> f64 {
    meters / TILE_METERS
}
