//! Geodetic and local-plane geometry primitives.
//!
//! All distance work downstream happens in a local tangent plane: an
//! equirectangular projection anchored at the centroid of the data. At the
//! few-kilometre scale of a port-to-port route the planar error is far below
//! GPS noise, and working in metres keeps clustering thresholds physical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Projection origins closer than this to a pole are rejected as degenerate.
const MAX_ORIGIN_LAT_DEG: f64 = 89.0;

/// A position in geodetic degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() || !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::InvalidGeoPoint { lat, lon });
        }
        Ok(GeoPoint { lat, lon })
    }
}

/// A position in metres east/north of a projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalPoint {
    pub x: f64,
    pub y: f64,
}

impl LocalPoint {
    pub fn new(x: f64, y: f64) -> Self {
        LocalPoint { x, y }
    }
}

/// Equirectangular local-tangent projection centred on an origin point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub origin: GeoPoint,
    pub meters_per_deg_lat: f64,
    pub meters_per_deg_lon: f64,
}

/// Builds the local projection. Polar origins are rejected: the longitude
/// scale collapses there and the route model does not apply.
pub fn make_projection(origin: GeoPoint) -> Result<Projection> {
    GeoPoint::new(origin.lat, origin.lon)?;
    if origin.lat.abs() > MAX_ORIGIN_LAT_DEG {
        return Err(Error::DegenerateProjection { lat: origin.lat });
    }
    let meters_per_deg_lat = std::f64::consts::PI * EARTH_RADIUS_M / 180.0;
    let meters_per_deg_lon = meters_per_deg_lat * origin.lat.to_radians().cos();
    Ok(Projection {
        origin,
        meters_per_deg_lat,
        meters_per_deg_lon,
    })
}

pub fn project(p: GeoPoint, proj: &Projection) -> LocalPoint {
    LocalPoint {
        x: (p.lon - proj.origin.lon) * proj.meters_per_deg_lon,
        y: (p.lat - proj.origin.lat) * proj.meters_per_deg_lat,
    }
}

/// Inverse of [`project`].
pub fn unproject(p: LocalPoint, proj: &Projection) -> GeoPoint {
    GeoPoint {
        lat: proj.origin.lat + p.y / proj.meters_per_deg_lat,
        lon: proj.origin.lon + p.x / proj.meters_per_deg_lon,
    }
}

pub fn euclidean_distance(a: LocalPoint, b: LocalPoint) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Great-circle distance on the mean-radius sphere.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lon1) = (a.lat.to_radians(), a.lon.to_radians());
    let (lat2, lon2) = (b.lat.to_radians(), b.lon.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn projection_scale_at_59_4() {
        let proj = make_projection(GeoPoint::new(59.4, 18.35).unwrap()).unwrap();
        // Closed-form: pi * 6371000 / 180 and its cosine scaling.
        assert_relative_eq!(proj.meters_per_deg_lat, 111194.9266, epsilon = 1e-3);
        // 111194.9266 * cos(59.4 deg)
        assert_relative_eq!(proj.meters_per_deg_lon, 56602.8229, epsilon = 1e-3);
    }

    #[test]
    fn projection_equator_scales_equal() {
        let proj = make_projection(GeoPoint::new(0.0, 0.0).unwrap()).unwrap();
        assert_eq!(proj.meters_per_deg_lat, proj.meters_per_deg_lon);
    }

    #[test]
    fn polar_origin_rejected() {
        let err = make_projection(GeoPoint { lat: 90.0, lon: 0.0 });
        assert!(matches!(err, Err(Error::DegenerateProjection { .. })));
    }

    #[test]
    fn invalid_point_rejected() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, 181.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn project_origin_is_zero() {
        let origin = GeoPoint::new(59.4, 18.35).unwrap();
        let proj = make_projection(origin).unwrap();
        let p = project(origin, &proj);
        assert_eq!(p, LocalPoint::new(0.0, 0.0));
    }

    #[test]
    fn project_known_offsets() {
        let proj = make_projection(GeoPoint::new(59.4, 18.35).unwrap()).unwrap();
        let north = project(GeoPoint::new(59.41, 18.35).unwrap(), &proj);
        assert_relative_eq!(north.y, 1111.9493, epsilon = 1e-3);
        assert_relative_eq!(north.x, 0.0, epsilon = 1e-9);
        let east = project(GeoPoint::new(59.4, 18.36).unwrap(), &proj);
        assert_relative_eq!(east.x, 566.028229, epsilon = 1e-3);
        assert_relative_eq!(east.y, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean_distance(LocalPoint::new(0.0, 0.0), LocalPoint::new(0.0, 0.0)), 0.0);
        assert_eq!(euclidean_distance(LocalPoint::new(0.0, 0.0), LocalPoint::new(3.0, 4.0)), 5.0);
        assert_eq!(euclidean_distance(LocalPoint::new(1.0, 1.0), LocalPoint::new(-2.0, 5.0)), 5.0);
    }

    #[test]
    fn haversine_identity_and_meridian_degree() {
        let a = GeoPoint::new(12.3, 45.6).unwrap();
        assert_eq!(haversine_distance(a, a), 0.0);
        let d = haversine_distance(GeoPoint::new(0.0, 0.0).unwrap(), GeoPoint::new(1.0, 0.0).unwrap());
        assert_relative_eq!(d, 111194.9266, epsilon = 1e-3);
    }

    /// Independent haversine oracle written against the textbook formula with
    /// the atan2 form, distinct from the asin form in the implementation.
    fn haversine_oracle(a: GeoPoint, b: GeoPoint) -> f64 {
        let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
        let dp = (b.lat - a.lat).to_radians();
        let dl = (b.lon - a.lon).to_radians();
        let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).sqrt())
    }

    #[test]
    fn haversine_matches_oracle() {
        let a = GeoPoint::new(59.0, 18.0).unwrap();
        let b = GeoPoint::new(59.0, 19.0).unwrap();
        let d = haversine_distance(a, b);
        let oracle = haversine_oracle(a, b);
        assert_relative_eq!(d, oracle, max_relative = 1e-6);
    }

    fn geo_near_stockholm() -> impl Strategy<Value = GeoPoint> {
        (59.35f64..59.45, 18.30f64..18.40).prop_map(|(lat, lon)| GeoPoint { lat, lon })
    }

    proptest! {
        #[test]
        fn distance_symmetry(ax in -1e4f64..1e4, ay in -1e4f64..1e4, bx in -1e4f64..1e4, by in -1e4f64..1e4) {
            let a = LocalPoint::new(ax, ay);
            let b = LocalPoint::new(bx, by);
            prop_assert_eq!(euclidean_distance(a, b), euclidean_distance(b, a));
        }

        #[test]
        fn haversine_symmetry(a in geo_near_stockholm(), b in geo_near_stockholm()) {
            let d1 = haversine_distance(a, b);
            let d2 = haversine_distance(b, a);
            prop_assert!((d1 - d2).abs() < 1e-9);
        }

        #[test]
        fn triangle_inequality(
            ax in -1e4f64..1e4, ay in -1e4f64..1e4,
            bx in -1e4f64..1e4, by in -1e4f64..1e4,
            cx in -1e4f64..1e4, cy in -1e4f64..1e4,
        ) {
            let (a, b, c) = (LocalPoint::new(ax, ay), LocalPoint::new(bx, by), LocalPoint::new(cx, cy));
            prop_assert!(euclidean_distance(a, c) <= euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-9);
        }

        #[test]
        fn projection_round_trip(p in geo_near_stockholm()) {
            let proj = make_projection(GeoPoint::new(59.4, 18.35).unwrap()).unwrap();
            let back = unproject(project(p, &proj), &proj);
            prop_assert!((back.lat - p.lat).abs() < 1e-9);
            prop_assert!((back.lon - p.lon).abs() < 1e-9);
        }

        #[test]
        fn planar_approximation_within_5km(a in geo_near_stockholm(), b in geo_near_stockholm()) {
            let proj = make_projection(GeoPoint::new(59.4, 18.35).unwrap()).unwrap();
            let h = haversine_distance(a, b);
            prop_assume!(h > 1.0);
            let e = euclidean_distance(project(a, &proj), project(b, &proj));
            // Equirectangular error is bounded by the lon-scale drift across
            // the band: delta_lat_rad * tan(lat) ~ 1.5e-3 relative here.
            prop_assert!((e - h).abs() / h < 3e-3);
        }
    }
}
