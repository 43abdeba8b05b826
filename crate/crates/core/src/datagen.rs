//! Seeded synthetic interaction datasets.
//!
//! Eighteen site profiles follow the public Minnesota deployment (lanes,
//! speed limits, markings, traffic volumes, intersection shapes, event
//! counts). Covariates are drawn per site, and outcomes are drawn from a
//! fixed logistic model over seven of them, so refitting the model on the
//! generated data recovers those effects while the remaining twelve
//! variables act as correlated noise.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::data::{InteractionEvent, Markings, Site, SiteShape, Value};
use crate::logit::sigmoid;
use crate::schema::default_schema;

/// Generating coefficients of the outcome model (log-odds scale).
pub mod coefficients {
    pub const INTERCEPT: f64 = -1.50;
    pub const CROSSING_WIDTH: f64 = 0.098;
    pub const RESTAURANTS_BARS: f64 = 1.832;
    pub const VEHICLE_SPEED: f64 = -0.240;
    pub const DIST_SCHOOL: f64 = -0.446;
    pub const PARKING_LOTS: f64 = -1.624;
    pub const ODY_YIELD: f64 = -1.644;
    pub const DIST_PARK: f64 = -4.095;
}

struct SiteProfile {
    site_id: u32,
    lanes: u32,
    speed_limit: u32,
    markings: Markings,
    aadt: u32,
    shape: SiteShape,
    events: usize,
    mean_speed: f64,
    speed_sd: f64,
    /// Site means; per-event draws add measurement jitter.
    crossing_width: f64,
    dist_park: f64,
    dist_school: f64,
    bus_stops: u32,
    single_family: bool,
    apartments: bool,
    commercial: bool,
    gas_station: bool,
    restaurants: bool,
    parking_lots: bool,
    on_street_parking: &'static str,
    bike_lanes: bool,
    signage: bool,
    /// Probability that an opposite-direction vehicle is present.
    oncoming_rate: f64,
}

use Markings::{Continental, Standard, Unmarked};
use SiteShape::{FourWay, TShape};

#[rustfmt::skip]
fn site_profiles() -> Vec<SiteProfile> {
    // (site, lanes, limit, markings, aadt, shape, events) follow the
    // published site table; the remaining columns are synthetic controls.
    let rows: Vec<(u32, u32, u32, Markings, u32, SiteShape, usize,
                   f64, f64, f64, f64, f64, u32,
                   bool, bool, bool, bool, bool, bool, &'static str, bool, bool, f64)> = vec![
        (1,  4, 35, Unmarked,    14_600, TShape,  31,  19.5, 7.0, 50.0, 0.30, 1.00, 1, false, true,  false, false, false, false, "No parking",        false, false, 0.55),
        (2,  2, 35, Unmarked,    14_800, TShape,  100, 15.5, 6.5, 51.0, 0.18, 0.60, 2, true,  false, false, false, false, false, "Two-sided parking", false, true,  0.60),
        (3,  2, 30, Standard,    14_800, TShape,  640, 11.5, 5.5, 55.0, 0.12, 0.35, 4, false, false, true,  false, true,  true,  "Two-sided parking", false, true,  0.70),
        (4,  2, 30, Unmarked,    10_700, FourWay, 143, 23.0, 6.5, 45.0, 0.28, 0.80, 0, true,  false, false, false, false, false, "No parking",        false, false, 0.55),
        (5,  2, 30, Unmarked,    10_500, FourWay, 341, 21.5, 6.5, 47.0, 0.30, 0.70, 1, true,  false, true,  true,  false, false, "One-sided parking", false, false, 0.60),
        (6,  3, 35, Continental, 6_200,  FourWay, 95,  17.5, 6.0, 49.0, 0.22, 0.90, 2, false, true,  false, false, false, false, "No parking",        false, true,  0.55),
        (7,  4, 35, Continental, 3_300,  TShape,  121, 19.5, 6.0, 49.5, 0.28, 0.50, 3, false, false, true,  true,  true,  false, "One-sided parking", false, false, 0.50),
        (8,  4, 30, Unmarked,    10_200, FourWay, 105, 23.5, 6.5, 46.0, 0.30, 1.40, 1, false, false, false, false, false, false, "No parking",        false, false, 0.55),
        (9,  3, 35, Unmarked,    5_400,  FourWay, 74,  30.0, 6.5, 45.0, 0.48, 2.60, 0, false, false, false, false, false, true,  "No parking",        true,  false, 0.50),
        (10, 4, 35, Unmarked,    18_800, FourWay, 88,  25.0, 6.5, 46.0, 0.40, 1.80, 1, false, false, false, false, false, false, "No parking",        true,  false, 0.60),
        (11, 3, 30, Unmarked,    18_100, FourWay, 20,  31.0, 6.0, 45.0, 0.50, 1.00, 0, false, true,  false, false, false, true,  "No parking",        true,  false, 0.60),
        (12, 2, 30, Unmarked,    10_300, FourWay, 122, 24.5, 6.5, 46.0, 0.40, 0.90, 1, true,  false, false, false, false, false, "One-sided parking", false, false, 0.55),
        (13, 2, 35, Continental, 7_400,  FourWay, 98,  14.5, 5.5, 52.0, 0.14, 0.45, 3, false, true,  true,  true,  false, false, "One-sided parking", false, true,  0.60),
        (14, 2, 30, Standard,    7_100,  FourWay, 133, 12.5, 5.5, 54.0, 0.12, 0.50, 4, true,  false, true,  false, true,  true,  "Two-sided parking", false, true,  0.65),
        (15, 3, 30, Unmarked,    16_400, FourWay, 46,  30.5, 6.0, 44.0, 0.52, 1.10, 0, false, false, false, false, false, true,  "No parking",        true,  false, 0.60),
        (16, 2, 30, Standard,    12_100, FourWay, 841, 12.0, 5.0, 54.0, 0.18, 0.35, 5, true,  false, true,  true,  true,  false, "Two-sided parking", false, true,  0.70),
        (17, 4, 30, Unmarked,    12_800, TShape,  127, 25.0, 6.5, 46.0, 0.43, 1.60, 1, false, false, false, false, false, false, "No parking",        true,  false, 0.55),
        (18, 4, 30, Unmarked,    12_500, FourWay, 189, 23.5, 7.0, 47.0, 0.36, 1.30, 2, false, true,  true,  false, false, false, "No parking",        false, false, 0.55),
    ];
    rows.into_iter()
        .map(|r| SiteProfile {
            site_id: r.0, lanes: r.1, speed_limit: r.2, markings: r.3, aadt: r.4,
            shape: r.5, events: r.6, mean_speed: r.7, speed_sd: r.8,
            crossing_width: r.9, dist_park: r.10, dist_school: r.11, bus_stops: r.12,
            single_family: r.13, apartments: r.14, commercial: r.15, gas_station: r.16,
            restaurants: r.17, parking_lots: r.18, on_street_parking: r.19,
            bike_lanes: r.20, signage: r.21, oncoming_rate: r.22,
        })
        .collect()
}

const PEDESTRIAN_TYPES: [(&str, f64); 8] = [
    ("Foot", 0.70),
    ("Bike", 0.07),
    ("Vehicle", 0.02),
    ("Walking bike", 0.02),
    ("With a dog", 0.06),
    ("Stroller/Child", 0.06),
    ("Mix", 0.05),
    ("Other", 0.02),
];

fn yes_no(b: bool) -> Value {
    Value::Categorical(if b { "Yes" } else { "No" }.to_string())
}

/// Generates events for the listed (site_id, event_count) pairs plus the
/// matching site table. Identical (seed, counts, missing_rate) inputs
/// produce identical datasets.
pub fn generate(
    seed: u64,
    counts: &[(u32, usize)],
    missing_rate: f64,
) -> (Vec<InteractionEvent>, Vec<Site>) {
    let profiles = site_profiles();
    let schema = default_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut sites = Vec::new();
    let mut sequence = 0usize;

    for &(site_id, n_events) in counts {
        let profile = profiles
            .iter()
            .find(|p| p.site_id == site_id)
            .unwrap_or_else(|| panic!("no profile for site {site_id}"));
        sites.push(Site {
            site_id: profile.site_id,
            lanes: profile.lanes,
            speed_limit: profile.speed_limit,
            markings: profile.markings,
            aadt: profile.aadt,
            shape: profile.shape,
            image_path: None,
        });

        let speed_dist = Normal::new(profile.mean_speed, profile.speed_sd).unwrap();
        let cw_dist = Normal::new(profile.crossing_width, 1.5).unwrap();
        let park_dist = Normal::new(profile.dist_park, 0.04).unwrap();
        let school_dist = Normal::new(profile.dist_school, 0.25).unwrap();
        let ped_dist = Poisson::new(0.45f64).unwrap();

        for _ in 0..n_events {
            sequence += 1;
            let speed: f64 = speed_dist.sample(&mut rng).clamp(0.9, 90.6);
            let speed = (speed * 10.0).round() / 10.0;
            // crossing geometry and facility distances vary a little with
            // the exact crossing location of each event
            let crossing_width =
                (cw_dist.sample(&mut rng).clamp(36.0, 63.0) * 2.0).round() / 2.0;
            let dist_park =
                (park_dist.sample(&mut rng).clamp(0.05, 0.60) * 100.0).round() / 100.0;
            let dist_school =
                (school_dist.sample(&mut rng).clamp(0.15, 4.40) * 100.0).round() / 100.0;

            let oncoming = rng.random::<f64>() < profile.oncoming_rate;
            let ody = if !oncoming {
                "None"
            } else if rng.random::<f64>() < sigmoid(2.2 - 0.16 * speed) {
                "Yield"
            } else {
                "Not yield"
            };

            let n_ped = 1 + (ped_dist.sample(&mut rng) as u64).min(10);
            let ped_roll: f64 = rng.random();
            let mut acc = 0.0;
            let mut ped_type = PEDESTRIAN_TYPES[0].0;
            for (name, share) in PEDESTRIAN_TYPES {
                acc += share;
                if ped_roll < acc {
                    ped_type = name;
                    break;
                }
            }

            use coefficients::*;
            let eta = INTERCEPT
                + CROSSING_WIDTH * crossing_width
                + RESTAURANTS_BARS * f64::from(profile.restaurants)
                + VEHICLE_SPEED * speed
                + DIST_SCHOOL * dist_school
                + PARKING_LOTS * f64::from(profile.parking_lots)
                + ODY_YIELD * f64::from(ody == "Yield")
                + DIST_PARK * dist_park;
            let outcome = rng.random::<f64>() < sigmoid(eta);

            let mut values = std::collections::HashMap::with_capacity(schema.len());
            values.insert("vehicle_speed".into(), Value::Numeric(speed));
            values.insert(
                "opposite_direction_yield".into(),
                Value::Categorical(ody.to_string()),
            );
            values.insert(
                "speed_limit".into(),
                Value::Categorical(profile.speed_limit.to_string()),
            );
            values.insert("crossing_width".into(), Value::Numeric(crossing_width));
            values.insert("bike_lanes".into(), yes_no(profile.bike_lanes));
            values.insert("signage".into(), yes_no(profile.signage));
            values.insert(
                "markings".into(),
                Value::Categorical(profile.markings.to_string()),
            );
            values.insert(
                "number_of_bus_stops".into(),
                Value::Numeric(f64::from(profile.bus_stops)),
            );
            values.insert("single_family_housing".into(), yes_no(profile.single_family));
            values.insert("apartments".into(), yes_no(profile.apartments));
            values.insert("commercial_buildings".into(), yes_no(profile.commercial));
            values.insert(
                "gas_station_convenience_store".into(),
                yes_no(profile.gas_station),
            );
            values.insert("restaurants_bars".into(), yes_no(profile.restaurants));
            values.insert("parking_lots".into(), yes_no(profile.parking_lots));
            values.insert(
                "on_street_parking".into(),
                Value::Categorical(profile.on_street_parking.to_string()),
            );
            values.insert("distance_to_nearest_park".into(), Value::Numeric(dist_park));
            values.insert(
                "distance_to_nearest_school".into(),
                Value::Numeric(dist_school),
            );
            values.insert(
                "number_of_pedestrians".into(),
                Value::Numeric(n_ped as f64),
            );
            values.insert(
                "pedestrian_type".into(),
                Value::Categorical(ped_type.to_string()),
            );

            // observation gaps on event-level variables only
            if rng.random::<f64>() < missing_rate {
                let victim = match rng.random_range(0..3) {
                    0 => "number_of_pedestrians",
                    1 => "pedestrian_type",
                    _ => "opposite_direction_yield",
                };
                values.insert(victim.into(), Value::Missing);
            }

            events.push(InteractionEvent {
                event_id: format!("E{sequence:05}"),
                site_id,
                values,
                outcome,
            });
        }
    }
    (events, sites)
}

/// The 18-site event counts of the full deployment (3,314 events).
pub fn full_site_counts() -> Vec<(u32, usize)> {
    site_profiles().iter().map(|p| (p.site_id, p.events)).collect()
}

/// A small four-site layout for the bundled offline demo: 55 training
/// events (sites 16 and 4) and 30 test events (sites 3 and 9).
pub fn demo_site_counts() -> Vec<(u32, usize)> {
    vec![(16, 30), (4, 25), (3, 18), (9, 12)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_events, load_sites, write_events, write_sites};

    #[test]
    fn generation_is_deterministic() {
        let counts = demo_site_counts();
        let (a, _) = generate(7, &counts, 0.0);
        let (b, _) = generate(7, &counts, 0.0);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.event_id, y.event_id);
            assert_eq!(x.outcome, y.outcome);
            assert_eq!(
                x.value("vehicle_speed").as_numeric(),
                y.value("vehicle_speed").as_numeric()
            );
        }
        let (c, _) = generate(8, &counts, 0.0);
        assert!(a.iter().zip(&c).any(|(x, y)| x.outcome != y.outcome
            || x.value("vehicle_speed") != y.value("vehicle_speed")));
    }

    #[test]
    fn full_counts_sum_to_published_total() {
        let counts = full_site_counts();
        assert_eq!(counts.len(), 18);
        assert_eq!(counts.iter().map(|(_, n)| n).sum::<usize>(), 3314);
        let (events, sites) = generate(1, &counts, 0.0);
        assert_eq!(events.len(), 3314);
        assert_eq!(sites.len(), 18);
        let site3 = events.iter().filter(|e| e.site_id == 3).count();
        let site16 = events.iter().filter(|e| e.site_id == 16).count();
        assert_eq!(site3, 640);
        assert_eq!(site16, 841);
    }

    #[test]
    fn generated_events_validate_against_schema_round_trip() {
        let (events, sites) = generate(3, &demo_site_counts(), 0.05);
        let schema = default_schema();
        let dir = tempfile::tempdir().unwrap();
        let events_path = dir.path().join("events.csv");
        let sites_path = dir.path().join("sites.csv");
        write_events(&events_path, &events, &schema).unwrap();
        write_sites(&sites_path, &sites).unwrap();
        let back = load_events(&events_path, &schema).unwrap();
        assert_eq!(back.len(), events.len());
        let back_sites = load_sites(&sites_path).unwrap();
        assert_eq!(back_sites.len(), sites.len());
    }

    #[test]
    fn both_outcome_classes_present_in_demo_layout() {
        let (events, _) = generate(7, &demo_site_counts(), 0.0);
        let yields = events.iter().filter(|e| e.outcome).count();
        assert!(yields > 0);
        assert!(yields < events.len());
    }
}
