//! Writes the bundled synthetic marketplace-listings table.
//!
//! The columns and marginal frequencies follow the published description of a
//! T-shirt listings sample; the event mechanism is an invented cure mixture
//! with covariate effects, administratively censored at the first hour of 2021.
//! Price is written in thousands of JPY so that its coefficient is on the same
//! scale as the dummies.
//!
//! ```text
//! cargo run -p fhcure-cli --example synthetic_listings -- data/synthetic_listings.csv
//! ```

use std::error::Error;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal};

const ROWS: usize = 1000;
const SEED: u64 = 2020;
const MIN_HOURS: f64 = 25.0;

const CATEGORY: &[(&str, f64)] = &[("Men's", 55.2), ("Women's", 44.8)];
const CONDITION: &[(&str, f64)] = &[
    ("No noticeable damage or stains", 43.4),
    ("Brand new/unused", 30.2),
    ("Almost unused", 13.3),
    ("Slightly damaged/stained", 10.7),
    ("Damaged/stained", 2.1),
    ("Overall poor condition", 0.3),
];
const LEAD_TIME: &[(&str, f64)] = &[("1-2 days", 51.4), ("2-3 days", 34.5), ("4-7 days", 14.1)];
const PAYER: &[(&str, f64)] = &[("seller", 99.03), ("buyer", 0.97)];
const MONTH: &[(&str, f64)] = &[
    ("Jan", 3.0),
    ("Feb", 3.5),
    ("Mar", 6.3),
    ("Apr", 10.0),
    ("May", 19.2),
    ("Jun", 14.4),
    ("Jul", 13.6),
    ("Aug", 12.5),
    ("Sep", 7.2),
    ("Oct", 4.4),
    ("Nov", 3.1),
    ("Dec", 2.6),
];
const ANONYMOUS: &[(&str, f64)] = &[("yes", 86.5), ("no", 13.5)];
const SIZE: &[(&str, f64)] = &[
    ("M", 36.7),
    ("L", 22.3),
    ("S", 14.9),
    ("FREE SIZE", 12.4),
    ("XL(LL)", 8.8),
    ("XS(SS)", 2.1),
    ("2XL(3L)", 1.8),
    ("3XL(4L)", 0.6),
    ("4XL(5L) or larger", 0.3),
    ("XXS or smaller", 0.2),
    ("missing", 0.1),
];

/// 2020 is a leap year.
const DAYS_IN_MONTH: [u32; 12] = [31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

struct Picker {
    labels: Vec<&'static str>,
    dist: WeightedIndex<f64>,
}

impl Picker {
    fn new(table: &[(&'static str, f64)]) -> Self {
        Self {
            labels: table.iter().map(|(l, _)| *l).collect(),
            dist: WeightedIndex::new(table.iter().map(|(_, w)| *w)).expect("positive weights"),
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        self.dist.sample(rng)
    }

    fn label(&self, i: usize) -> &'static str {
        self.labels[i]
    }
}

fn main() -> Result<(), Box<dyn Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "data/synthetic_listings.csv".into());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let category = Picker::new(CATEGORY);
    let condition = Picker::new(CONDITION);
    let lead = Picker::new(LEAD_TIME);
    let payer = Picker::new(PAYER);
    let month = Picker::new(MONTH);
    let anonymous = Picker::new(ANONYMOUS);
    let size = Picker::new(SIZE);
    // median 1500, upper quartile about 2800
    let price_dist = LogNormal::new(1500f64.ln(), 0.93)?;
    let noise = Normal::new(0.0, 1.0)?;

    let mut w = csv::Writer::from_path(&out)?;
    w.write_record([
        "time_hours",
        "sold",
        "category",
        "condition",
        "shipping_lead_time",
        "shipping_payer",
        "listing_month",
        "anonymous_shipping",
        "price_kjpy",
        "size",
    ])?;

    let mut written = 0;
    while written < ROWS {
        let cat = category.draw(&mut rng);
        let cond = condition.draw(&mut rng);
        let ld = lead.draw(&mut rng);
        let pay = payer.draw(&mut rng);
        let m = month.draw(&mut rng);
        let anon = anonymous.draw(&mut rng);
        let sz = size.draw(&mut rng);
        let price = (price_dist.sample(&mut rng) / 10.0).round().clamp(30.0, 1500.0) * 10.0;

        // hours from listing to 2021-01-01 00:00
        let day = rng.random_range(0..DAYS_IN_MONTH[m]);
        let start_day: u32 = DAYS_IN_MONTH[..m].iter().sum::<u32>() + day;
        let censor = (366 - start_day) as f64 * 24.0 - rng.random_range(0.0..24.0);

        let log_price = (price / 1500.0).ln();
        let summer = (3..=7).contains(&m);
        let eta_inc = 1.0 + 0.3 * f64::from(cat == 1 && summer) - 0.25 * log_price
            + [0.0, 0.3, 0.2, -0.3, -0.6, -1.0][cond]
            - 0.15 * ld as f64
            + 0.2 * f64::from(anon == 0)
            - 0.4 * f64::from(pay == 1)
            + if summer { 0.2 } else { -0.2 };
        let sold_eventually = rng.random::<f64>() < 1.0 / (1.0 + (-eta_inc).exp());
        let event_time = if sold_eventually {
            let eta_lat = -0.35 * log_price + 0.25 * f64::from(cat == 1) - 0.2 * ld as f64 + if summer { 0.3 } else { 0.0 };
            24.0 + (350f64.ln() - eta_lat + 1.4 * noise.sample(&mut rng)).exp()
        } else {
            f64::INFINITY
        };

        let (time, sold) = if event_time <= censor { (event_time, 1) } else { (censor, 0) };
        if time < MIN_HOURS {
            continue;
        }
        w.write_record([
            format!("{:.1}", time),
            sold.to_string(),
            category.label(cat).to_string(),
            condition.label(cond).to_string(),
            lead.label(ld).to_string(),
            payer.label(pay).to_string(),
            month.label(m).to_string(),
            anonymous.label(anon).to_string(),
            format!("{:.2}", price / 1000.0),
            size.label(sz).to_string(),
        ])?;
        written += 1;
    }
    w.flush()?;
    eprintln!("wrote {written} rows to {out}");
    Ok(())
}
