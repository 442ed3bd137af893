//! Writes the bundled synthetic price snapshot `data/data.csv`.
//!
//! One market factor drives five stocks with different betas and
//! idiosyncratic volatilities; the index follows the factor. Business days
//! 2010-01-01..2012-12-31 without New Year's Day and Christmas. Seeded, so
//! reruns reproduce the file byte for byte.
//!
//! Usage: `cargo run --example generate_data [-- <path>]`

use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SEED: u64 = 20_100_101;

struct Stock {
    symbol: &'static str,
    start: f64,
    drift: f64,
    beta: f64,
    idio: f64,
}

const STOCKS: [Stock; 5] = [
    Stock {
        symbol: "AAPL",
        start: 30.57,
        drift: 0.0006,
        beta: 1.05,
        idio: 0.0125,
    },
    Stock {
        symbol: "GOOG",
        start: 313.69,
        drift: 0.0002,
        beta: 1.0,
        idio: 0.0125,
    },
    Stock {
        symbol: "GS",
        start: 155.12,
        drift: -0.0002,
        beta: 1.45,
        idio: 0.0135,
    },
    Stock {
        symbol: "IBM",
        start: 114.38,
        drift: 0.0004,
        beta: 0.75,
        idio: 0.0075,
    },
    Stock {
        symbol: "T",
        start: 20.28,
        drift: 0.0004,
        beta: 0.5,
        idio: 0.0075,
    },
];

const INDEX_START: f64 = 1132.99;
const MARKET_DRIFT: f64 = 0.0003;
const MARKET_VOL: f64 = 0.0105;
const INDEX_NOISE: f64 = 0.0004;

fn business_days() -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date");
    let end = NaiveDate::from_ymd_opt(2012, 12, 31).expect("valid date");
    let mut out = Vec::new();
    while d <= end {
        let weekend = matches!(d.weekday(), Weekday::Sat | Weekday::Sun);
        let holiday = (d.month(), d.day()) == (1, 1) || (d.month(), d.day()) == (12, 25);
        if !weekend && !holiday {
            out.push(d);
        }
        d = d.succ_opt().expect("in range");
    }
    out
}

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/data.csv").to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut prices: Vec<f64> = STOCKS.iter().map(|s| s.start).collect();
    let mut index = INDEX_START;
    let mut csv = String::from("Date");
    for s in &STOCKS {
        csv.push(',');
        csv.push_str(s.symbol);
    }
    csv.push_str(",^GSPC\n");
    for (k, day) in business_days().into_iter().enumerate() {
        if k > 0 {
            let f = MARKET_DRIFT + MARKET_VOL * z();
            for (p, s) in prices.iter_mut().zip(&STOCKS) {
                *p *= 1.0 + s.drift + s.beta * (f - MARKET_DRIFT) + s.idio * z();
            }
            index *= 1.0 + f + INDEX_NOISE * z();
        }
        write!(csv, "{day}")?;
        for p in &prices {
            write!(csv, ",{p:.2}")?;
        }
        writeln!(csv, ",{index:.2}")?;
    }
    std::fs::write(&path, csv)?;
    eprintln!("wrote {path}");
    Ok(())
}
