use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use starseg::config::RunConfig;
use starseg::constraint::verify_star_shape;
use starseg::imageio::{load_image, load_mask, make_synthetic, save_grid_png, save_mask, Shape};
use starseg::multilevel::run_multilevel;
use starseg::Error;
use starseg_cli::outputs::write_outputs;
use starseg_cli::service::{router, AppState, DEFAULT_WORKERS};

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_STALLED: u8 = 3;

#[derive(Parser)]
#[command(name = "starseg", version, about = "Star-shape constrained image segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment an image (PNG or binary PGM) with a JSON run configuration.
    Segment {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic test image and its ground-truth mask.
    Synth {
        /// disk, star5, occluded_disk, two_blobs, square or crescent
        #[arg(long)]
        shape: String,
        /// Fraction of pixels replaced by impulse noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check whether a binary mask is star-shaped with respect to a center.
    Verify {
        #[arg(long)]
        mask: PathBuf,
        /// Center as `X,Y` in [0,1]^2.
        #[arg(long, value_parser = parse_point)]
        center: [f64; 2],
    },
    /// Run the HTTP job service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Overridden by STARSEG_DATA_DIR when set.
        #[arg(long, default_value = "starseg-data")]
        data_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WORKERS)]
        workers: usize,
    },
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected X,Y but got {s:?}"));
    }
    let x = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let y = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok([x, y])
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn input_error(e: Error) -> ExitCode {
    let code = if e.is_validation() || matches!(e, Error::Io(_) | Error::Image(_)) {
        EXIT_INVALID
    } else {
        EXIT_FAILURE
    };
    fail(code, e)
}

fn segment(image: &Path, config: &Path, out: &Path) -> ExitCode {
    let cfg = match std::fs::read_to_string(config)
        .map_err(Error::from)
        .and_then(|t| RunConfig::from_json(&t))
    {
        Ok(c) => c,
        Err(e) => return input_error(e),
    };
    let grid = match load_image(image, cfg.size) {
        Ok(g) => g,
        Err(e) => return input_error(e),
    };
    let res = match run_multilevel(&grid, &cfg, &mut |_| true) {
        Ok(r) => r,
        Err(e @ Error::NonFinite { .. }) => return fail(EXIT_STALLED, format!("solver diverged: {e}")),
        Err(e) if e.is_validation() => return fail(EXIT_INVALID, e),
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    if let Err(e) = write_outputs(out, &grid, &res) {
        return fail(EXIT_FAILURE, e);
    }
    if res.stalled {
        let capped: Vec<usize> = res.levels.iter().filter(|l| !l.converged).map(|l| l.level).collect();
        return fail(
            EXIT_STALLED,
            format!("solver stalled: levels {capped:?} reached max_outer_iters; partial outputs in {}", out.display()),
        );
    }
    ExitCode::SUCCESS
}

fn synth(shape: &str, noise: f64, size: usize, seed: u64, out: &Path) -> ExitCode {
    let run = || -> starseg::Result<serde_json::Value> {
        let syn = make_synthetic(Shape::parse(shape)?, size, noise, seed)?;
        std::fs::create_dir_all(out)?;
        let (image, truth) = (out.join("image.png"), out.join("truth.png"));
        save_grid_png(&syn.grid, &image)?;
        save_mask(&syn.truth, size, &truth)?;
        Ok(json!({
            "image": image,
            "truth": truth,
            "centers": syn.centers,
            "corrupted": syn.corrupted,
        }))
    };
    match run() {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json value"));
            ExitCode::SUCCESS
        }
        Err(e) => input_error(e),
    }
}

fn verify(mask: &Path, center: [f64; 2]) -> ExitCode {
    let report = load_mask(mask).and_then(|(m, n)| verify_star_shape(&m, n, center));
    match report {
        Ok(r) => {
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
            if r.is_star {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
        Err(e) => input_error(e),
    }
}

fn serve(host: &str, port: u16, data_dir: PathBuf, workers: usize) -> ExitCode {
    let data_dir = std::env::var_os("STARSEG_DATA_DIR").map(PathBuf::from).unwrap_or(data_dir);
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    let result = runtime.block_on(async {
        let state = AppState::open(&data_dir, workers)?;
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        println!("listening on http://{} (data dir {})", listener.local_addr()?, data_dir.display());
        axum::serve(listener, router(state)).await
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(EXIT_FAILURE, e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Segment { image, config, out } => segment(&image, &config, &out),
        Command::Synth { shape, noise, size, seed, out } => synth(&shape, noise, size, seed, &out),
        Command::Verify { mask, center } => verify(&mask, center),
        Command::Serve { port, host, data_dir, workers } => serve(&host, port, data_dir, workers),
    }
}
