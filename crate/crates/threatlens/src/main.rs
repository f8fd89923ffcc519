use std::ffi::OsString;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<OsString> = std::env::args_os().collect();
    std::process::exit(threatlens::cli::run(&args));
}
