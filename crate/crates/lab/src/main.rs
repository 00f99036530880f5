fn main() {
    toral_lab::cli::init_logging();
    std::process::exit(toral_lab::cli::run(std::env::args_os()));
}
