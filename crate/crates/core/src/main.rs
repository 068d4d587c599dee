fn main() {
    std::process::exit(rkhs_ratio::cli::run(std::env::args_os()));
}
