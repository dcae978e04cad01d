fn main() {
    std::process::exit(legged_fg::cli::run(std::env::args_os()));
}
