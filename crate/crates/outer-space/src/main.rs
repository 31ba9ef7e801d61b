fn main() {
    std::process::exit(outer_space::cli::run(std::env::args_os()));
}
