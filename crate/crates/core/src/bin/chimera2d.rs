fn main() {
    std::process::exit(chimera2d::cli::cmd_dispatch(std::env::args_os()));
}
