fn main() {
    std::process::exit(beamlab::cli::main_with_args(std::env::args_os()));
}
