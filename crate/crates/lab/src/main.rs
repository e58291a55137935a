fn main() {
    std::process::exit(noisebias_lab::cli::run_command(std::env::args_os()));
}
