fn main() {
    std::process::exit(neuronav::cli::run(std::env::args_os()));
}
