fn main() {
    std::process::exit(sliding_omp::cli::run(std::env::args_os()));
}
