fn main() {
    std::process::exit(triccati_bench::cli::run(std::env::args_os()));
}
