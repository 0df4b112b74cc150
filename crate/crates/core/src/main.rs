fn main() {
    std::process::exit(rawnoise::cli::run(std::env::args_os()));
}
