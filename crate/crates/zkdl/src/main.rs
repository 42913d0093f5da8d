fn main() {
    std::process::exit(zkdl::cli::run(std::env::args()));
}
