fn main() {
    std::process::exit(mobigraph::cli::dispatch(std::env::args()));
}
