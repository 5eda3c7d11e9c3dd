fn main() {
    std::process::exit(wickgraph::cli::run());
}
