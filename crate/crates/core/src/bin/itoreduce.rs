fn main() {
    std::process::exit(itoreduce::cli::run());
}
