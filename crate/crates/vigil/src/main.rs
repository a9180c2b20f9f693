fn main() {
    std::process::exit(vigil::cli::run());
}
