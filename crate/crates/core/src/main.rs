fn main() {
    std::process::exit(lasso_ridge::cli::run());
}
