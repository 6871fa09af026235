fn main() {
    let code = armbench::harness::cli::run(
        std::env::args_os(),
        |k| std::env::var(k).ok(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    std::process::exit(code);
}
