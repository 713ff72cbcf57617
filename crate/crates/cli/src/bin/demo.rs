//! Serves the demo inventory service until killed.

use clap::Parser;

#[derive(Parser)]
#[command(name = "schemafuzz-demo", version, about = "Serve the demo service with planted defects")]
struct Cli {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

fn main() -> std::io::Result<()> {
    let cli = Cli::parse();
    let server = schemafuzz::demo::serve(&format!("{}:{}", cli.host, cli.port))?;
    println!("{}", server.base_url());
    println!("schema: {}/openapi.json, reset: POST {}/reset", server.base_url(), server.base_url());
    server.join();
    Ok(())
}
