//! Standalone stub endpoint for dry runs:
//! `mathsift-stub [--port N] [--mode echo|garbage]`

use mathsift_client::stub::{StubBehavior, StubConfig, StubServer};

fn main() {
    let mut port = 8081u16;
    let mut behavior = StubBehavior::Echo;

    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--port" => {
                let value = args.next().unwrap_or_default();
                port = value.parse().unwrap_or_else(|_| {
                    eprintln!("invalid --port value `{value}`");
                    std::process::exit(2);
                });
            }
            "--mode" => match args.next().as_deref() {
                Some("echo") => behavior = StubBehavior::Echo,
                Some("garbage") => behavior = StubBehavior::Garbage,
                other => {
                    eprintln!("unknown --mode {other:?} (expected echo|garbage)");
                    std::process::exit(2);
                }
            },
            "--help" | "-h" => {
                println!("usage: mathsift-stub [--port N] [--mode echo|garbage]");
                return;
            }
            other => {
                eprintln!("unknown argument `{other}`");
                std::process::exit(2);
            }
        }
    }

    let server = StubServer::start_on(
        &format!("127.0.0.1:{port}"),
        StubConfig { behavior, ..Default::default() },
    );
    println!("stub endpoint listening at {}", server.url());
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}
