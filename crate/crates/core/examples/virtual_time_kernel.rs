//! Schedules a periodic sensor tick and a one-shot alarm, then runs the
//! kernel for two virtual seconds. Output is identical on every run.
//!
//! `cargo run --example virtual_time_kernel`

use std::time::Duration;

use orchsim::kernel::{Kernel, VirtualTime};
use rand::Rng;

#[derive(Debug)]
enum Action {
    Tick(u32),
    Alarm,
}

fn main() {
    let mut kernel: Kernel<Action> = Kernel::new(7);
    kernel.schedule(Action::Tick(0), VirtualTime::ZERO).unwrap();
    let alarm = kernel.schedule(Action::Alarm, VirtualTime::from_millis(1500)).unwrap();
    kernel.schedule(Action::Alarm, VirtualTime::from_millis(1200)).unwrap();
    kernel.cancel(alarm);

    let stats = kernel.run_until(VirtualTime::from_secs(2), |k, action| match action {
        Action::Tick(n) => {
            let jitter: u64 = k.rng().gen_range(0..5);
            println!("{:>10}  tick {n} (jitter draw {jitter})", k.now());
            k.schedule_in(Action::Tick(n + 1), Duration::from_millis(400));
        }
        Action::Alarm => println!("{:>10}  alarm", k.now()),
    });
    println!("{} events fired, stopped at {}", stats.events_fired, stats.final_time);
}
