//! A vehicle publishes point clouds locally. Nothing reaches the cloud until
//! a bridge republishes the topic under an exported name.
//!
//! `cargo run --example gated_bus`

use std::time::Duration;

use orchsim::bus::{Bus, CrossNodePolicy, Delivery, LinkSpec, MessageEnvelope, NodeId, Topic, TopicPattern};
use orchsim::kernel::{Kernel, VirtualTime};

#[derive(Debug)]
enum Action {
    Sense(u32),
    Deliver(Delivery),
    StartBridge,
}

impl From<Delivery> for Action {
    fn from(d: Delivery) -> Self {
        Action::Deliver(d)
    }
}

#[derive(Clone, Debug)]
enum Handler {
    Bridge(Topic),
    Sink,
}

fn main() {
    let (vehicle, cloud) = (NodeId::new("vehicle-0"), NodeId::new("cloud"));
    let local = Topic::new("/vehicle/0/points").unwrap();
    let remote = Topic::new("/cloud/vehicle/0/points").unwrap();

    let mut bus: Bus<Handler> = Bus::new(CrossNodePolicy::Gated);
    bus.add_node(vehicle.clone());
    bus.add_node(cloud.clone());
    bus.set_link(LinkSpec {
        endpoint_a: vehicle.clone(),
        endpoint_b: cloud.clone(),
        latency: Duration::from_millis(15),
        symmetric: true,
    })
    .unwrap();
    bus.subscribe(&cloud, "/cloud/vehicle/+/points", Handler::Sink).unwrap();

    let mut kernel: Kernel<Action> = Kernel::new(0);
    kernel.schedule(Action::Sense(0), VirtualTime::ZERO).unwrap();
    kernel.schedule(Action::StartBridge, VirtualTime::from_millis(250)).unwrap();

    kernel.run_until(VirtualTime::from_millis(500), |k, action| match action {
        Action::Sense(n) => {
            let env = MessageEnvelope::new(local.clone(), k.now(), vehicle.clone(), "points", vec![n as u8; 12]);
            bus.publish(k, env).unwrap();
            k.schedule_in(Action::Sense(n + 1), Duration::from_millis(100));
        }
        Action::StartBridge => {
            println!("{:>10}  bridge up", k.now());
            bus.subscribe_pattern(&vehicle, TopicPattern::exact(&local), Handler::Bridge(remote.clone()))
                .unwrap();
            bus.export(TopicPattern::exact(&remote));
        }
        Action::Deliver(d) => {
            let Some((node, handler)) = bus.accept(&d) else { return };
            match handler.clone() {
                Handler::Bridge(to) => {
                    let env = MessageEnvelope::new(to, k.now(), node.clone(), "points", d.envelope.payload.clone());
                    bus.publish(k, env).unwrap();
                }
                Handler::Sink => println!(
                    "{:>10}  cloud got {} #{} published at {}",
                    k.now(),
                    d.envelope.topic,
                    d.envelope.sequence,
                    d.envelope.publish_time
                ),
            }
        }
    });
    println!("{:?}", bus.stats());
}
