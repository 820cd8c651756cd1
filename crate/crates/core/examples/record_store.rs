//! Appends envelopes to an NDJSON store, reopens it, and queries by topic
//! pattern and time window.
//!
//! `cargo run --example record_store`

use orchsim::bus::{MessageEnvelope, Topic, TopicPattern};
use orchsim::kernel::VirtualTime;
use orchsim::recorder::{RecordEntry, RecordStore};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("orchsim-record-store-example");
    let path = dir.join("recording_demo_1.ndjson");
    let mut store = RecordStore::create(&path)?;
    let session = store.begin_session();
    for k in 0..20u64 {
        let t = VirtualTime::from_millis(k * 50);
        let (topic, schema) = if k % 5 == 0 {
            ("/cloud/vehicle/0/points", "points")
        } else {
            ("/cloud/vehicle/0/pose", "pose")
        };
        let env = MessageEnvelope::new(Topic::new(topic)?, t, "cloud".into(), schema, k.to_le_bytes().to_vec());
        store.append(RecordEntry::from_envelope(&env, t))?;
    }
    println!("{:?}", store.stats(session)?);
    store.close()?;

    let store = RecordStore::open_read(&path)?;
    let all = store.query(&TopicPattern::new("#")?, VirtualTime::ZERO, VirtualTime::MAX)?;
    let clouds = store.query(
        &TopicPattern::new("/cloud/vehicle/+/points")?,
        VirtualTime::from_millis(200),
        VirtualTime::from_millis(800),
    )?;
    println!("{} entries in {}", all.len(), path.display());
    for e in clouds {
        println!("  #{} {} at {}", e.store_sequence, e.topic, e.publish_time);
    }
    Ok(())
}
