use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use sketchvox_bench::{host, stroke_messages, strokes};
use sketchvox_core::chat::ChatMode;
use sketchvox_core::session::{replay, ClientMessage};

fn dispatch(c: &mut Criterion) {
    let msgs: Vec<ClientMessage> = strokes(20, 30, 3).iter().flat_map(stroke_messages).collect();
    c.bench_function("dispatch/20_strokes", |b| {
        b.iter_batched(
            host,
            |mut h| {
                for m in &msgs {
                    h.dispatch(m.clone());
                }
            },
            BatchSize::SmallInput,
        )
    });
}

fn insight_and_chat(c: &mut Criterion) {
    let msgs: Vec<ClientMessage> = strokes(20, 30, 5).iter().flat_map(stroke_messages).collect();
    let prepared = || {
        let mut h = host();
        for m in &msgs {
            h.dispatch(m.clone());
        }
        h
    };
    c.bench_function("dispatch/open_chatbot", |b| {
        b.iter_batched(prepared, |mut h| h.dispatch(ClientMessage::OpenChatbot), BatchSize::LargeInput)
    });
    c.bench_function("dispatch/image_chat", |b| {
        b.iter_batched(
            || {
                let mut h = prepared();
                h.dispatch(ClientMessage::OpenChatbot);
                h
            },
            |mut h| {
                h.dispatch(ClientMessage::ChatSubmit {
                    mode: ChatMode::Image,
                    text: "rounder".into(),
                    region: None,
                })
            },
            BatchSize::LargeInput,
        )
    });
}

fn replay_log(c: &mut Criterion) {
    let mut h = host();
    for (i, s) in strokes(60, 30, 9).iter().enumerate() {
        for m in stroke_messages(s) {
            h.dispatch(m);
        }
        if i % 15 == 14 {
            h.dispatch(ClientMessage::OpenChatbot);
            h.dispatch(ClientMessage::CloseChatbot);
        }
    }
    let log = h.log().clone();
    c.bench_function("replay/60_strokes_4_insights", |b| b.iter(|| replay(&log, None).unwrap()));
}

criterion_group!(benches, dispatch, insight_and_chat, replay_log);
criterion_main!(benches);
