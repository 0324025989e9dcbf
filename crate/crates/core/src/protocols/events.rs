use crate::model::Opinion;

/// Observer of send/accept events. Never consumes randomness.
pub trait EventSink {
    fn on_send(&mut self, _round: u64, _sender: usize, _payload: Opinion) {}
    fn on_accept(&mut self, _round: u64, _receiver: usize, _payload: Opinion) {}
}

/// Discards everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoEvents;

impl EventSink for NoEvents {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    Send {
        round: u64,
        sender: usize,
        payload: Opinion,
    },
    Accept {
        round: u64,
        receiver: usize,
        payload: Opinion,
    },
}

impl Event {
    pub fn complemented(self) -> Self {
        match self {
            Event::Send {
                round,
                sender,
                payload,
            } => Event::Send {
                round,
                sender,
                payload: payload.complement(),
            },
            Event::Accept {
                round,
                receiver,
                payload,
            } => Event::Accept {
                round,
                receiver,
                payload: payload.complement(),
            },
        }
    }
}

/// Records every event in order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventSink for EventLog {
    fn on_send(&mut self, round: u64, sender: usize, payload: Opinion) {
        self.events.push(Event::Send {
            round,
            sender,
            payload,
        });
    }

    fn on_accept(&mut self, round: u64, receiver: usize, payload: Opinion) {
        self.events.push(Event::Accept {
            round,
            receiver,
            payload,
        });
    }
}
