/// State of the stream unit's control FSM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FsmState {
    #[default]
    Idle,
    /// Accepting input beats; each written beat is also computed on.
    Write,
    /// Re-reading the buffered vector for the remaining output tiles.
    Read,
}

impl FsmState {
    pub const ALL: [FsmState; 3] = [FsmState::Idle, FsmState::Write, FsmState::Read];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Idle => "idle",
            Self::Write => "write",
            Self::Read => "read",
        }
    }
}

/// Signals sampled by the FSM in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FsmInputs {
    /// Upstream has a valid beat.
    pub tvalid: bool,
    /// The unit's output side can advance.
    pub tready: bool,
    pub inp_buf_full: bool,
    /// The buffered vector has been fully computed.
    pub comp_done: bool,
}

/// The transition function.
///
/// Overlapping edges resolve toward progress: a full buffer is read before
/// anything is written, and a finished vector goes straight to writing the
/// next one when input is waiting.
pub fn fsm_step(state: FsmState, i: FsmInputs) -> FsmState {
    use FsmState::*;
    match state {
        Idle if i.tready && i.inp_buf_full => Read,
        Idle if i.tvalid && i.tready => Write,
        Idle => Idle,
        Write if i.tready && i.inp_buf_full => Read,
        Write if !i.tvalid || !i.tready => Idle,
        Write => Write,
        Read if i.tvalid && i.comp_done => Write,
        Read if !i.tready || i.comp_done => Idle,
        Read => Read,
    }
}
