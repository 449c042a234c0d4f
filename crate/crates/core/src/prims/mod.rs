//! Concurrency primitives shared by both tries.

pub mod copy_cell;
pub mod epoch;
pub mod min_register;
pub mod push_list;
pub mod registry;
pub mod sorted_list;

pub use copy_cell::{CopyCell, PendingCopy};
pub use epoch::{Collector, Guard};
pub use min_register::{CasMinRegister, MinReg, MinRegister};
pub use push_list::{AnnounceList, Entry, PushList};
pub use sorted_list::{ListCell, Order, SortedList, NEG_INF, POS_INF};
