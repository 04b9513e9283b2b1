use core::fmt;

/// Identifier of a base object in a shared memory.
///
/// `Cell` objects are allocated one at a time. `Bit` objects belong to an
/// unbounded test&set bit array and exist implicitly for every index.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectId {
    Cell(u32),
    Bit { array: u32, index: u64 },
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectId::Cell(id) => write!(f, "o{id}"),
            ObjectId::Bit { array, index } => write!(f, "b{array}[{index}]"),
        }
    }
}

/// Handle to an unbounded array of test&set bits, all initially 0.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitArrayId(pub u32);

impl BitArrayId {
    pub fn bit(self, index: u64) -> ObjectId {
        ObjectId::Bit {
            array: self.0,
            index,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    /// Multi-valued read/write register holding a `u64`.
    Register,
    /// Single bit supporting read and test&set; only ever moves 0 -> 1.
    TasBit,
    /// Register holding an `(u64, u64)` pair, read and written as a unit.
    PairRegister,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Word(u64),
    Pair(u64, u64),
}

impl Value {
    pub fn word(self) -> Option<u64> {
        match self {
            Value::Word(w) => Some(w),
            Value::Pair(..) => None,
        }
    }

    pub fn pair(self) -> Option<(u64, u64)> {
        match self {
            Value::Pair(a, b) => Some((a, b)),
            Value::Word(_) => None,
        }
    }

    pub fn fits(self, kind: Kind) -> bool {
        matches!(
            (kind, self),
            (Kind::Register, Value::Word(_))
                | (Kind::TasBit, Value::Word(0))
                | (Kind::PairRegister, Value::Pair(..))
        )
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Word(w) => write!(f, "{w}"),
            Value::Pair(a, b) => write!(f, "({a},{b})"),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Primitive {
    Read,
    Write(Value),
    TestAndSet,
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Read => "read",
            Primitive::Write(_) => "write",
            Primitive::TestAndSet => "test&set",
        }
    }

    pub fn argument(&self) -> Option<Value> {
        match self {
            Primitive::Write(v) => Some(*v),
            _ => None,
        }
    }

    pub fn legal_on(&self, kind: Kind) -> bool {
        match (self, kind) {
            (Primitive::Read, _) => true,
            (Primitive::TestAndSet, k) => k == Kind::TasBit,
            (Primitive::Write(v), k) => k != Kind::TasBit && v.fits(k),
        }
    }
}

/// A primitive together with its target object: the unit of step accounting.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Access {
    pub object: ObjectId,
    pub primitive: Primitive,
}

impl Access {
    pub fn read(object: ObjectId) -> Self {
        Access {
            object,
            primitive: Primitive::Read,
        }
    }

    pub fn write(object: ObjectId, value: Value) -> Self {
        Access {
            object,
            primitive: Primitive::Write(value),
        }
    }

    pub fn test_and_set(object: ObjectId) -> Self {
        Access {
            object,
            primitive: Primitive::TestAndSet,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AccessError {
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("{primitive} is not legal on {object} ({kind:?})")]
    IllegalPrimitive {
        object: ObjectId,
        kind: Kind,
        primitive: &'static str,
    },
    #[error("initial value {value} is outside the domain of {kind:?}")]
    BadInitialValue { kind: Kind, value: Value },
    #[error("value {0} does not fit the native cell width")]
    NativeWidth(Value),
}
