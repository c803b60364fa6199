#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace druidlet {

// A value is one 64-bit word. LSB=1 tags a small integer whose payload is
// word >> 1 (arithmetic). LSB=0 is a heap reference: a byte offset into the
// unified memory space, 8-byte aligned.
struct Value {
  uint64_t word = 0;

  friend bool operator==(Value a, Value b) { return a.word == b.word; }
  friend bool operator!=(Value a, Value b) { return a.word != b.word; }
};

constexpr int64_t kSmallIntMin = -(int64_t(1) << 62);
constexpr int64_t kSmallIntMax = (int64_t(1) << 62) - 1;

inline bool isSmallInt(Value v) { return (v.word & 1) != 0; }
inline int64_t smallIntValue(Value v) { return int64_t(v.word) >> 1; }
inline bool smallIntFits(int64_t n) { return n >= kSmallIntMin && n <= kSmallIntMax; }

enum class ErrorKind {
  None,
  RangeError,
  ParseError,
  FuelExhausted,
  MustBeBoolean,
  DoesNotUnderstand,
  StackOverflow,
  HeapExhausted,
  UnknownBytecode,
  VmBug,
};

const char* errorKindName(ErrorKind k);

// Runtime errors unwind to the VM boundary; the harness compares kinds
// across tiers.
struct VmError : std::runtime_error {
  ErrorKind kind;
  explicit VmError(ErrorKind k, const std::string& msg)
      : std::runtime_error(msg), kind(k) {}
};

struct VmConfig {
  uint64_t heapBytes = 64ull << 20;
  uint64_t stackBytes = 1ull << 20;
  uint64_t fuel = 1000000000ull;
  int compileThreshold = 2;
};

}  // namespace druidlet
