#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "druidlet/common.hpp"

namespace druidlet {

// Object layout: an 8-byte header (classId in the low word, numSlots in the
// high word), then numSlots pointer slots at byte offsets 8, 16, ...
// Method objects additionally carry their bytecode bytes after the slots.
//
// The value stack lives in the same address space as the heap, above
// heapCapacity, so frame slots and heap slots are addressed uniformly by
// byte offset.

constexpr uint64_t kNilRef = 0;
constexpr uint64_t kFalseRef = 16;
constexpr uint64_t kTrueRef = 32;
constexpr uint64_t kHeapStart = 48;

constexpr uint32_t kClassSmallInteger = 0;
constexpr uint32_t kClassUndefinedObject = 1;
constexpr uint32_t kClassFalse = 2;
constexpr uint32_t kClassTrue = 3;
constexpr uint32_t kClassArray = 4;
constexpr uint32_t kClassCompiledMethod = 5;
constexpr uint32_t kFirstUserClassId = 8;

// Method object slot indices; literals start right after the info slots.
constexpr uint32_t kMethodNumArgsSlot = 0;
constexpr uint32_t kMethodNumTempsSlot = 1;
constexpr uint32_t kMethodPrimitiveSlot = 2;
constexpr uint32_t kMethodNumLiteralsSlot = 3;
constexpr uint32_t kMethodBytecodeCountSlot = 4;
constexpr uint32_t kLiteralStart = 5;

// Special selectors have reserved ids so the VM's special-send bytecodes can
// name them without consulting program text.
constexpr uint16_t kSelectorAdd = 1;
constexpr uint16_t kSelectorSub = 2;
constexpr uint16_t kSelectorMul = 3;
constexpr uint16_t kSelectorEq = 4;
constexpr uint16_t kSelectorLess = 5;

Value tagSmallInt(int64_t n);  // throws RangeError outside the payload range
bool isIntegerObject(Value v);

class MemorySpace {
 public:
  MemorySpace(uint64_t heapCapacity, uint64_t stackCapacity);

  uint64_t load64(uint64_t addr) const;
  void store64(uint64_t addr, uint64_t w);
  uint8_t loadByte(uint64_t addr) const;
  void storeBytes(uint64_t addr, const uint8_t* data, uint64_t n);

  // Bump-allocates header + slots (+ extraBytes of raw payload), slots
  // nil-initialized. Throws HeapExhausted at capacity.
  uint64_t allocate(uint32_t classId, uint32_t numSlots, uint64_t extraBytes = 0);

  uint32_t classIdOf(uint64_t ref) const;
  uint32_t numSlotsOf(uint64_t ref) const;

  Value fetchPointer(uint32_t index, Value obj) const;
  void storePointerUnchecked(uint32_t index, Value obj, Value v);

  uint64_t heapCapacity() const { return heapCapacity_; }
  uint64_t stackBase() const { return heapCapacity_; }
  uint64_t stackLimit() const { return heapCapacity_ + stackCapacity_; }
  uint64_t allocationTop() const { return allocTop_; }

  // Ensures backing storage exists for stack bytes [stackBase, addr).
  void growStackTo(uint64_t addr);

  const std::vector<uint8_t>& heapBytes() const { return heap_; }
  void resetFrom(const MemorySpace& image);

 private:
  std::vector<uint8_t> heap_;
  std::vector<uint8_t> stack_;
  uint64_t heapCapacity_;
  uint64_t stackCapacity_;
  uint64_t allocTop_;

  friend class ProgramLoader;
};

// Method accessors over raw memory.
struct MethodRef {
  uint64_t ref = 0;

  int numArgs(const MemorySpace& m) const;
  int numTemps(const MemorySpace& m) const;
  int primitiveId(const MemorySpace& m) const;
  int numLiterals(const MemorySpace& m) const;
  int bytecodeCount(const MemorySpace& m) const;
  Value literalAt(const MemorySpace& m, int i) const;
  uint64_t bytecodeBase(const MemorySpace& m) const;
  uint8_t bytecodeAt(const MemorySpace& m, int pc) const;
};

struct ClassInfo {
  std::string name;
  std::map<uint16_t, uint64_t> methods;  // selectorId -> method object ref
};

struct ProgramImage {
  // Capacity is a limit, not an allocation; the backing store grows lazily.
  MemorySpace memory{1ull << 30, 0};
  std::map<uint32_t, ClassInfo> classTable;
  std::map<uint16_t, std::string> selectorNames;
  std::map<std::string, uint16_t> selectorIds;
  uint32_t entryClassId = 0;
  uint16_t entrySelectorId = 0;
  uint64_t entryMethod = 0;

  uint64_t lookupMethod(uint32_t classId, uint16_t selectorId) const;
  std::string selectorName(uint16_t id) const;
};

// Parses the method-assembly text format:
//   .class <Name> id=<u32>
//   .method <selector> sel=<u16> args=<n> temps=<n> prim=<id>
//   <one mnemonic per line>
//   .entry <Class> <selector>
// Comments start with ';'. Loading is deterministic: identical text yields a
// byte-identical heap.
ProgramImage loadProgram(const std::string& text);

std::string disassembleMethod(const ProgramImage& image, uint64_t methodRef);
std::string disassembleProgram(const ProgramImage& image);

}  // namespace druidlet
