#include <random>

#include "doctest.h"
#include "druidlet/fixtures.hpp"
#include "druidlet/object_model.hpp"

using namespace druidlet;

TEST_CASE("small integer tagging") {
  CHECK(tagSmallInt(0).word == 1);
  CHECK(tagSmallInt(5).word == 11);
  CHECK(tagSmallInt(-1).word == 0xFFFFFFFFFFFFFFFFull);
  CHECK_THROWS_AS(tagSmallInt(kSmallIntMax + 1), VmError);
  CHECK_THROWS_AS(tagSmallInt(kSmallIntMin - 1), VmError);

  // tag/untag round-trip over random payloads
  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; i++) {
    int64_t n = int64_t(rng()) >> 2;  // 62-bit signed
    Value v = tagSmallInt(n);
    CHECK(isSmallInt(v));
    CHECK(smallIntValue(v) == n);
  }
}

TEST_CASE("integer object predicate") {
  CHECK(isIntegerObject(Value{11}));
  CHECK_FALSE(isIntegerObject(Value{16}));
  CHECK_FALSE(isIntegerObject(Value{kNilRef}));
}

TEST_CASE("object layout and slot access") {
  MemorySpace mem(1 << 20, 0);
  uint64_t obj = mem.allocate(kClassArray, 3);
  CHECK(obj == kHeapStart);
  CHECK(mem.classIdOf(obj) == kClassArray);
  CHECK(mem.numSlotsOf(obj) == 3);

  // slot 1 lives at byte offset 16 from the object base
  mem.storePointerUnchecked(1, Value{obj}, tagSmallInt(9));
  CHECK(mem.load64(obj + 16) == tagSmallInt(9).word);
  CHECK(mem.fetchPointer(1, Value{obj}).word == tagSmallInt(9).word);

  // fresh slots read back as nil
  CHECK(mem.fetchPointer(0, Value{obj}) == Value{kNilRef});

  // store then fetch round-trip
  mem.storePointerUnchecked(2, Value{obj}, tagSmallInt(7));
  CHECK(mem.fetchPointer(2, Value{obj}).word == 15);

  // store nil everywhere, read it back
  for (uint32_t i = 0; i < 3; i++) mem.storePointerUnchecked(i, Value{obj}, Value{kNilRef});
  for (uint32_t i = 0; i < 3; i++) CHECK(mem.fetchPointer(i, Value{obj}) == Value{kNilRef});

  CHECK_THROWS_AS(mem.fetchPointer(3, Value{obj}), VmError);
  CHECK_THROWS_AS(mem.storePointerUnchecked(3, Value{obj}, Value{kNilRef}), VmError);
  CHECK_THROWS_AS(mem.fetchPointer(0, tagSmallInt(4)), VmError);
}

TEST_CASE("specials are pinned") {
  MemorySpace mem(1 << 20, 0);
  CHECK(mem.classIdOf(kNilRef) == kClassUndefinedObject);
  CHECK(mem.classIdOf(kFalseRef) == kClassFalse);
  CHECK(mem.classIdOf(kTrueRef) == kClassTrue);
  CHECK(mem.numSlotsOf(kNilRef) == 0);
}

TEST_CASE("program loading is deterministic") {
  std::string text = fibProgram(10);
  ProgramImage a = loadProgram(text);
  ProgramImage b = loadProgram(text);
  CHECK(a.memory.heapBytes() == b.memory.heapBytes());
  CHECK(a.entryMethod == b.entryMethod);
}

TEST_CASE("loader rejects duplicate selectors in one class") {
  std::string text =
      ".class Main id=16\n"
      ".method main sel=100 args=0 temps=0\n  pushNil\n  returnTop\n"
      ".method main sel=100 args=0 temps=0\n  pushNil\n  returnTop\n"
      ".entry Main main\n";
  CHECK_THROWS_AS(loadProgram(text), VmError);
}

TEST_CASE("empty program reports an unresolved entry") {
  try {
    loadProgram("");
    FAIL("expected a parse error");
  } catch (const VmError& e) {
    CHECK(e.kind == ErrorKind::ParseError);
    CHECK(std::string(e.what()).find("entry unresolved") != std::string::npos);
  }
}

TEST_CASE("loader rejects undefined references") {
  CHECK_THROWS_AS(loadProgram(".class Main id=16\n"
                              ".method main sel=100 args=0 temps=0\n"
                              "  send missing: 1\n  returnTop\n"
                              ".entry Main main\n"),
                  VmError);
  CHECK_THROWS_AS(loadProgram(".class Main id=16\n"
                              ".method main sel=100 args=0 temps=0\n"
                              "  pushNil\n  returnTop\n"
                              ".entry Other main\n"),
                  VmError);
}

TEST_CASE("loader enforces reserved ids") {
  CHECK_THROWS_AS(loadProgram(".class Array id=3\n.entry Array x\n"), VmError);
  CHECK_THROWS_AS(loadProgram(".class Main id=2\n.entry Main x\n"), VmError);
  // selector '+' must keep its reserved id
  CHECK_THROWS_AS(loadProgram(".class SmallInteger id=0\n"
                              ".method + sel=9 args=1 temps=0 prim=1\n"
                              "  returnReceiver\n"
                              ".entry SmallInteger +\n"),
                  VmError);
}

TEST_CASE("disassembly reassembles to an identical heap") {
  ProgramImage a = loadProgram(fibProgram(10));
  std::string listing = disassembleProgram(a);
  ProgramImage b = loadProgram(listing);
  CHECK(a.memory.heapBytes() == b.memory.heapBytes());
}

TEST_CASE("primitive methods require a fallback body") {
  CHECK_THROWS_AS(loadProgram(".class SmallInteger id=0\n"
                              ".method + sel=1 args=1 temps=0 prim=1\n"
                              ".entry SmallInteger +\n"),
                  VmError);
}
