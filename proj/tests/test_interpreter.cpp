#include "doctest.h"
#include "druidlet/fixtures.hpp"
#include "druidlet/interpreter.hpp"

using namespace druidlet;

namespace {

VmConfig testConfig() {
  VmConfig cfg;
  cfg.heapBytes = 8u << 20;
  cfg.stackBytes = 256u << 10;
  return cfg;
}

RunResult runText(const std::string& text, uint64_t fuel = 100000000ull) {
  VmConfig cfg = testConfig();
  cfg.fuel = fuel;
  return interpret(loadProgram(text), cfg);
}

int64_t fibRef(int n) { return n < 2 ? n : fibRef(n - 1) + fibRef(n - 2); }

std::string mainOnly(const std::string& body) {
  return standardPrelude() + ".class Main id=16\n.method main sel=100 args=0 temps=4\n" +
         body + ".entry Main main\n";
}

}  // namespace

TEST_CASE("fib fixture evaluates to the reference recurrence") {
  RunResult r = runText(fibProgram(10));
  CHECK(r.error == ErrorKind::None);
  CHECK(smallIntValue(r.result) == fibRef(10));
  CHECK(smallIntValue(r.result) == 55);
}

TEST_CASE("taken conditional jump skips the fall-through path") {
  // pushTrue; jumpTrue 1 skips pushNil; the target pushes true again.
  RunResult r = runText(mainOnly("  pushTrue\n  jumpTrue 1\n  pushNil\n  pushTrue\n  returnTop\n"));
  CHECK(r.error == ErrorKind::None);
  CHECK(r.result.word == kTrueRef);
}

TEST_CASE("conditional jump on a non-boolean raises MustBeBoolean") {
  RunResult r = runText(mainOnly("  pushConstant 3\n  jumpTrue 1\n  pushNil\n  pushNil\n  returnTop\n"));
  CHECK(r.error == ErrorKind::MustBeBoolean);
  REQUIRE_FALSE(r.trace.empty());
  CHECK(r.trace.back().kind == TraceEvent::Kind::Error);
  CHECK(r.trace.back().error == ErrorKind::MustBeBoolean);
}

TEST_CASE("special send fast path computes inline") {
  RunResult r = runText(mainOnly("  pushConstant 3\n  pushConstant 4\n  addSend\n  returnTop\n"));
  CHECK(r.error == ErrorKind::None);
  CHECK(smallIntValue(r.result) == 7);
  // the semantic send is recorded even though the fast path ran
  EffectTrace sends = equivalenceTrace(r.trace);
  REQUIRE(sends.size() == 1);
  CHECK(sends[0].classId == kClassSmallInteger);
  CHECK(sends[0].selector == kSelectorAdd);
}

TEST_CASE("primitive overflow falls back to the bytecode body") {
  // max smi + 1 overflows; the prelude fallback for + returns the receiver
  std::string body = "  pushConstant 4611686018427387903\n  pushConstant 1\n  addSend\n  returnTop\n";
  RunResult r = runText(mainOnly(body));
  CHECK(r.error == ErrorKind::None);
  CHECK(smallIntValue(r.result) == kSmallIntMax);
  bool sawPrimFail = false;
  for (auto& e : r.trace) sawPrimFail |= e.kind == TraceEvent::Kind::PrimFailed;
  CHECK(sawPrimFail);
}

TEST_CASE("boolean cheat consumes the following conditional jump") {
  // 2 = 2 followed by jumpTrue: the comparison drives the jump directly.
  std::string body =
      "  pushConstant 2\n  pushConstant 2\n  eqSend\n  jumpTrue 1\n"
      "  pushNil\n  pushConstant 9\n  returnTop\n";
  RunResult r = runText(mainOnly(body));
  CHECK(r.error == ErrorKind::None);
  CHECK(smallIntValue(r.result) == 9);
}

TEST_CASE("boolean cheat pushes the boolean when no jump follows") {
  std::string body = "  pushConstant 2\n  pushConstant 3\n  lessSend\n  returnTop\n";
  RunResult r = runText(mainOnly(body));
  CHECK(r.result.word == kTrueRef);
}

TEST_CASE("send to an array method dispatches through the class table") {
  std::string body =
      "  pushNil\n  pushConstant 5\n  send newArray: 1\n  send size 0\n  returnTop\n";
  RunResult r = runText(mainOnly(body));
  CHECK(r.error == ErrorKind::None);
  CHECK(smallIntValue(r.result) == 5);
  EffectTrace sends = equivalenceTrace(r.trace);
  REQUIRE(sends.size() == 2);
  CHECK(sends[0].classId == kClassUndefinedObject);
  CHECK(sends[1].classId == kClassArray);
}

TEST_CASE("special send on a non-integer falls through to a full send") {
  // array + 1 -> full send of '+' to Array, which is not defined
  std::string body =
      "  pushNil\n  pushConstant 2\n  send newArray: 1\n  pushConstant 1\n  addSend\n  returnTop\n";
  RunResult r = runText(mainOnly(body));
  CHECK(r.error == ErrorKind::DoesNotUnderstand);
  EffectTrace sends = equivalenceTrace(r.trace);
  REQUIRE(sends.size() == 2);
  CHECK(sends[1].classId == kClassArray);
  CHECK(sends[1].selector == kSelectorAdd);
}

TEST_CASE("array store and load round-trip through primitives") {
  std::string body =
      "  pushNil\n  pushConstant 3\n  send newArray: 1\n  storePopTemp 0\n"
      "  pushTemp 0\n  pushConstant 2\n  pushConstant 41\n  send at:put: 2\n  popTop\n"
      "  pushTemp 0\n  pushConstant 2\n  send at: 1\n  returnTop\n";
  RunResult r = runText(mainOnly(body));
  CHECK(r.error == ErrorKind::None);
  CHECK(smallIntValue(r.result) == 41);
}

TEST_CASE("at: out of bounds fails into the fallback") {
  std::string body =
      "  pushNil\n  pushConstant 3\n  send newArray: 1\n"
      "  pushConstant 4\n  send at: 1\n  returnTop\n";
  RunResult r = runText(mainOnly(body));
  CHECK(r.error == ErrorKind::None);
  // fallback body returns the receiver (the array itself, a heap ref)
  CHECK_FALSE(isSmallInt(r.result));
  bool sawPrimFail = false;
  for (auto& e : r.trace) sawPrimFail |= e.kind == TraceEvent::Kind::PrimFailed;
  CHECK(sawPrimFail);
}

TEST_CASE("size on a non-array heap object uses the slow branch") {
  std::string body = "  pushNil\n  send size 0\n  returnTop\n";
  RunResult r = runText(mainOnly(body));
  CHECK(r.error == ErrorKind::None);
  CHECK(smallIntValue(r.result) == 0);
  bool sawPrimFail = false;
  for (auto& e : r.trace) sawPrimFail |= e.kind == TraceEvent::Kind::PrimFailed;
  CHECK_FALSE(sawPrimFail);  // the slow branch succeeds in the interpreter
}

TEST_CASE("pushNewArray fills with nil and the slow-path marker is semantically inert") {
  std::string fast = "  pushNewArray 5\n  send size 0\n  returnTop\n";
  std::string slow = "  pushNewArray 133\n  send size 0\n  returnTop\n";  // 133 = 0x85
  RunResult rf = runText(mainOnly(fast));
  RunResult rs = runText(mainOnly(slow));
  CHECK(smallIntValue(rf.result) == 5);
  CHECK(smallIntValue(rs.result) == 5);

  std::string firstSlot = "  pushNewArray 2\n  pushConstant 1\n  send at: 1\n  returnTop\n";
  CHECK(runText(mainOnly(firstSlot)).result.word == kNilRef);
}

TEST_CASE("identity compare works on any values") {
  std::string body = "  pushNil\n  pushNil\n  identSend\n  returnTop\n";
  CHECK(runText(mainOnly(body)).result.word == kTrueRef);
  std::string body2 = "  pushNil\n  pushConstant 1\n  identSend\n  returnTop\n";
  CHECK(runText(mainOnly(body2)).result.word == kFalseRef);
}

TEST_CASE("fuel exhaustion is reported") {
  std::string body = "loop:\n  longJump loop\n";
  RunResult r = runText(mainOnly(body), 1000);
  CHECK(r.error == ErrorKind::FuelExhausted);
}

TEST_CASE("execution is deterministic") {
  RunResult a = runText(fibProgram(12));
  RunResult b = runText(fibProgram(12));
  CHECK(a.result == b.result);
  CHECK(a.counters.executedBytecodes == b.counters.executedBytecodes);
  CHECK(equivalenceTrace(a.trace) == equivalenceTrace(b.trace));
}

TEST_CASE("temporaries include arguments, then locals") {
  std::string text = standardPrelude() +
                     ".class SmallInteger id=0\n"
                     ".method probe: sel=110 args=1 temps=1\n"
                     "  pushTemp 0\n  storePopTemp 1\n"
                     "  pushTemp 1\n  pushConstant 10\n  addSend\n  returnTop\n"
                     ".class Main id=16\n"
                     ".method main sel=100 args=0 temps=0\n"
                     "  pushConstant 7\n  pushConstant 32\n  send probe: 1\n  returnTop\n"
                     ".entry Main main\n";
  RunResult r = runText(text);
  CHECK(r.error == ErrorKind::None);
  CHECK(smallIntValue(r.result) == 42);
}

TEST_CASE("benchmark fixtures produce their expected results") {
  // the two cheap fixtures; the heavy ones run in the harness suite
  RunResult fib = runText(fixtureNamed("fib").text);
  CHECK(smallIntValue(fib.result) == fixtureNamed("fib").expectedResult);
  RunResult sieve = runText(fixtureNamed("sieve").text);
  CHECK(smallIntValue(sieve.result) == fixtureNamed("sieve").expectedResult);
  RunResult bubble = runText(fixtureNamed("bubble-sort").text);
  CHECK(smallIntValue(bubble.result) == fixtureNamed("bubble-sort").expectedResult);
  RunResult trees = runText(fixtureNamed("binarytrees-lite").text);
  CHECK(smallIntValue(trees.result) == fixtureNamed("binarytrees-lite").expectedResult);
}
