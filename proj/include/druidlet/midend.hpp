#pragma once

#include <deque>
#include <map>
#include <string>
#include <vector>

#include "druidlet/druid_ir.hpp"
#include "druidlet/handler_eval.hpp"
#include "druidlet/object_model.hpp"

namespace druidlet {

// ---- optimization passes (each returns true when it changed the IR) ----

bool foldConstants(Ir& ir);
bool copyPropagate(Ir& ir);
bool globalValueNumbering(Ir& ir);
bool simplifyBranches(Ir& ir);
bool eliminateDeadCode(Ir& ir);

struct PassStep {
  std::string pass;
  int liveInstructions = 0;
  bool changed = false;
};

struct PipelineResult {
  bool fixpoint = false;
  int rounds = 0;
  std::vector<PassStep> trace;
  std::vector<std::string> ssaProblems;  // non-empty means a pass broke the IR
};

struct PipelineOptions {
  std::vector<std::string> order = defaultPassOrder();
  int maxRounds = 10;
  bool checkSsaAfterEachPass = true;
  static std::vector<std::string> defaultPassOrder() {
    return {"fold", "copyprop", "gvn", "fold", "branch-simplify", "dce"};
  }
};

PipelineResult runPipeline(Ir& ir, const PipelineOptions& options = PipelineOptions());

// ---- IR evaluation oracle ----

struct MockObject {
  uint32_t classId = 0;
  std::vector<int64_t> slots;
};

// A self-contained machine state for evaluating one handler: operand stack,
// a few heap objects, frame slots, operand bytes, and scripted send results.
struct MockState {
  std::vector<int64_t> stack;
  int64_t receiver = int64_t(kNilRef);
  std::vector<int64_t> args;
  uint8_t opcode = 0;
  uint8_t operandBytes[2] = {0, 0};
  int64_t bytecodePc = 0;
  std::vector<int64_t> temps;
  std::map<int64_t, MockObject> heap;
  int64_t methodRef = 0;
  std::vector<int64_t> methodSlots;  // indexed like real method slots
  std::deque<int64_t> sendResults;
  int64_t nextRef = 1024;

  MockState();
  int64_t allocate(uint32_t classId, int slots);
};

struct EvalEffect {
  enum class Kind { Push, Pop, StoreSlot, StoreTemp, Send, MustBeBoolean, Alloc, Jump };
  Kind kind;
  int64_t a = 0, b = 0, c = 0;
  friend bool operator==(const EvalEffect& x, const EvalEffect& y) {
    return x.kind == y.kind && x.a == y.a && x.b == y.b && x.c == y.c;
  }
};

struct EvalOutcome {
  enum class Kind { EndHandler, JumpTo, Return, PrimFail, Deopt, Error };
  Kind kind = Kind::EndHandler;
  int64_t value = 0;  // Return value or JumpTo target
  std::string error;
};

struct EvalResult {
  std::vector<EvalEffect> effects;
  EvalOutcome outcome;
  MockState finalState;
};

// Evaluates an IR graph over a mock state. Errors (malformed IR, stuck
// evaluation) surface as outcome Error.
EvalResult irEval(const Ir& ir, const MockState& initial);

// Evaluates the handler definition itself over the same mock state, under
// the chosen guided-block view, normalized to the same effect vocabulary.
EvalResult handlerEval(const VMDefinition& vmdef, const HandlerDef& def, uint8_t opcode,
                       const MockState& initial, IgnoreView view);

// Oracle comparison: a deferring IR outcome (PrimFail in a primitive or a
// deoptimization) is acceptable when nothing was mutated first — the runtime
// re-executes the handler in the interpreter from the same state.
bool resultsEquivalent(const EvalResult& handler, const EvalResult& translated,
                       std::string* why = nullptr);

}  // namespace druidlet
