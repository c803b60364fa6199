#pragma once

#include <memory>
#include <vector>

#include "druidlet/common.hpp"
#include "druidlet/handler_lang.hpp"
#include "druidlet/object_model.hpp"

namespace druidlet {

struct TraceEvent {
  enum class Kind { Send, PrimFailed, Deopt, Error };
  Kind kind;
  uint32_t classId = 0;   // Send: receiver class
  uint16_t selector = 0;  // Send
  int primitiveId = 0;    // PrimFailed
  ErrorKind error = ErrorKind::None;

  friend bool operator==(const TraceEvent& a, const TraceEvent& b) {
    return a.kind == b.kind && a.classId == b.classId && a.selector == b.selector &&
           a.primitiveId == b.primitiveId && a.error == b.error;
  }
};

using EffectTrace = std::vector<TraceEvent>;

// The observable behavior compared across tiers: result, error kind, sends,
// and primitive failures. Deopt events are tier-specific bookkeeping.
EffectTrace equivalenceTrace(const EffectTrace& t);

struct Counters {
  uint64_t executedBytecodes = 0;
  uint64_t sends = 0;
  uint64_t lookups = 0;
  uint64_t primFails = 0;
  uint64_t deopts = 0;
  uint64_t compiledMethods = 0;
  uint64_t compileFailures = 0;
  uint64_t generatorRuns = 0;
  uint64_t rtlExecuted = 0;
};

struct RunResult {
  Value result{};
  ErrorKind error = ErrorKind::None;
  EffectTrace trace;
  Counters counters;
};

class Vm;

// Installed by the compiled tier. tryCall either executes the method in
// compiled form (receiver and arguments are the top argc+1 stack entries;
// they are replaced by the result) and returns true, or declines.
class JitTier {
 public:
  virtual ~JitTier() = default;
  virtual bool tryCall(uint64_t methodRef, int argc) = 0;
};

// Frame layout, byte offsets relative to fp (receiver and arguments sit
// below fp where the caller pushed them):
//   fp-8*(argc+1)  receiver
//   fp-8*argc+8k   argument k
//   fp+0   saved fp
//   fp+8   saved pc (caller resume point)
//   fp+16  method reference
//   fp+24  argument count
//   fp+32  temps, then the operand stack
constexpr int64_t kFrameSavedFp = 0;
constexpr int64_t kFrameSavedPc = 8;
constexpr int64_t kFrameMethod = 16;
constexpr int64_t kFrameArgCount = 24;
constexpr int64_t kFrameTempBase = 32;
constexpr uint64_t kNoCaller = ~0ull;

class Vm {
 public:
  Vm(const ProgramImage& image, const VmConfig& cfg);
  ~Vm();

  // Runs the entry method to completion under the configured tiers.
  RunResult run();

  void setJit(std::unique_ptr<JitTier> jit);
  void setTracing(bool on) { traceEnabled_ = on; }

  const ProgramImage& image() const { return image_; }
  const VMDefinition& vmdef() const { return vmdef_; }
  MemorySpace& mem() { return mem_; }
  Counters& counters() { return counters_; }
  EffectTrace& trace() { return trace_; }
  const VmConfig& config() const { return cfg_; }

  uint32_t classOf(Value v) const;
  void recordSend(uint32_t classId, uint16_t selector);
  void recordPrimFailed(int primitiveId);
  void recordDeopt();

  // --- entry points used by the compiled tier ---

  // Interprets until the frame at barrierFp returns; returns its result.
  Value interpretLoop(uint64_t barrierFp);

  // Activates a method whose receiver+args are the top argc+1 words at
  // stack position sp. Runs interpreted (primitive first when present).
  // Returns the result; on return sp_ = sp - 8*(argc+1).
  Value activateInterpreted(uint64_t methodRef, uint64_t sp, int argc);

  // Resumes interpretation of a deoptimized frame and runs it to its return.
  Value resumeAfterDeopt(uint64_t fp, uint64_t sp, uint64_t methodRef, int64_t pc);

  // Full method lookup (counted); returns 0 when absent.
  uint64_t lookupMethod(uint32_t classId, uint16_t selectorId);

  uint64_t fuelRemaining() const { return fuel_; }
  void consumeRtlFuel(uint64_t instructions);

  uint64_t sp() const { return sp_; }

 private:
  friend struct InterpHandlerCtx;
  friend struct InterpPrimCtx;

  const ProgramImage& image_;
  const VMDefinition& vmdef_;
  VmConfig cfg_;
  MemorySpace mem_;
  std::unique_ptr<JitTier> jit_;

  EffectTrace trace_;
  bool traceEnabled_ = true;
  Counters counters_;

  // current activation
  uint64_t fp_ = 0;
  uint64_t sp_ = 0;
  int64_t pc_ = 0;
  uint64_t method_ = 0;
  uint64_t bytecodeBase_ = 0;
  int bytecodeCount_ = 0;
  uint8_t currentBytecode_ = 0;
  uint8_t operandBytes_[2] = {0, 0};

  uint64_t fuel_ = 0;
  uint64_t rtlFuel_ = 0;

  void setCurrentMethod(uint64_t methodRef);
  void buildFrame(uint64_t methodRef, int argc, int64_t savedPc);
  void pushWord(uint64_t w);
  uint64_t popWord();
  int64_t operandStackBase() const;

  // Dispatches a send: receiver+args are the top argc+1 entries. May build a
  // frame (changing pc/method) or complete the call, pushing the result.
  void dispatchSend(uint16_t selectorId, int argc, uint64_t barrierFp);

  // Runs a primitive handler against the current stack. Returns true on
  // success (result pushed), false when the primitive failed.
  bool activatePrimitive(const HandlerDef& prim, int primitiveId);

  Value doReturn(Value result, uint64_t barrierFp, bool& hitBarrier);
};

// interpret() from a fresh image: tier-0 reference execution.
RunResult interpret(const ProgramImage& image, const VmConfig& cfg);

}  // namespace druidlet
